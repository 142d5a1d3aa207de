"""Forward-backward dynamic programming over alignments at a fixed registration.

Provides the forward table and its total, stochastic and max-product
tracebacks, exact proposal densities, and the gap-prior normalizing constant.
A path's weight is the product of its match weights times exp(-u) for the
affine gap penalty u; in sequence mode the match and skip weights additionally
carry the tempered substitution factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import _dpcore
from .alignment import AlignmentPath, GapParams
from .geometry import Registration, apply

if TYPE_CHECKING:
    from .posterior import Hyperparams, ModelState
    from .structio import Chain
    from .submodel import TemperedModel

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DpWeights:
    """Log-domain step weights for one alignment problem."""

    match_logweight: np.ndarray  # (n, m)
    skipx_logweight: np.ndarray  # (n,) per-residue factors, zeros outside sequence mode
    skipy_logweight: np.ndarray  # (m,)
    open_logweight: float  # -(open_pen + ext_pen)
    ext_logweight: float  # -ext_pen
    allow_simultaneous: bool = True

    def __post_init__(self) -> None:
        mlw = np.ascontiguousarray(self.match_logweight, dtype=np.float64)
        sx = np.ascontiguousarray(self.skipx_logweight, dtype=np.float64)
        sy = np.ascontiguousarray(self.skipy_logweight, dtype=np.float64)
        if mlw.ndim != 2 or sx.shape != (mlw.shape[0],) or sy.shape != (mlw.shape[1],):
            raise ValueError("inconsistent weight shapes")
        object.__setattr__(self, "match_logweight", mlw)
        object.__setattr__(self, "skipx_logweight", sx)
        object.__setattr__(self, "skipy_logweight", sy)

    @property
    def n(self) -> int:
        return self.match_logweight.shape[0]

    @property
    def m(self) -> int:
        return self.match_logweight.shape[1]


@dataclass
class ForwardTable:
    """Forward values stored linearly with per-row log offsets.

    The true log-domain value is log_v(i, j, k); `total` is the log of the
    summed weight of all valid paths.
    """

    weights: DpWeights
    v: np.ndarray  # (n + 1, m + 1, 3) rescaled linear values
    row_logscale: np.ndarray  # (n + 1,)
    total: float = field(init=False)

    def __post_init__(self) -> None:
        self.total = float(_dpcore.table_total(self.v, self.row_logscale))

    @property
    def n(self) -> int:
        return self.v.shape[0] - 1

    @property
    def m(self) -> int:
        return self.v.shape[1] - 1

    def log_v(self, i: int, j: int, k: int) -> float:
        val = self.v[i, j, k]
        if val <= 0.0:
            return -math.inf
        return math.log(val) + self.row_logscale[i]


def squared_distance_matrix(x_coords: np.ndarray, y_coords: np.ndarray, reg: Registration) -> np.ndarray:
    """d_ij^2 = ||y_j - (x_i R + mu')||^2 for all residue pairs."""
    moved = apply(reg, x_coords)
    diff = moved[:, None, :] - y_coords[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _sequence_tables(
    tempered: "TemperedModel", enc_x: np.ndarray, enc_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # unknown residues (code -1) contribute factor 1; route them to a padded
    # zero row/column so the gather stays branch-free
    pad_match = np.zeros((21, 21))
    pad_match[:20, :20] = tempered.match_logprob
    pad_skip = np.zeros(21)
    pad_skip[:20] = tempered.skip_logprob
    ix = np.where(enc_x >= 0, enc_x, 20)
    iy = np.where(enc_y >= 0, enc_y, 20)
    match = pad_match[ix[:, None], iy[None, :]]
    # a match where either side is unknown contributes factor 1
    known = (enc_x[:, None] >= 0) & (enc_y[None, :] >= 0)
    match = np.where(known, match, 0.0)
    return match, pad_skip[ix], pad_skip[iy]


def build_weights(
    x: "Chain",
    y: "Chain",
    reg: Registration,
    state: "ModelState",
    hp: "Hyperparams | None" = None,
    tempered: "TemperedModel | None" = None,
    enc_x: np.ndarray | None = None,
    enc_y: np.ndarray | None = None,
) -> DpWeights:
    """Assemble the DP step weights for a state at a conditioning registration."""
    d2 = squared_distance_matrix(x.coords, y.coords, reg)
    if not np.isfinite(d2).all():
        raise ValueError("non-finite inter-residue distances")
    if hp is not None and hp.error_model == "expcauchy":
        match_lw = hp.cauchy_c / (1.0 + d2 / (hp.cauchy_d0 * hp.cauchy_d0))
    else:
        if state.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {state.sigma2}")
        match_lw = (
            math.log(state.lam)
            - 1.5 * (LOG_2PI + math.log(state.sigma2))
            - d2 / (2.0 * state.sigma2)
        )
    n, m = d2.shape
    sx = np.zeros(n)
    sy = np.zeros(m)
    if tempered is not None:
        if enc_x is None or enc_y is None:
            raise ValueError("sequence mode requires encoded sequences")
        seq_match, sx, sy = _sequence_tables(tempered, enc_x, enc_y)
        match_lw = match_lw + seq_match
    return DpWeights(
        match_lw,
        sx,
        sy,
        open_logweight=-(state.gp.open_pen + state.gp.ext_pen),
        ext_logweight=-state.gp.ext_pen,
        allow_simultaneous=state.allow_simultaneous,
    )


def forward_from_weights(weights: DpWeights) -> ForwardTable:
    v, logscale = _dpcore.forward_scaled(
        np.exp(weights.match_logweight),
        np.exp(weights.skipx_logweight),
        np.exp(weights.skipy_logweight),
        math.exp(weights.open_logweight),
        math.exp(weights.ext_logweight),
        weights.allow_simultaneous,
    )
    return ForwardTable(weights, v, logscale)


def forward(
    x: "Chain",
    y: "Chain",
    reg: Registration,
    state: "ModelState",
    hp: "Hyperparams | None" = None,
    tempered: "TemperedModel | None" = None,
    enc_x: np.ndarray | None = None,
    enc_y: np.ndarray | None = None,
) -> ForwardTable:
    """Forward pass for chains x, y conditional on a registration and state."""
    return forward_from_weights(build_weights(x, y, reg, state, hp, tempered, enc_x, enc_y))


def _score_steps(steps: np.ndarray, weights: DpWeights) -> float:
    return float(
        _dpcore.score_path_log(
            steps,
            weights.match_logweight,
            weights.skipx_logweight,
            weights.skipy_logweight,
            weights.open_logweight,
            weights.ext_logweight,
        )
    )


def path_log_weight(path: AlignmentPath, weights: DpWeights) -> float:
    """Log weight of a path under the given step weights."""
    if path.n != weights.n or path.m != weights.m:
        raise ValueError(f"path is for ({path.n}, {path.m}), weights for ({weights.n}, {weights.m})")
    return _score_steps(path.steps_array(), weights)


def sample_traceback(fwd: ForwardTable, rng: np.random.Generator) -> tuple[AlignmentPath, float]:
    """Draw a path proportionally to its weight; returns (path, log density)."""
    n, m = fwd.n, fwd.m
    uniforms = rng.random(n + m + 1)
    buf = np.empty(n + m, dtype=np.int64)
    count = _dpcore.sample_path(
        fwd.v,
        math.exp(fwd.weights.open_logweight),
        math.exp(fwd.weights.ext_logweight),
        fwd.weights.allow_simultaneous,
        uniforms,
        buf,
    )
    steps = buf[buf.shape[0] - count :]
    path = AlignmentPath.from_steps_array(steps, n, m)
    log_density = _score_steps(steps, fwd.weights) - fwd.total
    return path, log_density


def proposal_log_density(path: AlignmentPath, fwd: ForwardTable) -> float:
    """Log probability that sample_traceback would return this path."""
    if path.n != fwd.n or path.m != fwd.m:
        raise ValueError(f"path is for ({path.n}, {path.m}), table for ({fwd.n}, {fwd.m})")
    return _score_steps(path.steps_array(), fwd.weights) - fwd.total


def map_traceback(weights: DpWeights) -> AlignmentPath:
    """Max-product traceback; ties prefer MATCH, then SKIP_X, then SKIP_Y."""
    n, m = weights.n, weights.m
    buf = np.empty(n + m, dtype=np.int64)
    count = _dpcore.viterbi_path(
        weights.match_logweight,
        weights.skipx_logweight,
        weights.skipy_logweight,
        weights.open_logweight,
        weights.ext_logweight,
        weights.allow_simultaneous,
        buf,
    )
    return AlignmentPath.from_steps_array(buf[buf.shape[0] - count :], n, m)


def gap_prior_log_Z(n: int, m: int, gp: GapParams, allow_simultaneous: bool = True) -> float:
    """log sum over all valid paths of exp(-u(path; gp))."""
    if n < 1 or m < 1:
        raise ValueError("both chain lengths must be >= 1")
    v, logscale = _dpcore.forward_scaled(
        np.ones((n, m)),
        np.ones(n),
        np.ones(m),
        math.exp(-(gp.open_pen + gp.ext_pen)),
        math.exp(-gp.ext_pen),
        allow_simultaneous,
    )
    return float(_dpcore.table_total(v, logscale))
