"""MCMC kernels and chain orchestration.

Per sweep: one DP-proposal local alignment move, an optional global move from
the fragment library, a conjugate draw of sigma^2, a random-walk update of the
gap penalties, and in sequence mode an exact categorical draw of the
(PAM, eta) grid cell.  Proposals that would leave fewer than 3 matches are
rejected outright: the profile registration is undefined below 3 matches.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import dpengine
from .alignment import AlignmentPath, GapParams, Step, gap_penalty, gap_stats
from .geometry import Registration, rotation_to_euler_zyz, superpose
from .posterior import (
    Hyperparams,
    ModelState,
    log_gamma_pdf,
    log_invgamma_pdf,
    profile_registration,
    seq_loglik,
    struct_loglik,
)
from .structio import Chain
from .submodel import (
    DEFAULT_ETA_GRID,
    DEFAULT_PAM_GRID,
    TemperedGrid,
    encode_sequence,
    tempered_grid,
)
from .summaries import SampleSet

logger = logging.getLogger(__name__)

FRAGMENT_WINDOW = 6
MIN_MATCHES = 3


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 100_000
    burn_in: int = 20_000
    seed: int = 0
    thin: int = 1
    global_move_prob: float = 0.1
    rw_step_open: float = 0.1
    rw_step_ext: float = 0.1
    sequence_mode: bool = False
    pam_grid: tuple[int, ...] = DEFAULT_PAM_GRID
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    delta: float = 1.0
    lam: float = 7.6
    allow_simultaneous: bool = True

    def __post_init__(self) -> None:
        if not (self.iterations > self.burn_in >= 0):
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not (0.0 <= self.global_move_prob <= 1.0):
            raise ValueError("global_move_prob must be a probability")
        if self.rw_step_open <= 0 or self.rw_step_ext <= 0:
            raise ValueError("random-walk scales must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class FragmentLibrary:
    """Registrations of all well-fitting 6-residue window pairs."""

    entries: tuple[Registration, ...]
    delta: float
    window: int = FRAGMENT_WINDOW

    def __len__(self) -> int:
        return len(self.entries)


def build_fragment_library(x: Chain, y: Chain, delta: float, window: int = FRAGMENT_WINDOW) -> FragmentLibrary:
    """Superpose every pair of consecutive window-length subsequences and keep
    registrations whose window RMSD is below delta.  Computed once at startup."""
    if len(x) < window or len(y) < window:
        logger.warning(
            "fragment library disabled: chains of lengths (%d, %d) are shorter than %d residues",
            len(x), len(y), window,
        )
        return FragmentLibrary((), delta, window)
    xw = np.lib.stride_tricks.sliding_window_view(x.coords, (window, 3)).reshape(-1, window, 3)
    yw = np.lib.stride_tricks.sliding_window_view(y.coords, (window, 3)).reshape(-1, window, 3)
    xc = xw - xw.mean(axis=1, keepdims=True)
    yc = yw - yw.mean(axis=1, keepdims=True)
    # screen all pairs by the singular-value form of the Procrustes residual
    cross = np.einsum("atk,btl->abkl", xc, yc)
    sv = np.linalg.svd(cross, compute_uv=False)
    sign = np.sign(np.linalg.det(cross))
    sign[sign == 0.0] = 1.0
    x2 = np.einsum("atk,atk->a", xc, xc)
    y2 = np.einsum("btk,btk->b", yc, yc)
    dp2 = x2[:, None] + y2[None, :] - 2.0 * (sv[..., 0] + sv[..., 1] + sign * sv[..., 2])
    dp2 = np.maximum(dp2, 0.0)
    hits = np.argwhere(np.sqrt(dp2 / window) < delta)
    entries = []
    for a, b in hits:
        try:
            reg, _ = superpose(xw[a], yw[b])
        except ValueError:
            continue  # degenerate window pair
        entries.append(reg)
    return FragmentLibrary(tuple(entries), delta, window)


def sigma2_conditional(n_matched: int, dp2: float, hp: Hyperparams) -> tuple[float, float]:
    """Shape and scale of the conjugate inverse-gamma full conditional."""
    return hp.a_sigma + 1.5 * n_matched, hp.b_sigma + 0.5 * dp2


def gibbs_sigma2(state: ModelState, hp: Hyperparams, rng: np.random.Generator) -> float:
    """Draw sigma^2 from its inverse-gamma full conditional."""
    if state.path.n_matched < MIN_MATCHES:
        raise ValueError(f"gibbs_sigma2 needs >= {MIN_MATCHES} matches")
    if state.dp2 is None:
        raise ValueError("state registration is not cached")
    shape, scale = sigma2_conditional(state.path.n_matched, state.dp2, hp)
    return scale / rng.gamma(shape)


class GapUpdateResult(NamedTuple):
    gp: GapParams
    accepted: bool
    log_z: float


def mh_gap_update(
    state: ModelState,
    hp: Hyperparams,
    rng: np.random.Generator,
    rw_step_open: float = 0.1,
    rw_step_ext: float = 0.1,
    current_log_z: float | None = None,
) -> GapUpdateResult:
    """Joint geometric random-walk update of (open_pen, ext_pen).

    The acceptance ratio combines the path's gap-prior ratio (including the
    normalizing constants), the gamma hyperprior ratios, and the log-scale
    proposal Jacobian.
    """
    gp = state.gp
    n, m = state.path.n, state.path.m
    if current_log_z is None:
        current_log_z = dpengine.gap_prior_log_Z(n, m, gp, state.allow_simultaneous)
    z = rng.standard_normal(2)
    cand = GapParams(gp.open_pen * math.exp(rw_step_open * z[0]), gp.ext_pen * math.exp(rw_step_ext * z[1]))
    cand_log_z = dpengine.gap_prior_log_Z(n, m, cand, state.allow_simultaneous)
    s, lengths = gap_stats(state.path)
    total_len = sum(lengths)
    du = (cand.open_pen - gp.open_pen) * s + (cand.ext_pen - gp.ext_pen) * total_len
    log_alpha = (
        -du
        - cand_log_z
        + current_log_z
        + log_gamma_pdf(cand.open_pen, hp.a_open, hp.b_open)
        - log_gamma_pdf(gp.open_pen, hp.a_open, hp.b_open)
        + log_gamma_pdf(cand.ext_pen, hp.a_ext, hp.b_ext)
        - log_gamma_pdf(gp.ext_pen, hp.a_ext, hp.b_ext)
        + math.log(cand.open_pen / gp.open_pen)
        + math.log(cand.ext_pen / gp.ext_pen)
    )
    if math.log(rng.random()) < log_alpha:
        return GapUpdateResult(cand, True, cand_log_z)
    return GapUpdateResult(gp, False, current_log_z)


class AlignmentMoveResult(NamedTuple):
    path: AlignmentPath
    accepted: bool
    registration: Registration
    dp2: float


def _path_target(
    x: Chain,
    y: Chain,
    path: AlignmentPath,
    reg: Registration,
    dp2: float,
    state: ModelState,
    hp: Hyperparams,
    tempered,
    enc_x,
    enc_y,
) -> float:
    # likelihood times exp(-u); Z(g,h) and the hyperpriors cancel in the ratios
    probe = ModelState(
        path, state.sigma2, state.gp, state.lam, reg, dp2,
        allow_simultaneous=state.allow_simultaneous,
    )
    val = struct_loglik(x, y, probe, hp) - gap_penalty(path, state.gp)
    if tempered is not None:
        val += seq_loglik(enc_x, enc_y, path, tempered)
    return val


def mh_alignment_local(
    x: Chain,
    y: Chain,
    state: ModelState,
    hp: Hyperparams,
    rng: np.random.Generator,
    tempered=None,
    enc_x=None,
    enc_y=None,
) -> AlignmentMoveResult:
    """DP proposal at the current registration, accepted with the reverse
    density evaluated at the proposed path's own profile registration."""
    if state.registration is None or state.dp2 is None:
        state.refresh_registration(x, y)
    fwd = dpengine.forward(x, y, state.registration, state, hp, tempered, enc_x, enc_y)
    proposal, logq_fwd = dpengine.sample_traceback(fwd, rng)
    reject = AlignmentMoveResult(state.path, False, state.registration, state.dp2)
    if proposal.n_matched < MIN_MATCHES:
        return reject
    if proposal.steps == state.path.steps:
        return AlignmentMoveResult(state.path, True, state.registration, state.dp2)
    try:
        prop_reg, prop_dp2 = profile_registration(proposal, x, y)
    except ValueError:
        return reject
    rev_fwd = dpengine.forward(x, y, prop_reg, state, hp, tempered, enc_x, enc_y)
    logq_rev = dpengine.proposal_log_density(state.path, rev_fwd)
    cur = _path_target(x, y, state.path, state.registration, state.dp2, state, hp, tempered, enc_x, enc_y)
    prop = _path_target(x, y, proposal, prop_reg, prop_dp2, state, hp, tempered, enc_x, enc_y)
    log_alpha = prop + logq_rev - cur - logq_fwd
    if math.log(rng.random()) < log_alpha:
        return AlignmentMoveResult(proposal, True, prop_reg, prop_dp2)
    return reject


def mh_alignment_global(
    x: Chain,
    y: Chain,
    state: ModelState,
    lib: FragmentLibrary,
    hp: Hyperparams,
    rng: np.random.Generator,
    tempered=None,
    enc_x=None,
    enc_y=None,
) -> AlignmentMoveResult:
    """Metropolized independence move: a registration drawn uniformly from the
    library proposes an alignment; both proposal densities use that same
    registration."""
    if state.registration is None or state.dp2 is None:
        state.refresh_registration(x, y)
    reject = AlignmentMoveResult(state.path, False, state.registration, state.dp2)
    if not lib.entries:
        return reject
    drawn = lib.entries[int(rng.integers(len(lib.entries)))]
    fwd = dpengine.forward(x, y, drawn, state, hp, tempered, enc_x, enc_y)
    proposal, logq_fwd = dpengine.sample_traceback(fwd, rng)
    if proposal.n_matched < MIN_MATCHES:
        return reject
    if proposal.steps == state.path.steps:
        return AlignmentMoveResult(state.path, True, state.registration, state.dp2)
    try:
        prop_reg, prop_dp2 = profile_registration(proposal, x, y)
    except ValueError:
        return reject
    logq_rev = dpengine.proposal_log_density(state.path, fwd)
    cur = _path_target(x, y, state.path, state.registration, state.dp2, state, hp, tempered, enc_x, enc_y)
    prop = _path_target(x, y, proposal, prop_reg, prop_dp2, state, hp, tempered, enc_x, enc_y)
    log_alpha = prop + logq_rev - cur - logq_fwd
    if math.log(rng.random()) < log_alpha:
        return AlignmentMoveResult(proposal, True, prop_reg, prop_dp2)
    return reject


def pair_skip_counts(enc_x: np.ndarray, enc_y: np.ndarray, path: AlignmentPath) -> tuple[np.ndarray, np.ndarray]:
    """Sufficient statistics of the sequence likelihood: a 20x20 matched-pair
    count table (flattened) and the 20-vector of skipped-residue counts."""
    ix, iy = path.matched_index_arrays()
    a = enc_x[ix]
    b = enc_y[iy]
    known = (a >= 0) & (b >= 0)
    pair_counts = np.bincount(a[known] * 20 + b[known], minlength=400).astype(np.float64)
    xm = np.ones(path.n, dtype=bool)
    xm[ix] = False
    ym = np.ones(path.m, dtype=bool)
    ym[iy] = False
    skipped = np.concatenate([enc_x[xm], enc_y[ym]])
    skipped = skipped[skipped >= 0]
    skip_counts = np.bincount(skipped, minlength=20).astype(np.float64)
    return pair_counts, skip_counts


def gibbs_k_eta(
    enc_x: np.ndarray,
    enc_y: np.ndarray,
    path: AlignmentPath,
    grid: TemperedGrid,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Exact categorical draw of the (PAM, eta) cell under uniform grid priors."""
    pair_counts, skip_counts = pair_skip_counts(enc_x, enc_y, path)
    loglik = grid.match_logprob_stack @ pair_counts + grid.skip_logprob_stack @ skip_counts
    p = np.exp(loglik - loglik.max())
    cum = np.cumsum(p)
    flat = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    flat = min(flat, loglik.shape[0] - 1)
    return flat // grid.n_eta, flat % grid.n_eta


def initial_path(n: int, m: int) -> AlignmentPath:
    """Leading-diagonal alignment: match the first min(n, m) residues."""
    k = min(n, m)
    steps = [Step.MATCH] * k + [Step.SKIP_X] * (n - k) + [Step.SKIP_Y] * (m - k)
    return AlignmentPath(tuple(steps), n, m)


_INIT_LIBRARY_CAP = 512


def seed_alignment(
    x: Chain,
    y: Chain,
    state: ModelState,
    hp: Hyperparams,
    lib: FragmentLibrary,
    tempered=None,
    enc_x=None,
    enc_y=None,
) -> AlignmentPath:
    """Pick the best max-product alignment over the library registrations.

    A plain diagonal start can deadlock on pairs with insertions: its profile
    registration fits nothing, so every DP proposal is near-empty and the
    monster state is never left.  Seeding from the fragment registrations
    starts the chain inside a supported basin; the diagonal remains the
    fallback when no registration beats it or the library is empty.
    """
    best = initial_path(len(x), len(y))
    try:
        reg, dp2 = profile_registration(best, x, y)
        best_score = _path_target(x, y, best, reg, dp2, state, hp, tempered, enc_x, enc_y)
    except ValueError:
        best_score = -math.inf
    entries = lib.entries
    if len(entries) > _INIT_LIBRARY_CAP:
        stride = len(entries) // _INIT_LIBRARY_CAP + 1
        entries = entries[::stride]
    # candidates are generated at a tight error scale (the prior-mean sigma^2
    # can sit above the lambda threshold where no match is worth making, which
    # would leave only the diagonal), then scored under the actual start state
    gen_state = ModelState(
        state.path, min(state.sigma2, 0.5), state.gp, state.lam,
        allow_simultaneous=state.allow_simultaneous,
    )
    for entry in entries:
        weights = dpengine.build_weights(x, y, entry, gen_state, hp, tempered, enc_x, enc_y)
        cand = dpengine.map_traceback(weights)
        if cand.n_matched < MIN_MATCHES:
            continue
        try:
            reg, dp2 = profile_registration(cand, x, y)
        except ValueError:
            continue
        score = _path_target(x, y, cand, reg, dp2, state, hp, tempered, enc_x, enc_y)
        if score > best_score:
            best, best_score = cand, score
    return best


def run_chain(
    x: Chain,
    y: Chain,
    ax: str | None,
    ay: str | None,
    cfg: ChainConfig,
    hp: Hyperparams,
    fragment_library: FragmentLibrary | None = None,
    grid: TemperedGrid | None = None,
) -> SampleSet:
    """Run one MCMC chain and return the thinned post-burn-in samples."""
    n, m = len(x), len(y)
    if min(n, m) < MIN_MATCHES:
        raise ValueError(f"chains must have at least {MIN_MATCHES} residues")
    rng = np.random.default_rng(cfg.seed)
    enc_x = encode_sequence(ax if ax is not None else x.sequence)
    enc_y = encode_sequence(ay if ay is not None else y.sequence)
    if enc_x.shape[0] != n or enc_y.shape[0] != m:
        raise ValueError("sequence lengths must equal chain lengths")

    tempered = None
    if cfg.sequence_mode:
        if grid is None:
            grid = tempered_grid(cfg.pam_grid, cfg.eta_grid)
        elif grid.pam_values != tuple(cfg.pam_grid) or grid.eta_values != tuple(cfg.eta_grid):
            raise ValueError("supplied tempered grid does not match the configured grids")
        k_index, eta_index = grid.n_pam // 2, grid.n_eta // 2
        tempered = grid.model(k_index, eta_index)
    else:
        k_index = eta_index = None

    if fragment_library is None and min(n, m) >= FRAGMENT_WINDOW:
        fragment_library = build_fragment_library(x, y, cfg.delta)
    lib = fragment_library if fragment_library is not None else FragmentLibrary((), cfg.delta)

    sigma2_init = hp.b_sigma / (hp.a_sigma - 1.0) if hp.a_sigma > 1.0 else 1.0
    state = ModelState(
        path=initial_path(n, m),
        sigma2=sigma2_init,
        gp=GapParams(hp.a_open / hp.b_open, hp.a_ext / hp.b_ext),
        lam=cfg.lam,
        k_index=k_index,
        eta_index=eta_index,
        allow_simultaneous=cfg.allow_simultaneous,
    )
    state.path = seed_alignment(x, y, state, hp, lib, tempered, enc_x, enc_y)
    state.refresh_registration(x, y)
    log_z = dpengine.gap_prior_log_Z(n, m, state.gp, cfg.allow_simultaneous)
    gaussian = hp.error_model == "gaussian"

    n_records = (cfg.iterations - cfg.burn_in) // cfg.thin
    rec = _Recorder(n_records, cfg.sequence_mode)

    for sweep in range(1, cfg.iterations + 1):
        move = mh_alignment_local(x, y, state, hp, rng, tempered, enc_x, enc_y)
        if move.accepted:
            state.path, state.registration, state.dp2 = move.path, move.registration, move.dp2
        if cfg.global_move_prob > 0 and rng.random() < cfg.global_move_prob:
            gmove = mh_alignment_global(x, y, state, lib, hp, rng, tempered, enc_x, enc_y)
            if gmove.accepted:
                state.path, state.registration, state.dp2 = gmove.path, gmove.registration, gmove.dp2
        if gaussian:
            state.sigma2 = gibbs_sigma2(state, hp, rng)
        upd = mh_gap_update(state, hp, rng, cfg.rw_step_open, cfg.rw_step_ext, log_z)
        state.gp, log_z = upd.gp, upd.log_z
        if cfg.sequence_mode:
            state.k_index, state.eta_index = gibbs_k_eta(enc_x, enc_y, state.path, grid, rng)
            tempered = grid.model(state.k_index, state.eta_index)
        assert state.path.n_matched >= MIN_MATCHES
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            logpost = (
                struct_loglik(x, y, state, hp)
                - gap_penalty(state.path, state.gp)
                - log_z
                + log_gamma_pdf(state.gp.open_pen, hp.a_open, hp.b_open)
                + log_gamma_pdf(state.gp.ext_pen, hp.a_ext, hp.b_ext)
                + log_invgamma_pdf(state.sigma2, hp.a_sigma, hp.b_sigma)
            )
            if tempered is not None:
                logpost += seq_loglik(enc_x, enc_y, state.path, tempered)
            rec.add(state, grid, logpost)

    meta = {
        "n": n,
        "m": m,
        "x_label": x.label,
        "y_label": y.label,
        "seed": cfg.seed,
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "lambda": cfg.lam,
        "sequence_mode": cfg.sequence_mode,
        "allow_simultaneous": cfg.allow_simultaneous,
        "global_move_prob": cfg.global_move_prob,
        "delta": cfg.delta,
        "fragment_library_size": len(lib),
        "pam_grid": list(cfg.pam_grid) if cfg.sequence_mode else None,
        "eta_grid": list(cfg.eta_grid) if cfg.sequence_mode else None,
    }
    return rec.finish(meta)


class _Recorder:
    def __init__(self, n_records: int, sequence_mode: bool):
        self.paths: list[str] = []
        self.nmatch = np.empty(n_records, dtype=np.int64)
        self.sigma2 = np.empty(n_records)
        self.open_pen = np.empty(n_records)
        self.ext_pen = np.empty(n_records)
        self.angles = np.empty((n_records, 3))
        self.translation = np.empty((n_records, 3))
        self.rmsd = np.empty(n_records)
        self.logpost = np.empty(n_records)
        self.k_value = np.empty(n_records, dtype=np.int64) if sequence_mode else None
        self.eta_value = np.empty(n_records) if sequence_mode else None
        self.k_index = np.empty(n_records, dtype=np.int64) if sequence_mode else None
        self.eta_index = np.empty(n_records, dtype=np.int64) if sequence_mode else None
        self.i = 0

    def add(self, state: ModelState, grid: TemperedGrid | None, logpost: float) -> None:
        i = self.i
        self.paths.append(state.path.to_string())
        self.nmatch[i] = state.path.n_matched
        self.sigma2[i] = state.sigma2
        self.open_pen[i] = state.gp.open_pen
        self.ext_pen[i] = state.gp.ext_pen
        self.angles[i] = rotation_to_euler_zyz(state.registration.rotation)
        self.translation[i] = state.registration.translation
        self.rmsd[i] = math.sqrt(state.dp2 / state.path.n_matched)
        self.logpost[i] = logpost
        if self.k_index is not None:
            self.k_index[i] = state.k_index
            self.eta_index[i] = state.eta_index
            self.k_value[i] = grid.pam_values[state.k_index]
            self.eta_value[i] = grid.eta_values[state.eta_index]
        self.i += 1

    def finish(self, meta: dict) -> SampleSet:
        assert self.i == self.nmatch.shape[0]
        return SampleSet(
            paths=self.paths,
            nmatch=self.nmatch,
            sigma2=self.sigma2,
            open_pen=self.open_pen,
            ext_pen=self.ext_pen,
            angles=self.angles,
            translation=self.translation,
            rmsd=self.rmsd,
            logpost=self.logpost,
            k_index=self.k_index,
            eta_index=self.eta_index,
            k_value=self.k_value,
            eta_value=self.eta_value,
            meta=meta,
        )
