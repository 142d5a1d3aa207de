"""PAM substitution-model family, tempering, log-odds scores and entropies.

PAM-k joint distributions are built as Theta_k(a, b) = pi_a * (P^k)_{ab} from
an embedded 1-PAM transition matrix P and equilibrium frequencies pi
(Dayhoff 1978 values shipped as a data asset; alternates can be supplied in
the same file format).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
_AA_INDEX = {a: i for i, a in enumerate(ALPHABET)}

PAM_MIN, PAM_MAX = 1, 500

DEFAULT_PAM_GRID: tuple[int, ...] = tuple(range(100, 301, 10))
DEFAULT_ETA_GRID: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))


def aa_index(letter: str) -> int:
    """0..19 for the 20 standard letters, -1 for anything else (unknown)."""
    return _AA_INDEX.get(letter, -1)


def encode_sequence(seq: str) -> np.ndarray:
    return np.array([aa_index(a) for a in seq], dtype=np.int64)


class SubstitutionDataError(ValueError):
    """Raised when a substitution-data file fails validation."""


def load_substitution_data(path: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Parse a substitution-data file into (P1, pi).

    Format: optional '#' comment lines; a header of 20 letters; 20 matrix rows
    (either the full row-stochastic 20x20 transition matrix, or rows of
    lengths 1..20 giving the lower triangle of a symmetric exchange matrix
    from which the 1%-scaled discrete chain is built); then a final row of 20
    equilibrium frequencies.
    """
    if path is None:
        text = resources.files("bayesalign").joinpath("data/dayhoff_pam1.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(rows) != 22:
        raise SubstitutionDataError(f"expected header + 20 matrix rows + frequencies, got {len(rows)} rows")
    header = rows[0]
    if header != list(ALPHABET):
        raise SubstitutionDataError(f"header must list the 20 letters {ALPHABET!r} in order")
    try:
        mat_rows = [[float(v) for v in r] for r in rows[1:21]]
        pi = np.array([float(v) for v in rows[21]], dtype=float)
    except ValueError as exc:
        raise SubstitutionDataError(f"non-numeric matrix entry: {exc}") from None
    if pi.shape != (20,) or (pi <= 0).any() or abs(pi.sum() - 1.0) > 1e-6:
        raise SubstitutionDataError("equilibrium frequencies must be 20 positive values summing to 1")
    pi = pi / pi.sum()

    lengths = [len(r) for r in mat_rows]
    if lengths == [20] * 20:
        p1 = np.array(mat_rows, dtype=float)
        if (p1 < 0).any():
            raise SubstitutionDataError("transition probabilities must be nonnegative")
        rowsums = p1.sum(axis=1)
        if np.abs(rowsums - 1.0).max() > 1e-6:
            raise SubstitutionDataError("transition matrix rows must sum to 1")
        p1 = p1 / rowsums[:, None]
    elif lengths == list(range(1, 21)):
        s = np.zeros((20, 20))
        for i, r in enumerate(mat_rows):
            for j, v in enumerate(r):
                s[i, j] = s[j, i] = v
        if (s < 0).any():
            raise SubstitutionDataError("exchange parameters must be nonnegative")
        np.fill_diagonal(s, 0.0)
        q = s * pi[None, :]
        q *= 0.01 / float((pi * q.sum(axis=1)).sum())
        p1 = q
        np.fill_diagonal(p1, 1.0 - q.sum(axis=1))
        if (np.diagonal(p1) <= 0).any():
            raise SubstitutionDataError("exchange parameters too large for a 1% discrete chain")
    else:
        raise SubstitutionDataError("matrix rows must be 20 full rows or a lower triangle of lengths 1..20")
    return p1, pi


@dataclass(frozen=True)
class SubstitutionModel:
    """Joint distribution Theta_k over matched residue pairs with its marginals."""

    k: int
    joint: np.ndarray  # (20, 20), sums to 1
    marginal: np.ndarray  # (20,)

    def __post_init__(self) -> None:
        if abs(float(self.joint.sum()) - 1.0) > 1e-12:
            raise ValueError("joint distribution must sum to 1")
        if (self.joint < 0).any():
            raise ValueError("joint distribution must be nonnegative")
        if np.abs(self.joint.sum(axis=1) - self.marginal).max() > 1e-12:
            raise ValueError("marginals must be the joint row sums")


@dataclass(frozen=True)
class TemperedModel:
    """Discounted substitution model: probabilities raised to eta, renormalized."""

    k: int
    eta: float
    match_logprob: np.ndarray  # (20, 20)
    skip_logprob: np.ndarray  # (20,)

    def __post_init__(self) -> None:
        if abs(float(np.exp(self.match_logprob).sum()) - 1.0) > 1e-12:
            raise ValueError("tempered match table must normalize to 1")
        if abs(float(np.exp(self.skip_logprob).sum()) - 1.0) > 1e-12:
            raise ValueError("tempered skip table must normalize to 1")


def transition_power(p1: np.ndarray, k: int) -> np.ndarray:
    """P^k by repeated squaring, renormalizing rows to cancel drift."""
    result = np.eye(20)
    base = p1.copy()
    e = k
    while e > 0:
        if e & 1:
            result = result @ base
            result /= result.sum(axis=1, keepdims=True)
        e >>= 1
        if e:
            base = base @ base
            base /= base.sum(axis=1, keepdims=True)
    return result


_DEFAULT_DATA: tuple[np.ndarray, np.ndarray] | None = None


def _default_data() -> tuple[np.ndarray, np.ndarray]:
    global _DEFAULT_DATA
    if _DEFAULT_DATA is None:
        _DEFAULT_DATA = load_substitution_data()
    return _DEFAULT_DATA


def pam_model(k: int, data: tuple[np.ndarray, np.ndarray] | None = None) -> SubstitutionModel:
    """PAM-k substitution model; k is the expected percentage of replacements."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ValueError(f"PAM distance must be an integer, got {k!r}")
    if not (PAM_MIN <= k <= PAM_MAX):
        raise ValueError(f"PAM distance must be in [{PAM_MIN}, {PAM_MAX}], got {k}")
    p1, pi = data if data is not None else _default_data()
    pk = transition_power(p1, int(k))
    joint = pi[:, None] * pk
    joint = joint / joint.sum()
    return SubstitutionModel(int(k), joint, joint.sum(axis=1))


def log_odds(model: SubstitutionModel) -> np.ndarray:
    """Psi(a, b) = 10 log10(Theta(a, b) / (Theta(a,.) Theta(.,b)))."""
    if (model.marginal <= 0).any():
        raise ValueError("log-odds undefined for zero marginals")
    expected = np.outer(model.marginal, model.marginal)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(model.joint / expected)


def temper(model: SubstitutionModel, eta: float) -> TemperedModel:
    """Raise the joint and marginal tables to the power eta and renormalize."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"discount factor must be in [0, 1], got {eta}")
    if eta == 0.0:
        match_lp = np.full((20, 20), -math.log(400.0))
        skip_lp = np.full(20, -math.log(20.0))
        return TemperedModel(model.k, 0.0, match_lp, skip_lp)
    with np.errstate(divide="ignore"):
        lj = eta * np.log(model.joint)
        lm = eta * np.log(model.marginal)
    match_lp = lj - _logsumexp(lj)
    skip_lp = lm - _logsumexp(lm)
    return TemperedModel(model.k, float(eta), match_lp, skip_lp)


def _logsumexp(a: np.ndarray) -> float:
    hi = float(a.max())
    return hi + math.log(float(np.exp(a - hi).sum()))


def joint_entropy(tempered: TemperedModel) -> float:
    """Shannon entropy (nats) of the 400-cell tempered match distribution."""
    p = np.exp(tempered.match_logprob)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


@dataclass(frozen=True)
class TemperedGrid:
    """Precomputed tempered models over a (PAM, eta) grid, shared read-only."""

    pam_values: tuple[int, ...]
    eta_values: tuple[float, ...]
    models: tuple[tuple[TemperedModel, ...], ...]  # [k_index][eta_index]
    match_logprob_stack: np.ndarray  # (n_k * n_eta, 400)
    skip_logprob_stack: np.ndarray  # (n_k * n_eta, 20)

    @property
    def n_pam(self) -> int:
        return len(self.pam_values)

    @property
    def n_eta(self) -> int:
        return len(self.eta_values)

    def model(self, k_index: int, eta_index: int) -> TemperedModel:
        return self.models[k_index][eta_index]

    def flat_index(self, k_index: int, eta_index: int) -> int:
        return k_index * self.n_eta + eta_index


def tempered_grid(
    pam_values: tuple[int, ...] = DEFAULT_PAM_GRID,
    eta_values: tuple[float, ...] = DEFAULT_ETA_GRID,
    data: tuple[np.ndarray, np.ndarray] | None = None,
) -> TemperedGrid:
    if not pam_values or not eta_values:
        raise ValueError("both grids must be nonempty")
    base = [pam_model(k, data) for k in pam_values]
    models = tuple(tuple(temper(b, e) for e in eta_values) for b in base)
    match_stack = np.stack([t.match_logprob.ravel() for row in models for t in row])
    skip_stack = np.stack([t.skip_logprob for row in models for t in row])
    return TemperedGrid(tuple(int(k) for k in pam_values), tuple(float(e) for e in eta_values),
                        models, match_stack, skip_stack)
