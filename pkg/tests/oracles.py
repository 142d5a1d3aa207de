"""Independent oracles shared by the test suite.

Everything here deliberately avoids the package's own DP and density code:
path weights come from step-by-step arithmetic over enumerated paths, rigid
fits from scipy numerical minimization, and parameter marginals from dense
grid quadrature with scipy.stats densities.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, stats

from bayesalign.alignment import AlignmentPath, GapParams, enumerate_paths, gap_penalty
from bayesalign.geometry import superpose

LOG_2PI = math.log(2.0 * math.pi)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random proper rotation via normalized quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotvec_to_matrix(v: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(v)
    if theta < 1e-12:
        return np.eye(3)
    k = v / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(theta) * kx + (1 - math.cos(theta)) * (kx @ kx)


def numerical_min_dp2(xm: np.ndarray, ym: np.ndarray, n_starts: int = 8, seed: int = 0) -> float:
    """Minimize ||Yc - Xc R||_F^2 over rotations numerically (translation is
    removed by centering); multi-start Nelder-Mead over rotation vectors."""
    xc = xm - xm.mean(axis=0)
    yc = ym - ym.mean(axis=0)

    def cost(v):
        r = rotvec_to_matrix(v)
        resid = yc - xc @ r
        return float((resid * resid).sum())

    rng = np.random.default_rng(seed)
    best = math.inf
    starts = [np.zeros(3)] + [rng.uniform(-math.pi, math.pi, 3) for _ in range(n_starts - 1)]
    for v0 in starts:
        res = optimize.minimize(cost, v0, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 5000})
        best = min(best, float(res.fun))
    return best


def enum_path_log_weight(path: AlignmentPath, match_lw: np.ndarray, gp: GapParams) -> float:
    """Path log weight from matched-pair sums and the affine penalty formula."""
    w = -gap_penalty(path, gp)
    for i, j in path.matched_pairs():
        w += match_lw[i - 1, j - 1]
    return w


def enum_log_total(paths, match_lw: np.ndarray, gp: GapParams) -> float:
    vals = [enum_path_log_weight(p, match_lw, gp) for p in paths]
    hi = max(vals)
    return hi + math.log(sum(math.exp(v - hi) for v in vals))


def enum_log_z(n: int, m: int, gp: GapParams, allow: bool = True) -> float:
    vals = [-gap_penalty(p, gp) for p in enumerate_paths(n, m, allow)]
    hi = max(vals)
    return hi + math.log(sum(math.exp(v - hi) for v in vals))


def path_dp2(path: AlignmentPath, x_coords: np.ndarray, y_coords: np.ndarray) -> float:
    ix, iy = path.matched_index_arrays()
    return superpose(x_coords[ix], y_coords[iy])[1]


def fixed_param_posterior(
    paths,
    x_coords: np.ndarray,
    y_coords: np.ndarray,
    sigma2: float,
    gp: GapParams,
    lam: float,
    min_matches: int = 3,
) -> dict[str, float]:
    """Exact posterior over paths at fixed parameters, restricted to paths
    with at least min_matches matches (the sampler's support)."""
    logs = {}
    for p in paths:
        if p.n_matched < min_matches:
            continue
        dp2 = path_dp2(p, x_coords, y_coords)
        logs[p.to_string()] = (
            p.n_matched * math.log(lam)
            - 1.5 * p.n_matched * (LOG_2PI + math.log(sigma2))
            - dp2 / (2.0 * sigma2)
            - gap_penalty(p, gp)
        )
    hi = max(logs.values())
    norm = sum(math.exp(v - hi) for v in logs.values())
    return {k: math.exp(v - hi) / norm for k, v in logs.items()}


def integrated_posterior(
    paths,
    x_coords: np.ndarray,
    y_coords: np.ndarray,
    lam: float,
    hp,
    min_matches: int = 3,
    n_sigma: int = 400,
    n_open: int = 240,
    n_ext: int = 240,
    allow: bool = True,
) -> dict[str, float]:
    """Posterior over paths with (sigma2, open, ext) marginalized by dense
    grid quadrature; Z(open, ext) comes from enumeration."""
    kept = [p for p in paths if p.n_matched >= min_matches]
    n, m = kept[0].n, kept[0].m

    # sigma^2 marginal factor per |M| value (log-spaced trapezoid)
    s2 = np.exp(np.linspace(math.log(1e-3), math.log(200.0), n_sigma))
    ig = stats.invgamma.pdf(s2, hp.a_sigma, scale=hp.b_sigma)
    dp2s = {p.to_string(): path_dp2(p, x_coords, y_coords) for p in kept}

    def sigma_integral(nm: int, dp2: float) -> float:
        vals = (2.0 * math.pi * s2) ** (-1.5 * nm) * np.exp(-dp2 / (2.0 * s2)) * ig
        return float(np.trapezoid(vals, s2))

    # (open, ext) expectation of exp(-u)/Z over the gamma priors
    opens = np.exp(np.linspace(math.log(1e-3), math.log(60.0), n_open))
    exts = np.exp(np.linspace(math.log(1e-4), math.log(4.0), n_ext))
    p_open = stats.gamma.pdf(opens, hp.a_open, scale=1.0 / hp.b_open)
    p_ext = stats.gamma.pdf(exts, hp.a_ext, scale=1.0 / hp.b_ext)
    log_z_grid = np.empty((n_open, n_ext))
    all_paths = enumerate_paths(n, m, allow)
    stats_list = []
    from bayesalign.alignment import gap_stats

    for p in all_paths:
        s, lengths = gap_stats(p)
        stats_list.append((s, sum(lengths)))
    s_arr = np.array([v[0] for v in stats_list], dtype=float)
    l_arr = np.array([v[1] for v in stats_list], dtype=float)
    for a, o in enumerate(opens):
        w = -(o * s_arr[None, :] + exts[:, None] * l_arr[None, :])
        hi = w.max(axis=1, keepdims=True)
        log_z_grid[a] = (hi[:, 0] + np.log(np.exp(w - hi).sum(axis=1)))

    def gap_expectation(s: int, total_len: int) -> float:
        w = np.exp(-(opens[:, None] * s + exts[None, :] * total_len) - log_z_grid)
        inner = np.trapezoid(w * p_ext[None, :], exts, axis=1)
        return float(np.trapezoid(inner * p_open, opens))

    logs = {}
    for p in kept:
        s, lengths = gap_stats(p)
        key = p.to_string()
        logs[key] = (
            p.n_matched * math.log(lam)
            + math.log(sigma_integral(p.n_matched, dp2s[key]))
            + math.log(gap_expectation(s, sum(lengths)))
        )
    hi = max(logs.values())
    norm = sum(math.exp(v - hi) for v in logs.values())
    return {k: math.exp(v - hi) / norm for k, v in logs.items()}


def gap_conditional_grid(path: AlignmentPath, hp, allow: bool = True,
                         n_open: int = 400, n_ext: int = 400):
    """Dense-grid conditional density of (open, ext) given a path; returns
    (opens, exts, joint density on the grid, open marginal cdf, ext marginal cdf)."""
    from bayesalign.alignment import gap_stats

    s, lengths = gap_stats(path)
    total_len = sum(lengths)
    n, m = path.n, path.m
    opens = np.linspace(1e-4, 40.0, n_open)
    exts = np.linspace(1e-5, 2.5, n_ext)
    all_paths = enumerate_paths(n, m, allow)
    s_arr = np.array([gap_stats(p).s for p in all_paths], dtype=float)
    l_arr = np.array([sum(gap_stats(p).lengths) for p in all_paths], dtype=float)
    dens = np.empty((n_open, n_ext))
    for a, o in enumerate(opens):
        w = -(o * s_arr[None, :] + exts[:, None] * l_arr[None, :])
        hi = w.max(axis=1, keepdims=True)
        log_z = hi[:, 0] + np.log(np.exp(w - hi).sum(axis=1))
        dens[a] = np.exp(-(o * s + exts * total_len) - log_z)
    dens *= stats.gamma.pdf(opens, hp.a_open, scale=1.0 / hp.b_open)[:, None]
    dens *= stats.gamma.pdf(exts, hp.a_ext, scale=1.0 / hp.b_ext)[None, :]
    open_marg = np.trapezoid(dens, exts, axis=1)
    ext_marg = np.trapezoid(dens, opens, axis=0)

    def cdf_of(grid, marg):
        c = np.concatenate([[0.0], np.cumsum(0.5 * (marg[1:] + marg[:-1]) * np.diff(grid))])
        return c / c[-1]

    return opens, exts, dens, cdf_of(opens, open_marg), cdf_of(exts, ext_marg)


def ks_distance(samples: np.ndarray, grid: np.ndarray, cdf: np.ndarray) -> float:
    samples = np.sort(samples)
    emp = np.searchsorted(samples, grid, side="right") / samples.shape[0]
    return float(np.abs(emp - cdf).max())


def total_variation(empirical: dict[str, float], exact: dict[str, float]) -> float:
    keys = set(empirical) | set(exact)
    return 0.5 * sum(abs(empirical.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def make_chain(coords: np.ndarray, seq: str | None = None, label: str = "test"):
    """Build a Chain from raw coordinates (and an optional sequence)."""
    from bayesalign.structio import Chain, Residue

    coords = np.asarray(coords, dtype=float)
    if seq is None:
        seq = "A" * coords.shape[0]
    residues = tuple(
        Residue(seq[i], (coords[i, 0], coords[i, 1], coords[i, 2]), f"T:{i + 1}")
        for i in range(coords.shape[0])
    )
    return Chain(residues, label)
