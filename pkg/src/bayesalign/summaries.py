"""Posterior summaries and convergence diagnostics over recorded samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .alignment import AlignmentPath

SCALAR_MONITORS = (
    "nmatch", "sigma2", "open_pen", "ext_pen", "rmsd", "logpost",
    "alpha", "beta", "gamma", "tx", "ty", "tz", "k", "eta",
)


@dataclass
class SampleSet:
    """Thinned post-burn-in records of one chain plus its configuration echo."""

    paths: list[str]
    nmatch: np.ndarray
    sigma2: np.ndarray
    open_pen: np.ndarray
    ext_pen: np.ndarray
    angles: np.ndarray  # (N, 3) z-y-z Euler angles of the registration
    translation: np.ndarray  # (N, 3)
    rmsd: np.ndarray
    logpost: np.ndarray
    k_index: np.ndarray | None
    eta_index: np.ndarray | None
    k_value: np.ndarray | None
    eta_value: np.ndarray | None
    meta: dict

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def sequence_mode(self) -> bool:
        return self.k_index is not None

    def path_at(self, i: int) -> AlignmentPath:
        return AlignmentPath.from_string(self.paths[i], self.meta["n"], self.meta["m"])


def monitor(samples: SampleSet, name: str) -> np.ndarray:
    """Extract a monitored scalar series by name."""
    simple = {
        "nmatch": samples.nmatch,
        "sigma2": samples.sigma2,
        "open_pen": samples.open_pen,
        "ext_pen": samples.ext_pen,
        "rmsd": samples.rmsd,
        "logpost": samples.logpost,
    }
    if name in simple:
        return simple[name]
    if name in ("alpha", "beta", "gamma"):
        return samples.angles[:, ("alpha", "beta", "gamma").index(name)]
    if name in ("tx", "ty", "tz"):
        return samples.translation[:, ("tx", "ty", "tz").index(name)]
    if name == "k":
        if samples.k_value is None:
            raise ValueError("k is only monitored in sequence mode")
        return samples.k_value
    if name == "eta":
        if samples.eta_value is None:
            raise ValueError("eta is only monitored in sequence mode")
        return samples.eta_value
    raise ValueError(f"unknown monitor {name!r}")


def concat_samples(sets: list[SampleSet]) -> SampleSet:
    """Pool several chains over the same problem into one sample set."""
    if not sets:
        raise ValueError("no sample sets given")
    first = sets[0]
    for s in sets[1:]:
        if (s.meta["n"], s.meta["m"]) != (first.meta["n"], first.meta["m"]):
            raise ValueError("sample sets are for different problems")
    seq = first.sequence_mode

    def cat(name):
        return np.concatenate([getattr(s, name) for s in sets])

    return SampleSet(
        paths=[p for s in sets for p in s.paths],
        nmatch=cat("nmatch"),
        sigma2=cat("sigma2"),
        open_pen=cat("open_pen"),
        ext_pen=cat("ext_pen"),
        angles=np.vstack([s.angles for s in sets]),
        translation=np.vstack([s.translation for s in sets]),
        rmsd=cat("rmsd"),
        logpost=cat("logpost"),
        k_index=cat("k_index") if seq else None,
        eta_index=cat("eta_index") if seq else None,
        k_value=cat("k_value") if seq else None,
        eta_value=cat("eta_value") if seq else None,
        meta=dict(first.meta, chains=len(sets)),
    )


def map_alignment(samples: SampleSet) -> tuple[AlignmentPath, float]:
    """The visited state with the highest recorded joint log posterior;
    ties go to the earliest record."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    i = int(np.argmax(samples.logpost))
    return samples.path_at(i), float(samples.logpost[i])


def _decode_pairs(path_str: str) -> tuple[np.ndarray, np.ndarray]:
    arr = np.frombuffer(path_str.encode("ascii"), dtype=np.uint8)
    is_m = arr == ord("M")
    i = np.cumsum(arr != ord("Y"))
    j = np.cumsum(arr != ord("X"))
    return i[is_m] - 1, j[is_m] - 1


def marginal_matrix(samples: SampleSet) -> np.ndarray:
    """p_ij = fraction of samples matching residue i of X with j of Y."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    n, m = samples.meta["n"], samples.meta["m"]
    acc = np.zeros((n, m))
    for p in samples.paths:
        ix, iy = _decode_pairs(p)
        acc[ix, iy] += 1.0
    return acc / len(samples)


class SummaryStats(NamedTuple):
    mean: float
    median: float
    hpd90: tuple[float, float]


def scalar_summary(samples: SampleSet, name: str) -> SummaryStats:
    """Mean, median and the narrowest interval holding 90% of the samples."""
    series = np.sort(np.asarray(monitor(samples, name), dtype=float))
    return SummaryStats(float(series.mean()), float(np.median(series)), hpd_interval(series, 0.9))


def hpd_interval(sorted_series: np.ndarray, coverage: float = 0.9) -> tuple[float, float]:
    s = np.asarray(sorted_series, dtype=float)
    nkeep = min(s.shape[0], max(1, math.ceil(coverage * s.shape[0])))
    widths = s[nkeep - 1 :] - s[: s.shape[0] - nkeep + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + nkeep - 1])


def psrf(chains: list[SampleSet], name: str) -> float:
    """Potential scale reduction factor (between/within variance form)."""
    if len(chains) < 2:
        raise ValueError("psrf needs at least 2 chains")
    series = [np.asarray(monitor(c, name), dtype=float) for c in chains]
    length = series[0].shape[0]
    if any(s.shape[0] != length for s in series):
        raise ValueError("chains must have equal lengths")
    if length < 2:
        raise ValueError("chains must have at least 2 records")
    within = float(np.mean([s.var(ddof=1) for s in series]))
    if within == 0.0:
        raise ValueError(f"zero within-chain variance for {name!r}; psrf undefined")
    between = length * float(np.var([s.mean() for s in series], ddof=1))
    var_plus = (length - 1) / length * within + between / length
    return math.sqrt(var_plus / within)


def _grid_frequencies(index: np.ndarray | None, size: int) -> np.ndarray:
    if index is None:
        raise ValueError("grid posteriors require sequence-mode samples")
    counts = np.bincount(index, minlength=size).astype(float)
    return counts / counts.sum()


def pam_posterior(samples: SampleSet) -> np.ndarray:
    if samples.k_index is None:
        raise ValueError("grid posteriors require sequence-mode samples")
    return _grid_frequencies(samples.k_index, len(samples.meta["pam_grid"]))


def eta_posterior(samples: SampleSet) -> np.ndarray:
    if samples.eta_index is None:
        raise ValueError("grid posteriors require sequence-mode samples")
    return _grid_frequencies(samples.eta_index, len(samples.meta["eta_grid"]))


def k_eta_joint(samples: SampleSet) -> np.ndarray:
    if samples.k_index is None:
        raise ValueError("grid posteriors require sequence-mode samples")
    nk = len(samples.meta["pam_grid"])
    ne = len(samples.meta["eta_grid"])
    table = np.zeros((nk, ne))
    np.add.at(table, (samples.k_index, samples.eta_index), 1.0)
    return table / table.sum()


def build_summary(chains: list[SampleSet]) -> dict:
    """Assemble the JSON-ready summary document for a set of chains."""
    pooled = concat_samples(chains) if len(chains) > 1 else chains[0]
    names = ["nmatch", "sigma2", "open_pen", "ext_pen", "rmsd", "logpost"]
    if pooled.sequence_mode:
        names += ["k", "eta"]
    doc: dict = {"n_records": len(pooled), "n_chains": len(chains), "scalars": {}, "psrf": {}}
    for name in names:
        stats = scalar_summary(pooled, name)
        doc["scalars"][name] = {
            "mean": stats.mean,
            "median": stats.median,
            "hpd90": list(stats.hpd90),
        }
    if len(chains) >= 2:
        for name in names:
            try:
                doc["psrf"][name] = psrf(chains, name)
            except ValueError:
                doc["psrf"][name] = None
    map_path, map_logpost = map_alignment(pooled)
    i = int(np.argmax(pooled.logpost))
    doc["map"] = {
        "log_posterior": map_logpost,
        "n_matched": int(map_path.n_matched),
        "rmsd": float(pooled.rmsd[i]),
        "path": map_path.to_string(),
    }
    if pooled.sequence_mode:
        doc["pam_posterior"] = pam_posterior(pooled).tolist()
        doc["eta_posterior"] = eta_posterior(pooled).tolist()
    return doc
