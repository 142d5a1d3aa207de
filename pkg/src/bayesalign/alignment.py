"""Alignment paths, gap bookkeeping and a brute-force enumeration oracle.

An alignment between chains of lengths n and m is an ordered sequence of
consumption steps: MATCH consumes one residue of each chain, SKIP_X consumes
one residue of X only, SKIP_Y one residue of Y only.  For identifiability the
x-consuming skip may never immediately follow the y-consuming skip, so inside
a mixed gap run all SKIP_X steps come before all SKIP_Y steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ENUMERATION_GUARD = 36  # refuse enumerate_paths beyond n*m == 36


class Step(enum.IntEnum):
    MATCH = 0
    SKIP_X = 1
    SKIP_Y = 2


_STEP_CHARS = {Step.MATCH: "M", Step.SKIP_X: "X", Step.SKIP_Y: "Y"}
_CHAR_STEPS = {c: s for s, c in _STEP_CHARS.items()}


@dataclass(frozen=True)
class GapParams:
    """Affine gap penalty: open_pen per gap plus ext_pen per skipped residue."""

    open_pen: float
    ext_pen: float

    def __post_init__(self) -> None:
        for name in ("open_pen", "ext_pen"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class AlignmentPath:
    steps: tuple[Step, ...]
    n: int
    m: int

    def __post_init__(self) -> None:
        steps = tuple(Step(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        n_match = sum(1 for s in steps if s is Step.MATCH)
        n_sx = sum(1 for s in steps if s is Step.SKIP_X)
        n_sy = len(steps) - n_match - n_sx
        if n_match + n_sx != self.n or n_match + n_sy != self.m:
            raise ValueError(
                f"path consumes ({n_match + n_sx}, {n_match + n_sy}) residues, chains have ({self.n}, {self.m})"
            )
        prev = None
        for s in steps:
            if s is Step.SKIP_X and prev is Step.SKIP_Y:
                raise ValueError("SKIP_X may not immediately follow SKIP_Y")
            prev = s
        object.__setattr__(self, "_n_matched", n_match)

    @property
    def n_matched(self) -> int:
        return self._n_matched  # type: ignore[attr-defined]

    def matched_pairs(self) -> list[tuple[int, int]]:
        """Matched residue pairs as 1-based (i, j) indices, strictly increasing."""
        pairs = []
        i = j = 0
        for s in self.steps:
            if s is Step.MATCH:
                i += 1
                j += 1
                pairs.append((i, j))
            elif s is Step.SKIP_X:
                i += 1
            else:
                j += 1
        return pairs

    def matched_index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Matched indices as 0-based arrays (ix, iy) for coordinate slicing."""
        pairs = self.matched_pairs()
        ix = np.array([p[0] - 1 for p in pairs], dtype=np.int64)
        iy = np.array([p[1] - 1 for p in pairs], dtype=np.int64)
        return ix, iy

    def steps_array(self) -> np.ndarray:
        return np.fromiter((int(s) for s in self.steps), dtype=np.int64, count=len(self.steps))

    def to_string(self) -> str:
        return "".join(_STEP_CHARS[s] for s in self.steps)

    @classmethod
    def from_string(cls, text: str, n: int, m: int) -> "AlignmentPath":
        return cls(tuple(_CHAR_STEPS[c] for c in text), n, m)

    @classmethod
    def from_steps_array(cls, arr: np.ndarray, n: int, m: int) -> "AlignmentPath":
        return cls(tuple(Step(int(v)) for v in arr), n, m)

    def transposed(self) -> "AlignmentPath":
        """Exchange the X and Y roles, re-canonicalizing skip order inside runs."""
        swapped = [
            Step.MATCH if s is Step.MATCH else (Step.SKIP_Y if s is Step.SKIP_X else Step.SKIP_X)
            for s in self.steps
        ]
        return AlignmentPath(tuple(_canonicalize(swapped)), self.m, self.n)


def _canonicalize(steps: list[Step]) -> list[Step]:
    # within each maximal skip run, put SKIP_X before SKIP_Y
    out: list[Step] = []
    run: list[Step] = []
    for s in steps + [Step.MATCH]:
        if s is Step.MATCH:
            run.sort()
            out.extend(run)
            run = []
            out.append(s)
        else:
            run.append(s)
    return out[:-1]


class GapStats(NamedTuple):
    s: int
    lengths: tuple[int, ...]


def gap_stats(path: AlignmentPath) -> GapStats:
    """Number of gaps and their lengths; a mixed SKIP_X/SKIP_Y run is one gap."""
    lengths = []
    run = 0
    for s in path.steps:
        if s is Step.MATCH:
            if run:
                lengths.append(run)
            run = 0
        else:
            run += 1
    if run:
        lengths.append(run)
    return GapStats(len(lengths), tuple(lengths))


def gap_penalty(path: AlignmentPath, gp: GapParams) -> float:
    """Affine penalty u = open_pen * s + ext_pen * total gap length."""
    s, lengths = gap_stats(path)
    return gp.open_pen * s + gp.ext_pen * sum(lengths)


def to_match_matrix(path: AlignmentPath) -> np.ndarray:
    """0/1 match matrix of shape (n, m); row and column sums are <= 1."""
    mat = np.zeros((path.n, path.m), dtype=np.int64)
    for i, j in path.matched_pairs():
        mat[i - 1, j - 1] = 1
    return mat


def matched_pairs(path: AlignmentPath) -> list[tuple[int, int]]:
    return path.matched_pairs()


def enumerate_paths(n: int, m: int, allow_simultaneous: bool = True) -> list[AlignmentPath]:
    """All valid paths for chain lengths (n, m); the enumeration test oracle.

    With allow_simultaneous False, SKIP_Y immediately after SKIP_X is also
    forbidden, so gap runs are pure (the CE-style restriction).
    """
    if n < 1 or m < 1:
        raise ValueError("both chain lengths must be >= 1")
    if n * m > ENUMERATION_GUARD:
        raise ValueError(f"enumeration refused for n*m = {n * m} > {ENUMERATION_GUARD}")
    out: list[AlignmentPath] = []
    stack: list[Step] = []

    def rec(i: int, j: int, prev: Step | None) -> None:
        if i == n and j == m:
            out.append(AlignmentPath(tuple(stack), n, m))
            return
        if i < n and j < m:
            stack.append(Step.MATCH)
            rec(i + 1, j + 1, Step.MATCH)
            stack.pop()
        if i < n and prev is not Step.SKIP_Y:
            stack.append(Step.SKIP_X)
            rec(i + 1, j, Step.SKIP_X)
            stack.pop()
        if j < m and not (prev is Step.SKIP_X and not allow_simultaneous):
            stack.append(Step.SKIP_Y)
            rec(i, j + 1, Step.SKIP_Y)
            stack.pop()

    rec(0, 0, None)
    return out
