"""Protein structure/sequence ingestion and output file formats.

PDB reading is deliberately minimal: C-alpha ATOM records of one chain, first
MODEL only, alternate locations restricted to blank or 'A', HETATM ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentPath, Step
from .geometry import Registration, apply

UNKNOWN_AA = "X"

THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}


class PdbParseError(ValueError):
    pass


class FastaError(ValueError):
    pass


@dataclass(frozen=True)
class Residue:
    aa: str  # one-letter code, or UNKNOWN_AA
    coord: tuple[float, float, float]
    id: str  # e.g. "A:42" or "A:42B" with insertion code

    def __post_init__(self) -> None:
        if not all(np.isfinite(c) for c in self.coord):
            raise ValueError(f"residue {self.id}: coordinates must be finite")


@dataclass(frozen=True)
class Chain:
    residues: tuple[Residue, ...]
    label: str

    def __post_init__(self) -> None:
        if len(self.residues) < 1:
            raise ValueError(f"chain {self.label!r} is empty")
        object.__setattr__(self, "_coords", np.array([r.coord for r in self.residues], dtype=float))

    def __len__(self) -> int:
        return len(self.residues)

    @property
    def coords(self) -> np.ndarray:
        return self._coords  # type: ignore[attr-defined]

    @property
    def sequence(self) -> str:
        return "".join(r.aa for r in self.residues)


def parse_pdb_ca(text: str, chain_id: str) -> Chain:
    """Extract one Residue per C-alpha ATOM record of the selected chain."""
    residues: list[Residue] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[0:6].rstrip()
        if record == "ENDMDL":
            break  # first model only
        if record != "ATOM":
            continue
        if line[12:16].strip() != "CA":
            continue
        if line[16:17] not in (" ", "", "A"):
            continue
        if line[21:22] != chain_id:
            continue
        resname = line[17:20].strip()
        aa = THREE_TO_ONE.get(resname, UNKNOWN_AA)
        try:
            coord = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError:
            raise PdbParseError(f"line {lineno}: malformed coordinate field in {line!r}") from None
        resid = f"{chain_id}:{line[22:26].strip()}{line[26:27].strip()}"
        residues.append(Residue(aa, coord, resid))
    if not residues:
        raise PdbParseError(f"no C-alpha atoms found for chain {chain_id!r}")
    return Chain(tuple(residues), f"chain {chain_id}")


def parse_fasta(text: str) -> str:
    """One-record FASTA; returns the sequence string."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(">"):
        raise FastaError("expected a FASTA header line starting with '>'")
    if any(ln.startswith(">") for ln in lines[1:]):
        raise FastaError("expected exactly one FASTA record")
    seq = "".join(lines[1:]).upper()
    if not seq:
        raise FastaError("empty sequence")
    bad = set(seq) - set("ABCDEFGHIKLMNPQRSTVWXYZ*")
    if bad:
        raise FastaError(f"invalid sequence characters: {sorted(bad)}")
    return seq


def write_alignment_tsv(path: AlignmentPath, x: Chain, y: Chain, reg: Registration) -> str:
    """One row per step: step type, residue ids or gap markers, and for
    matches the inter-residue distance (A) under the given registration."""
    if path.n != len(x) or path.m != len(y):
        raise ValueError(f"path is for ({path.n}, {path.m}), chains have ({len(x)}, {len(y)})")
    moved = apply(reg, x.coords)
    rows = []
    i = j = 0
    for s in path.steps:
        if s is Step.MATCH:
            d = float(np.linalg.norm(y.coords[j] - moved[i]))
            rows.append(f"MATCH\t{x.residues[i].id}\t{y.residues[j].id}\t{d:.3f}")
            i += 1
            j += 1
        elif s is Step.SKIP_X:
            rows.append(f"SKIP_X\t{x.residues[i].id}\t-\t-")
            i += 1
        else:
            rows.append(f"SKIP_Y\t-\t{y.residues[j].id}\t-")
            j += 1
    return "\n".join(rows) + "\n"


def _check_unit_interval(matrix: np.ndarray) -> np.ndarray:
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if (mat < 0).any() or (mat > 1).any() or not np.isfinite(mat).all():
        raise ValueError("matrix entries must lie in [0, 1]")
    return mat


def write_marginal_csv(matrix: np.ndarray) -> str:
    """CSV of the marginal alignment matrix; header row gives y indices."""
    mat = _check_unit_interval(matrix)
    n, m = mat.shape
    lines = ["," + ",".join(str(j) for j in range(1, m + 1))]
    for i in range(n):
        lines.append(str(i + 1) + "," + ",".join(f"{v:.9g}" for v in mat[i]))
    return "\n".join(lines) + "\n"


def read_marginal_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])


def write_heatmap_svg(matrix: np.ndarray, cell: int = 6) -> str:
    """SVG heatmap, grayscale 0 -> white, 1 -> black, axes in residue indices."""
    mat = _check_unit_interval(matrix)
    n, m = mat.shape
    left, top, bottom = 36, 8, 28
    width = left + m * cell + 8
    height = top + n * cell + bottom
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(n):
        for j in range(m):
            g = round(255 * (1.0 - mat[i, j]))
            parts.append(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({g},{g},{g})"/>'
            )
    xtick = max(1, m // 10)
    ytick = max(1, n // 10)
    for j in range(0, m, xtick):
        parts.append(
            f'<text x="{left + j * cell + cell / 2:.1f}" y="{top + n * cell + 12}" '
            f'font-size="8" text-anchor="middle">{j + 1}</text>'
        )
    for i in range(0, n, ytick):
        parts.append(
            f'<text x="{left - 4}" y="{top + i * cell + cell / 2 + 3:.1f}" '
            f'font-size="8" text-anchor="end">{i + 1}</text>'
        )
    parts.append(
        f'<text x="{left + m * cell / 2:.1f}" y="{height - 4}" font-size="9" '
        f'text-anchor="middle">y residue index</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
