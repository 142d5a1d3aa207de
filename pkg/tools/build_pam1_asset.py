#!/usr/bin/env python3
"""Regenerate src/bayesalign/data/dayhoff_pam1.txt from the Dayhoff 1978 model.

The exchangeability parameters and equilibrium frequencies below are the
Dayhoff/DSO78 values as distributed in PAML's dayhoff.dat (Dayhoff, Schwartz
and Orcutt 1978, "A model of evolutionary change in proteins", Atlas of
Protein Sequence and Structure 5(3):345-352).  The 1-PAM transition matrix is
the discrete chain P = I + Q with Q_ij = s_ij * pi_j scaled so the expected
fraction of replaced residues per step is exactly 1%.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

LETTERS = "ACDEFGHIKLMNPQRSTVWY"

# symmetric exchangeabilities, alphabetical order, lower triangle row by row
DAYHOFF_EXCHANGE_LOWER = """
36
120 0
198 0 1153
18 0 0 0
240 11 125 81 15
23 28 86 43 48 10
65 44 24 61 196 0 7
26 0 71 83 0 27 26 46
41 0 0 11 157 7 44 257 18
72 0 0 30 92 17 0 336 243 527
98 0 905 148 14 139 535 77 318 34 1
250 19 13 51 11 34 94 12 33 32 17 42
89 0 134 716 0 28 606 18 153 73 114 103 153
27 23 0 1 14 9 240 64 464 15 90 32 103 246
409 161 95 79 46 234 35 24 96 17 62 495 245 56 154
371 16 66 34 13 30 22 192 136 33 104 229 78 53 26 550
208 49 18 37 12 54 44 889 10 175 258 15 48 35 24 30 157
0 0 0 0 76 0 27 0 0 46 0 23 0 0 201 75 0 0
24 96 0 22 698 0 127 37 13 28 0 95 0 0 8 34 42 28 61
"""

DAYHOFF_FREQS = {
    "A": 0.087127, "C": 0.033474, "D": 0.046872, "E": 0.049530,
    "F": 0.039772, "G": 0.088612, "H": 0.033618, "I": 0.036886,
    "K": 0.080482, "L": 0.085357, "M": 0.014753, "N": 0.040432,
    "P": 0.050680, "Q": 0.038255, "R": 0.040904, "S": 0.069577,
    "T": 0.058542, "V": 0.064718, "W": 0.010494, "Y": 0.029916,
}


def build_pam1() -> tuple[np.ndarray, np.ndarray]:
    s = np.zeros((20, 20))
    rows = [r.split() for r in DAYHOFF_EXCHANGE_LOWER.strip().splitlines()]
    for i, row in enumerate(rows, start=1):
        for j, val in enumerate(row):
            s[i, j] = s[j, i] = float(val)
    pi = np.array([DAYHOFF_FREQS[a] for a in LETTERS])
    pi = pi / pi.sum()
    q = s * pi[None, :]
    np.fill_diagonal(q, 0.0)
    q *= 0.01 / float((pi * q.sum(axis=1)).sum())
    p1 = q.copy()
    np.fill_diagonal(p1, 1.0 - q.sum(axis=1))
    return p1, pi


def main() -> None:
    p1, pi = build_pam1()
    assert np.allclose(p1.sum(axis=1), 1.0, atol=1e-15)
    assert (p1 >= 0).all()
    out = Path(__file__).resolve().parents[1] / "src" / "bayesalign" / "data" / "dayhoff_pam1.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "# Dayhoff 1978 1-PAM amino-acid transition probabilities (row-stochastic)",
        "# and equilibrium frequencies.  Derived from the Dayhoff/DSO78 model as",
        "# distributed in PAML dayhoff.dat; rescaled so the expected fraction of",
        "# replaced residues per step is 1%.  Regenerate with tools/build_pam1_asset.py.",
        "# Format: header of 20 letters; 20 rows of the full 20x20 matrix (or a",
        "# lower-triangular symmetric exchange block); then 20 equilibrium frequencies.",
        " ".join(LETTERS),
    ]
    for i in range(20):
        lines.append(" ".join(f"{p1[i, j]:.17e}" for j in range(20)))
    lines.append(" ".join(f"{v:.17e}" for v in pi))
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
