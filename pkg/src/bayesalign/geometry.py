"""Rigid-body superposition and shape distances for matched coordinate sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

ORTHOGONALITY_TOL = 1e-9


class DegenerateConfigurationError(ValueError):
    """Raised when a point configuration cannot determine a rigid registration."""


@dataclass(frozen=True)
class Registration:
    """Rotation (3x3, det +1) and translation (Angstrom) placing X onto Y's frame."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=float)
        tra = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3) or tra.shape != (3,):
            raise ValueError(f"registration needs 3x3 rotation and 3-vector, got {rot.shape}, {tra.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(tra).all()):
            raise ValueError("registration entries must be finite")
        if np.abs(rot.T @ rot - np.eye(3)).max() > ORTHOGONALITY_TOL:
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHOGONALITY_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @classmethod
    def identity(cls) -> "Registration":
        return cls(np.eye(3), np.zeros(3))


def apply(reg: Registration, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Apply a registration to k x 3 coordinates (rows are points)."""
    return np.asarray(x, dtype=float) @ reg.rotation + reg.translation


def invert(reg: Registration) -> Registration:
    return Registration(reg.rotation.T, -reg.translation @ reg.rotation.T)


def superpose(xm: NDArray[np.float64], ym: NDArray[np.float64]) -> tuple[Registration, float]:
    """Least-squares rigid superposition of xm onto ym.

    Returns the optimal proper-rotation registration and the squared residual
    (squared partial Procrustes distance) dp2 = ||ym - (xm R + 1 mu')||_F^2.
    Reflections are rejected: if the best orthogonal map is improper, the
    column of U for the smallest singular value is negated (Kabsch correction).
    """
    x = np.asarray(xm, dtype=float)
    y = np.asarray(ym, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape != y.shape:
        raise ValueError(f"expected matching k x 3 arrays, got {x.shape} and {y.shape}")
    k = x.shape[0]
    if k < 3:
        raise DegenerateConfigurationError(f"need at least 3 matched points, got {k}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("coordinates must be finite")

    xbar = x.mean(axis=0)
    ybar = y.mean(axis=0)
    xc = x - xbar
    yc = y - ybar
    # cross-covariance A = Xc' Yc; optimal R maximizes tr(R' A)
    a = xc.T @ yc
    u, s, vt = np.linalg.svd(a)
    scale = max(s[0], 1.0)
    if s[1] <= 1e-12 * scale:
        raise DegenerateConfigurationError("centered cross-covariance has rank < 2 (collinear or coincident points)")
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
    rot = u @ vt
    tra = ybar - xbar @ rot
    resid = yc - xc @ rot
    dp2 = float(np.einsum("ij,ij->", resid, resid))
    return Registration(rot, tra), dp2


def procrustes_distance2(xm: NDArray[np.float64], ym: NDArray[np.float64]) -> float:
    """Squared partial Procrustes distance between matched configurations (A^2)."""
    return superpose(xm, ym)[1]


def rmsd(xm: NDArray[np.float64], ym: NDArray[np.float64]) -> float:
    """RMSD (A) of the matched pairs under the optimal rigid registration."""
    x = np.asarray(xm, dtype=float)
    return math.sqrt(procrustes_distance2(xm, ym) / x.shape[0])


def rotation_to_euler_zyz(rot: NDArray[np.float64]) -> tuple[float, float, float]:
    """Decompose a proper rotation R = Rz(alpha) Ry(beta) Rz(gamma) into its angles."""
    r = np.asarray(rot, dtype=float)
    beta = math.acos(min(1.0, max(-1.0, r[2, 2])))
    if abs(r[2, 2]) < 1.0 - 1e-12:
        alpha = math.atan2(r[1, 2], r[0, 2])
        gamma = math.atan2(r[2, 1], -r[2, 0])
    else:
        # gimbal-locked: only alpha -/+ gamma is identified, put it all in alpha
        if r[2, 2] > 0.0:
            alpha = math.atan2(r[1, 0], r[0, 0])
        else:
            alpha = math.atan2(-r[1, 0], -r[0, 0])
        gamma = 0.0
    return alpha, beta, gamma


def euler_zyz_to_rotation(alpha: float, beta: float, gamma: float) -> NDArray[np.float64]:
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    rz1 = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz2 = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return rz1 @ ry @ rz2
