"""Norm conventions shared by the discretization, Lipschitz, and training code.

Vectors use the plain 2- and infinity-norms. Matrices use induced norms
(spectral, max absolute row sum). Derivative tensors are normed as the
Jacobian/second-derivative operators they represent, flattened so that every
bound-dominance inequality in the test suite is an actual theorem:

- dW (shape D_x x D x D_theta) acts on z per parameter slice; its infinity
  norm is the max over parameter slices of the slice's induced infinity norm,
  and its 2-norm is the largest singular value of the (D_x*D_theta) x D
  stacked Jacobian.
- d2W (shape D_x x D x D_theta x D_theta) under infinity is
  max_i sum_j ||slice_ij||_inf; under 2 it is sqrt(sum_ij ||slice_ij||_2^2).
"""
from __future__ import annotations

import enum

import numpy as np


class NormKind(str, enum.Enum):
    TWO = "two"
    INFINITY = "infinity"


def vec_norm(v: np.ndarray, kind: NormKind) -> float:
    v = np.asarray(v, dtype=float).ravel()
    if kind == NormKind.TWO:
        return float(np.linalg.norm(v, 2))
    return float(np.max(np.abs(v))) if v.size else 0.0


def mat_norm(m: np.ndarray, kind: NormKind) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if kind == NormKind.TWO:
        return float(np.linalg.norm(m, 2))
    return float(np.linalg.norm(m, np.inf))


def max_entry_norm(m: np.ndarray) -> float:
    """Largest absolute entry; not induced, reported alongside L1z."""
    return float(np.max(np.abs(np.asarray(m, dtype=float))))


def dw_norm(dw: np.ndarray, kind: NormKind) -> float:
    dw = np.asarray(dw, dtype=float)
    if dw.ndim != 3:
        raise ValueError(f"dW tensor must be 3-D, got shape {dw.shape}")
    d_x, d_z, d_theta = dw.shape
    if kind == NormKind.TWO:
        stacked = np.transpose(dw, (0, 2, 1)).reshape(d_x * d_theta, d_z)
        return float(np.linalg.norm(stacked, 2))
    return max(mat_norm(dw[:, :, i], NormKind.INFINITY) for i in range(d_theta))


def d2w_norm(d2w: np.ndarray, kind: NormKind) -> float:
    d2w = np.asarray(d2w, dtype=float)
    if d2w.ndim != 4:
        raise ValueError(f"d2W tensor must be 4-D, got shape {d2w.shape}")
    d_theta = d2w.shape[2]
    if kind == NormKind.TWO:
        total = 0.0
        for i in range(d_theta):
            for j in range(d_theta):
                total += mat_norm(d2w[:, :, i, j], NormKind.TWO) ** 2
        return float(np.sqrt(total))
    best = 0.0
    for i in range(d_theta):
        row = sum(
            mat_norm(d2w[:, :, i, j], NormKind.INFINITY) for j in range(d_theta)
        )
        best = max(best, row)
    return float(best)
