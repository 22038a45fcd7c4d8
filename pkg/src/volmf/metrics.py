"""Quality measures: relative error, hidden-entry RMSE, MRSA, subspace angle."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ZeroDataNorm,
    EmptyComplement,
    DegenerateVector,
    RankDeficient,
    DimensionMismatch,
    InputError,
)
from .linalg import spectral_norm

__all__ = [
    "EvaluationReport",
    "relative_error",
    "rmse_unobserved",
    "mrsa",
    "mrsa_matched",
    "subspace_angle",
]


@dataclass
class EvaluationReport:
    relative_error: float
    rmse_unobserved: float | None = None
    mrsa_mean: float | None = None
    subspace_angle_rad: float | None = None

    def __post_init__(self):
        if self.relative_error < 0:
            raise InputError("relative_error must be nonnegative")
        if self.rmse_unobserved is not None and self.rmse_unobserved < 0:
            raise InputError("rmse_unobserved must be nonnegative")
        if self.mrsa_mean is not None and not 0 <= self.mrsa_mean <= 100:
            raise InputError("mrsa_mean must lie in [0, 100]")
        if self.subspace_angle_rad is not None and not 0 <= self.subspace_angle_rad <= math.pi / 2:
            raise InputError("subspace angle must lie in [0, pi/2]")


def relative_error(X, W, H, mask=None):
    """``||M o (X - WH)||_F / ||M o X||_F`` (``M`` = all ones when absent)."""
    X = np.asarray(X, dtype=np.float64)
    R = X - np.asarray(W) @ np.asarray(H)
    if mask is not None:
        M = np.asarray(mask, dtype=np.float64)
        R = M * R
        X = M * X
    denom = np.linalg.norm(X)
    if denom == 0:
        raise ZeroDataNorm("data has zero (observed) norm")
    return float(np.linalg.norm(R) / denom)


def rmse_unobserved(X_full, W, H, mask):
    """Root mean squared error of ``WH`` on the entries where ``mask == 0``."""
    hidden = np.asarray(mask) == 0
    count = int(hidden.sum())
    if count == 0:
        raise EmptyComplement("mask hides no entry")
    R = (np.asarray(X_full, dtype=np.float64) - np.asarray(W) @ np.asarray(H))[hidden]
    return float(math.sqrt(float(R @ R) / count))


def mrsa(a, b):
    """Mean-removed spectral angle between two signatures, scaled to [0, 100]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch("mrsa needs vectors of equal length")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-14 or nb < 1e-14:
        raise DegenerateVector("mean-removed vector is (numerically) zero")
    c = float(a @ b) / (na * nb)
    return 100.0 / math.pi * math.acos(min(1.0, max(-1.0, c)))


def _mrsa_table(Wtrue, West):
    r = Wtrue.shape[1]
    return np.array([[mrsa(Wtrue[:, i], West[:, j]) for j in range(r)] for i in range(r)])


def mrsa_matched(Wtrue, West, return_perm=False):
    """Mean column MRSA after the best column permutation of ``West``.

    Exhaustive search for r <= 8; above that a greedy assignment refined by
    pairwise swaps until no swap improves the mean.
    """
    Wtrue = np.asarray(Wtrue, dtype=np.float64)
    West = np.asarray(West, dtype=np.float64)
    if Wtrue.shape != West.shape:
        raise DimensionMismatch(f"shapes differ: {Wtrue.shape} vs {West.shape}")
    r = Wtrue.shape[1]
    if r > 12:
        raise InputError("mrsa_matched supports r <= 12")
    D = _mrsa_table(Wtrue, West)
    rows = np.arange(r)
    if r <= 8:
        best = min(itertools.permutations(range(r)), key=lambda p: D[rows, list(p)].sum())
        perm = list(best)
    else:
        perm = []
        free = set(range(r))
        for i in range(r):
            j = min(free, key=lambda j: D[i, j])
            perm.append(j)
            free.remove(j)
        improved = True
        while improved:
            improved = False
            for i, k in itertools.combinations(range(r), 2):
                if D[i, perm[k]] + D[k, perm[i]] < D[i, perm[i]] + D[k, perm[k]] - 1e-15:
                    perm[i], perm[k] = perm[k], perm[i]
                    improved = True
    value = float(D[rows, perm].mean())
    return (value, perm) if return_perm else value


def _orth_basis(W):
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    Q, R = np.linalg.qr(W)
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= 1e-12 * max(d.max(), 1e-300):
        raise RankDeficient("matrix is (numerically) rank deficient")
    return Q


def subspace_angle(W, West):
    """Largest principal angle ``arcsin(min(1, ||U~ - U U^T U~||))`` in radians."""
    U = _orth_basis(W)
    Ut = _orth_basis(West)
    if U.shape[0] != Ut.shape[0]:
        raise DimensionMismatch("bases live in spaces of different dimension")
    s = spectral_norm(Ut - U @ (U.T @ Ut))
    return float(math.asin(min(1.0, s)))
