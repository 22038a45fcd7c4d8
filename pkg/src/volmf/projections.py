"""Euclidean projections onto the sets used by the factorization models.

Unbounded sides of a :class:`Bounds` box are written as ``-inf``/``+inf``
(in CSV files as the largest finite double, ``+-1.7976931348623157e308``,
which is treated the same way).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidBounds, InputError

__all__ = [
    "Bounds",
    "project_simplex_columns",
    "project_box_columns",
    "project_nonneg",
    "simplex_threshold",
    "simplex_threshold_sorted",
]

_BIG = np.finfo(np.float64).max


@dataclass(frozen=True)
class Bounds:
    """Row-wise interval ``[a_i, b_i]`` for the columns of ``W``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).ravel()
        b = np.asarray(self.b, dtype=np.float64).ravel()
        if a.shape != b.shape:
            raise DimensionMismatch(f"bounds lengths differ: {a.size} vs {b.size}")
        if np.any(np.isnan(a)) or np.any(np.isnan(b)):
            raise InvalidBounds("bounds contain NaN")
        a = np.where(a <= -_BIG, -np.inf, a)
        b = np.where(b >= _BIG, np.inf, b)
        if np.any(a > b):
            i = int(np.argmax(a > b))
            raise InvalidBounds(f"a[{i}] = {a[i]} > b[{i}] = {b[i]}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def scalar(cls, lo, hi, m):
        return cls(np.full(m, float(lo)), np.full(m, float(hi)))

    @classmethod
    def from_data(cls, X, mask=None):
        """Row-wise min/max over the observed entries of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if mask is None:
            return cls(X.min(axis=1), X.max(axis=1))
        obs = np.asarray(mask) > 0
        if not np.all(obs.any(axis=1)):
            raise InputError("a row of X has no observed entry; cannot derive bounds")
        a = np.where(obs, X, np.inf).min(axis=1)
        b = np.where(obs, X, -np.inf).max(axis=1)
        return cls(a, b)

    @property
    def m(self):
        return self.a.size

    def shifted(self, mu):
        mu = np.asarray(mu, dtype=np.float64).ravel()
        return Bounds(self.a - mu, self.b - mu)


def simplex_threshold_sorted(q_desc, scale=1.0):
    """Water-filling threshold for columns already sorted in descending order.

    ``q_desc`` has shape (r,) or (r, n) (one column per problem); ``scale``
    is a positive scalar or a length-n vector. Returns ``nu`` (scalar or
    (n,)) with ``sum_i max(q_i - nu, 0) = scale`` for each column.
    """
    Q = np.asarray(q_desc, dtype=np.float64)
    vector = Q.ndim == 1
    if vector:
        Q = Q[:, None]
    r, n = Q.shape
    s = np.asarray(scale, dtype=np.float64)
    if np.any(s <= 0):
        raise InputError("simplex scale must be positive")
    cand = (np.cumsum(Q, axis=0) - s) / np.arange(1, r + 1, dtype=np.float64)[:, None]
    # largest k with q_(k) > (sum_{j<=k} q_(j) - s)/k; k = 1 always qualifies
    k = r - 1 - np.argmax((Q > cand)[::-1], axis=0)
    nu = cand[k, np.arange(n)]
    return float(nu[0]) if vector else nu


def simplex_threshold(q, scale=1.0):
    """Threshold ``nu`` with ``sum_i max(q_i - nu, 0) = scale``."""
    q = np.asarray(q, dtype=np.float64)
    return simplex_threshold_sorted(-np.sort(-q, axis=0), scale)


def project_simplex_columns(A, scale=1.0):
    """Project every column of ``A`` onto ``{y >= 0, sum(y) = scale}``.

    Sort-based algorithm: O(r log r) per column, exact up to rounding.
    """
    A = np.asarray(A, dtype=np.float64)
    vector = A.ndim == 1
    if vector:
        A = A[:, None]
    nu = simplex_threshold(A, scale)
    Y = np.maximum(A - nu, 0.0)
    s = np.asarray(scale, dtype=np.float64)
    # cancellation in A - nu can leave the sum off by O(eps * max|A|); rescale
    # so that the output passes the feasibility test below
    Y *= s / Y.sum(axis=0)
    # feasible columns are returned untouched so that projection is idempotent bitwise
    slack = 4.0 * np.finfo(float).eps * A.shape[0] * s
    feasible = (A.min(axis=0) >= 0) & (np.abs(A.sum(axis=0) - s) <= slack)
    if feasible.any():
        Y[:, feasible] = A[:, feasible]
    return Y[:, 0] if vector else Y


def project_box_columns(A, bounds: Bounds):
    """Clamp row ``i`` of ``A`` to ``[a_i, b_i]``."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] != bounds.m:
        raise DimensionMismatch(f"A has {A.shape[0]} rows, bounds have {bounds.m}")
    return np.clip(A, bounds.a[:, None], bounds.b[:, None])


def project_nonneg(A):
    return np.maximum(np.asarray(A, dtype=np.float64), 0.0)
