"""Shared containers: solver options, factor pairs, convergence traces, RNG streams.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (C order).
:func:`as_matrix` is the single validation gate used at public entry points.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InputError, EmptyMask, DimensionMismatch

__all__ = [
    "as_matrix",
    "as_mask",
    "SolverOptions",
    "FactorPair",
    "ConvergenceTrace",
    "rng_stream",
]

#: Version tag of the stream-splitting rule in :func:`rng_stream`.
RNG_SCHEME = "pcg64-seedseq-crc32/v1"


def as_matrix(A, name="matrix", allow_nan=False) -> np.ndarray:
    """Return ``A`` as a finite, non-empty 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"{name} must be non-empty, got shape {A.shape}")
    if not allow_nan and not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(A)


def as_mask(mask, shape) -> np.ndarray | None:
    """Validate an observation mask (entries in [0, 1]); ``None`` passes through."""
    if mask is None:
        return None
    M = as_matrix(mask, "mask")
    if M.shape != tuple(shape):
        raise DimensionMismatch(f"mask shape {M.shape} != data shape {tuple(shape)}")
    if M.min() < 0 or M.max() > 1:
        raise InputError("mask entries must lie in [0, 1]")
    if not np.any(M > 0):
        raise EmptyMask("mask has no observed entry")
    return M


def rng_stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, tag, *index)``.

    The stream key is ``SeedSequence([seed mod 2**64, crc32(tag), *index])``;
    identical keys give identical streams on every platform.
    """
    key = [int(seed) % (1 << 64), zlib.crc32(tag.encode("utf-8"))]
    key.extend(int(i) for i in index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@dataclass
class SolverOptions:
    """Hyperparameters and budgets shared by all solvers.

    ``lam``, ``delta``, ``gamma`` and ``rho`` are only read by the solvers that
    use them. ``tol`` is a relative objective-change stopping tolerance; 0
    disables it so that only the iteration budgets apply.
    """

    rank: int = 3
    lam: float | None = None
    delta: float | None = None
    gamma: float | None = None
    rho: float = 0.01
    outer: int = 500
    inner: int = 20
    seed: int = 0
    centering: str = "none"
    algorithm: str | None = None
    tol: float = 0.0
    debug: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def rank(self):
        return self.W.shape[1]

    def product(self):
        return self.W @ self.H


class ConvergenceTrace:
    """Per-outer-iteration record of fit, regularizer and objective.

    Every row satisfies ``objective = fit + weight * reg`` where ``weight`` is
    the signed coefficient of the model's regularizer at that iteration
    (``lambda`` for MinVol, ``-lambda`` for MaxVol, 0 for plain NMF).
    Additional per-iteration quantities go in :attr:`extra`; events such as
    budget exhaustion or NaN aborts go in :attr:`flags`.
    """

    def __init__(self):
        self.iters: list[int] = []
        self.elapsed: list[float] = []
        self.fit: list[float] = []
        self.reg: list[float] = []
        self.weight: list[float] = []
        self.objective: list[float] = []
        self.extra: dict[str, list[float]] = {}
        self.flags: dict = {}
        self.events: list[tuple[int, str]] = []
        self._t0 = time.perf_counter()

    def __len__(self):
        return len(self.iters)

    def record(self, it, fit, reg, weight, **extra):
        self.iters.append(int(it))
        self.elapsed.append(time.perf_counter() - self._t0)
        self.fit.append(float(fit))
        self.reg.append(float(reg))
        self.weight.append(float(weight))
        self.objective.append(float(fit) + float(weight) * float(reg))
        for key, val in extra.items():
            self.extra.setdefault(key, []).append(float(val))

    def log(self, it, message):
        self.events.append((int(it), message))

    @property
    def final_objective(self):
        return self.objective[-1]

    def as_array(self):
        return np.column_stack(
            [self.iters, self.elapsed, self.fit, self.reg, self.objective]
        ).astype(float)
