"""Bounded simplex-structured matrix factorization (BSSMF).

Minimizes ``1/2 ||M o (X - WH)||_F^2`` subject to every column of ``W`` lying
in the box ``[a, b]`` and every column of ``H`` on the unit simplex, with an
inertial block majorization-minimization scheme: Nesterov-extrapolated
projected gradient steps on ``W`` then ``H``, whose momentum sequences run
across block switches instead of restarting.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .core import SolverOptions, FactorPair, ConvergenceTrace, as_matrix, as_mask, rng_stream
from .errors import InputError, DegenerateRow, DimensionMismatch, EmptyMask
from .linalg import lipschitz
from .projections import Bounds, project_box_columns, project_simplex_columns

__all__ = [
    "BssmfProblem",
    "ExtrapolationState",
    "bssmf_fit",
    "bssmf_multistart",
    "bssmf_objective",
    "center_data",
    "uncenter_w",
    "normalize_to_unit_box",
    "denormalize_from_unit_box",
    "prepare_data",
]

CENTERING_MODES = ("none", "global", "row_wise")

# cap on the ratio-based momentum bound
BETA_CAP = 0.9999


def prepare_data(X, mask=None):
    """Validate ``(X, mask)``; NaN entries of ``X`` become missing.

    Returns ``(X, mask)`` where hidden entries of ``X`` are set to 0 and
    ``mask`` is ``None`` when every entry is observed with weight one.
    """
    X = as_matrix(X, "X", allow_nan=True)
    nan = np.isnan(X)
    if mask is not None:
        mask = as_mask(mask, X.shape)
        if np.any(nan & (mask > 0)):
            raise InputError("X has NaN at observed positions")
    elif np.any(nan):
        mask = (~nan).astype(np.float64)
        if not np.any(mask):
            raise EmptyMask("every entry of X is missing")
    if np.any(np.isinf(X)):
        raise InputError("X contains Inf")
    if mask is not None:
        X = np.where(mask > 0, X, 0.0)
    return X, mask


@dataclass
class BssmfProblem:
    """Data, weights, box and rank of one BSSMF instance.

    ``bounds=None`` derives the box from the row-wise min/max of the
    observed entries.
    """

    X: np.ndarray
    rank: int
    mask: np.ndarray | None = None
    bounds: Bounds | None = None
    centering: str = "none"

    def __post_init__(self):
        self.X, self.mask = prepare_data(self.X, self.mask)
        m, n = self.X.shape
        if not 1 <= self.rank <= min(m, n):
            raise InputError(f"rank must be in [1, {min(m, n)}], got {self.rank}")
        if self.centering not in CENTERING_MODES:
            raise InputError(f"unknown centering {self.centering!r}")
        if self.bounds is None:
            self.bounds = Bounds.from_data(self.X, self.mask)
        elif not isinstance(self.bounds, Bounds):
            a, b = self.bounds
            self.bounds = Bounds(np.broadcast_to(a, (m,)), np.broadcast_to(b, (m,)))
        if self.bounds.m != m:
            raise DimensionMismatch(f"bounds have length {self.bounds.m}, X has {m} rows")
        obs = np.ones_like(self.X, dtype=bool) if self.mask is None else self.mask > 0
        lo = np.where(obs, self.X, np.inf).min(axis=1)
        hi = np.where(obs, self.X, -np.inf).max(axis=1)
        if np.any(lo < self.bounds.a) or np.any(hi > self.bounds.b):
            warnings.warn("observed data fall outside the bounds", RuntimeWarning)


@dataclass
class ExtrapolationState:
    """Nesterov sequence and Lipschitz history of one block."""

    alpha: float = 1.0
    L_prev: float = 1.0
    L: float = 1.0

    def next_beta(self):
        alpha0 = self.alpha
        self.alpha = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha0 * alpha0))
        beta = min((alpha0 - 1.0) / self.alpha, BETA_CAP * math.sqrt(self.L_prev / self.L))
        return beta


def center_data(X, mode="none", mask=None):
    """Subtract the row-wise or global mean (over observed entries).

    Returns
    -------
    Xc : ndarray
        ``X - mu e^T``; hidden entries stay 0 when a mask is given.
    mu : ndarray, shape (m,)
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if mode not in CENTERING_MODES:
        raise InputError(f"unknown centering {mode!r}")
    if mode == "none":
        return X.copy(), np.zeros(m)
    if mask is None:
        if mode == "global":
            mu = np.full(m, X.mean())
        else:
            mu = X.mean(axis=1)
        return X - mu[:, None], mu
    obs = np.asarray(mask) > 0
    if mode == "global":
        mu = np.full(m, X[obs].mean())
    else:
        counts = obs.sum(axis=1)
        if np.any(counts == 0):
            raise InputError("a row has no observed entry")
        mu = np.where(obs, X, 0.0).sum(axis=1) / counts
    return np.where(obs, X - mu[:, None], 0.0), mu


def uncenter_w(Wc, mu):
    """``W = Wc + mu e^T``."""
    return np.asarray(Wc, dtype=np.float64) + np.asarray(mu, dtype=np.float64).reshape(-1, 1)


def normalize_to_unit_box(X, bounds: Bounds):
    """Map row ``i`` of ``X`` affinely from ``[a_i, b_i]`` onto ``[0, 1]``."""
    X = np.asarray(X, dtype=np.float64)
    width = bounds.b - bounds.a
    if not np.all(np.isfinite(width)):
        raise InputError("normalization needs finite bounds")
    if np.any(width <= 0):
        i = int(np.argmax(width <= 0))
        raise DegenerateRow(f"row {i} has a_i = b_i; remove constant rows first")
    return (X - bounds.a[:, None]) / width[:, None]


def denormalize_from_unit_box(Xn, bounds: Bounds):
    """Inverse of :func:`normalize_to_unit_box`."""
    Xn = np.asarray(Xn, dtype=np.float64)
    return Xn * (bounds.b - bounds.a)[:, None] + bounds.a[:, None]


_RANKS = np.arange(1, 65, dtype=np.float64)[:, None]


def _simplex_step(A):
    # lean column-simplex projection for the inner loop (scale 1, 2-D input)
    r, n = A.shape
    Q = -np.sort(-A, axis=0)
    cand = (np.cumsum(Q, axis=0) - 1.0) / _RANKS[:r]
    k = r - 1 - np.argmax((Q > cand)[::-1], axis=0)
    return np.maximum(A - cand[k, np.arange(n)], 0.0)


def bssmf_objective(X, W, H, mask=None):
    """``1/2 ||M o (X - WH)||_F^2``."""
    R = X - W @ H
    if mask is not None:
        R = mask * R
    return 0.5 * float(np.sum(R * R))


def _init_factors(bounds: Bounds, n, r, seed):
    rng = rng_stream(seed, "bssmf-init")
    a = np.where(np.isfinite(bounds.a), bounds.a, np.where(np.isfinite(bounds.b), bounds.b - 1.0, 0.0))
    b = np.where(np.isfinite(bounds.b), bounds.b, a + 1.0)
    W = a[:, None] + (b - a)[:, None] * rng.random((bounds.m, r))
    H = project_simplex_columns(rng.random((r, n)))
    return W, H


def bssmf_fit(problem: BssmfProblem, opts: SolverOptions | None = None, W0=None, H0=None):
    """Fit a BSSMF model.

    Parameters
    ----------
    problem : BssmfProblem
    opts : SolverOptions
        ``outer`` and ``inner`` are the iteration budgets; ``tol > 0`` stops
        once the relative objective change falls below it; the fit also stops
        when the objective reaches the rounding level of the data. ``seed`` drives the
        random initialization; ``debug`` asserts the momentum bound.
    W0, H0 : ndarray, optional
        Feasible starting factors (in the original, uncentered coordinates).

    Returns
    -------
    FactorPair, ConvergenceTrace
        ``W`` is returned in the original coordinates.
    """
    opts = opts or SolverOptions(rank=problem.rank)
    X, M, bounds, r = problem.X, problem.mask, problem.bounds, problem.rank
    m, n = X.shape
    centering = problem.centering if problem.centering != "none" else opts.centering
    if centering not in CENTERING_MODES:
        raise InputError(f"unknown centering {centering!r}")
    Xc, mu = center_data(X, centering, M)
    box = bounds.shifted(mu)
    M2 = None if M is None else M * M

    if W0 is None or H0 is None:
        W, H = _init_factors(bounds, n, r, opts.seed)
        W = W if W0 is None else as_matrix(W0, "W0")
        H = H if H0 is None else as_matrix(H0, "H0")
    else:
        W, H = as_matrix(W0, "W0"), as_matrix(H0, "H0")
    if W.shape != (m, r) or H.shape != (r, n):
        raise DimensionMismatch("initial factors have wrong shapes")
    W = project_box_columns(W - mu[:, None], box)
    H = project_simplex_columns(H)

    def residual(Wk, Hk):
        R = Xc - Wk @ Hk
        return R if M2 is None else M2 * R

    lo, hi = box.a[:, None], box.b[:, None]
    simplex = _simplex_step if r <= _RANKS.shape[0] else project_simplex_columns
    # a fit at rounding level of the data cannot improve further
    exact = 0.5 * (4 * np.finfo(float).eps) ** 2 * float(np.sum((Xc if M is None else M * Xc) ** 2))
    trace = ConvergenceTrace()
    obj = bssmf_objective(Xc, W, H, M)
    trace.record(0, obj, 0.0, 0.0)
    W_old, H_old = W.copy(), H.copy()
    LW = lipschitz(H @ H.T)
    LH = lipschitz(W.T @ W)
    sw = ExtrapolationState(1.0, LW, LW)
    sh = ExtrapolationState(1.0, LH, LH)
    for it in range(1, opts.outer + 1):
        sw.L = LW
        for _ in range(opts.inner):
            beta = sw.next_beta()
            if opts.debug:
                assert 0.0 <= beta <= BETA_CAP * math.sqrt(sw.L_prev / sw.L) + 1e-15
            Wbar = W + beta * (W - W_old)
            W_old = W
            W = np.minimum(np.maximum(Wbar + residual(Wbar, H) @ H.T / sw.L, lo), hi)
            sw.L_prev = sw.L
        sh.L = lipschitz(W.T @ W)
        for _ in range(opts.inner):
            beta = sh.next_beta()
            if opts.debug:
                assert 0.0 <= beta <= BETA_CAP * math.sqrt(sh.L_prev / sh.L) + 1e-15
            Hbar = H + beta * (H - H_old)
            H_old = H
            H = simplex(Hbar + W.T @ residual(W, Hbar) / sh.L)
            sh.L_prev = sh.L
        LW = lipschitz(H @ H.T)
        if LW == 0.0 or sh.L == 0.0:
            trace.flags["degenerate"] = it
            break
        prev = obj
        obj = bssmf_objective(Xc, W, H, M)
        trace.record(it, obj, 0.0, 0.0)
        if not np.isfinite(obj):
            trace.flags["nan"] = it
            break
        if obj <= exact:
            trace.flags["exact_fit"] = it
            break
        if opts.tol > 0 and abs(prev - obj) <= opts.tol * max(prev, np.finfo(float).tiny):
            trace.flags["converged"] = it
            break
    else:
        trace.flags["budget_exhausted"] = True
    pair = FactorPair(uncenter_w(W, mu), H, {"centering": centering, "mu": mu})
    return pair, trace


def bssmf_multistart(problem: BssmfProblem, opts: SolverOptions, starts=10):
    """Best of ``starts`` fits (seeds ``opts.seed + k``) by final objective.

    Returns ``(pair, trace, seed)`` of the winner; ties go to the lowest seed.
    """
    best = None
    for k in range(starts):
        o = SolverOptions(**{**opts.to_dict(), "seed": opts.seed + k})
        pair, trace = bssmf_fit(problem, o)
        if best is None or trace.final_objective < best[1].final_objective:
            best = (pair, trace, o.seed)
    return best
