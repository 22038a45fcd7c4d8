"""Separable NMF by greedy column selection (SPA and its randomized variant).

Selection maximizes ``f(x) = x^T Q Q^T x`` over the columns of the residual
``P_perp X``. ``Q = None`` gives plain SPA (``f(x) = ||x||^2``); drawing a fresh
random ``Q`` with orthogonal columns at each extraction gives RandSPA, which
moves from SPA (``nu = m``, ``kappa = 1``) towards VCA (``nu = 1``).
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.optimize import nnls as _scipy_nnls

from .core import as_matrix, rng_stream
from .errors import ZeroResidual, InputError
from .linalg import lipschitz
from .projections import project_nonneg

__all__ = [
    "RandSpaConfig",
    "SelectionResult",
    "spa_select",
    "gen_random_q",
    "randspa",
    "nnls_solve",
    "NnlsInfo",
]


@dataclass
class RandSpaConfig:
    rank: int
    nu: int
    kappa: float = 1.5
    runs: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("rank must be >= 1")
        if self.nu < 1:
            raise InputError("nu must be >= 1")
        if self.kappa < 1:
            raise InputError("kappa must be >= 1")
        if self.runs < 1:
            raise InputError("runs must be >= 1")

    @property
    def provable(self):
        """``nu >= r``: the regime where the SPA robustness bounds carry over."""
        return self.nu >= self.rank


@dataclass
class SelectionResult:
    indices: list
    residual_norms: list
    relative_error: float = float("nan")
    H: np.ndarray | None = None
    basis: np.ndarray | None = None
    run: int = 0
    info: dict = field(default_factory=dict)


@dataclass
class NnlsInfo:
    converged: bool
    iterations: int
    kkt: float


def _nnls_pg(W, X, max_iter, tol):
    WtW = W.T @ W
    WtX = W.T @ X
    L = lipschitz(WtW)
    scale = np.maximum(np.abs(WtX).max(axis=0), np.finfo(float).tiny)
    H = project_nonneg(np.linalg.lstsq(W, X, rcond=None)[0])
    H_prev = H.copy()
    alpha = 1.0
    best, best_kkt = H, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = WtW @ H - WtX
        kkt = np.abs(np.minimum(H, grad)).max(axis=0) / scale
        worst = float(kkt.max())
        if worst < best_kkt:
            best, best_kkt = H, worst
        if worst <= tol:
            return H, NnlsInfo(True, it - 1, worst)
        alpha_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * alpha * alpha))
        beta = (alpha - 1.0) / alpha_next
        Y = H + beta * (H - H_prev)
        H_new = project_nonneg(Y - (WtW @ Y - WtX) / L)
        # gradient-based restart keeps the momentum from fighting the descent
        if np.sum((Y - H_new) * (H_new - H)) > 0:
            alpha_next = 1.0
        H_prev, H = H, H_new
        alpha = alpha_next
    grad = WtW @ H - WtX
    worst = float((np.abs(np.minimum(H, grad)).max(axis=0) / scale).max())
    if worst < best_kkt:
        best, best_kkt = H, worst
    return best, NnlsInfo(best_kkt <= tol, it, best_kkt)


def _nnls_active_set(W, X):
    H = np.empty((W.shape[1], X.shape[1]))
    for j in range(X.shape[1]):
        H[:, j] = _scipy_nnls(W, X[:, j], maxiter=50 * W.shape[1])[0]
    WtW, WtX = W.T @ W, W.T @ X
    scale = np.maximum(np.abs(WtX).max(axis=0), np.finfo(float).tiny)
    kkt = float((np.abs(np.minimum(H, WtW @ H - WtX)).max(axis=0) / scale).max())
    return H, NnlsInfo(True, 0, kkt)


def nnls_solve(W, X, method="pg", max_iter=2000, tol=1e-6, return_info=False, warn_rank=True):
    """Solve ``min_{H >= 0} ||X - W H||_F`` column by column.

    Parameters
    ----------
    W : ndarray, shape (m, r)
    X : ndarray, shape (m, n)
    method : {"pg", "active_set"}
        ``"pg"``: accelerated projected gradient, stopped when every column
        satisfies ``||min(h, grad)||_inf <= tol * ||W^T x||_inf``.
        ``"active_set"``: Lawson-Hanson, exact to rounding.
    max_iter : int
        Budget for ``"pg"``. When exhausted the best iterate is returned and
        ``info.converged`` is False.
    return_info : bool
        Also return an :class:`NnlsInfo`.
    warn_rank : bool
        Warn when ``W`` is not of full column rank.
    """
    W = as_matrix(W, "W")
    X = as_matrix(X, "X")
    if W.shape[0] != X.shape[0]:
        raise InputError(f"W has {W.shape[0]} rows but X has {X.shape[0]}")
    if warn_rank and np.linalg.matrix_rank(W) < W.shape[1]:
        warnings.warn("W is not full column rank; NNLS solution is not unique", RuntimeWarning)
    if method == "pg":
        H, info = _nnls_pg(W, X, max_iter, tol)
    elif method == "active_set":
        H, info = _nnls_active_set(W, X)
    else:
        raise InputError(f"unknown NNLS method {method!r}")
    return (H, info) if return_info else H


def _selection_scores(R, Q):
    if Q is None:
        return np.einsum("ij,ij->j", R, R)
    QtR = Q.T @ R
    return np.einsum("ij,ij->j", QtR, QtR)


def _select(X, r, draw_q):
    m, n = X.shape
    if r < 1 or r > min(m, n):
        raise InputError(f"rank must be in [1, min(m, n) = {min(m, n)}], got {r}")
    floor = 1e-14 * float(np.sum(X * X))
    R = X.copy()
    V = np.zeros((m, 0))
    indices, norms = [], []
    for k in range(r):
        Q = draw_q(k)
        f = _selection_scores(R, Q)
        f[indices] = -np.inf
        j = int(np.argmax(f))
        if not f[j] > floor:
            raise ZeroResidual(
                f"residual exhausted after {k} of {r} columns; X has lower numerical rank"
            )
        col = R[:, j]
        nrm = float(np.linalg.norm(col))
        v = col / nrm
        indices.append(j)
        norms.append(nrm)
        V = np.column_stack([V, v])
        R = R - np.outer(v, v @ R)
    return indices, norms, V


def spa_select(X, r, Q=None):
    """Greedy selection of ``r`` columns of ``X``.

    Ties go to the lowest column index. ``residual_norms[k]`` is the norm of
    the selected residual column before the k-th deflation.
    """
    X = as_matrix(X, "X")
    if Q is not None:
        Q = as_matrix(Q, "Q")
        if Q.shape[0] != X.shape[0]:
            raise InputError("Q must have as many rows as X")
    indices, norms, V = _select(X, r, lambda k: Q)
    return SelectionResult(indices=indices, residual_norms=norms, basis=V)


def gen_random_q(m, config: RandSpaConfig, run_index, step=0):
    """Random ``m x nu`` matrix with orthogonal columns of norms ``1, 1/sqrt(kappa), ...``.

    Gaussian draw orthonormalized by modified Gram-Schmidt; the stream is
    keyed on ``(seed, run_index, step)``.
    """
    nu = config.nu
    if nu > m:
        raise InputError(f"nu = {nu} exceeds m = {m}")
    rng = rng_stream(config.seed, "randspa-q", run_index, step)
    G = rng.standard_normal((m, nu))
    Q = np.empty_like(G)
    for j in range(nu):
        v = G[:, j].copy()
        for i in range(j):
            v -= (Q[:, i] @ v) * Q[:, i]
        Q[:, j] = v / np.linalg.norm(v)
    Q[:, 1:] /= np.sqrt(config.kappa)
    return Q


def randspa(X, config: RandSpaConfig, nnls_method="pg"):
    """Best of ``config.runs`` RandSPA runs by NNLS relative error.

    A fresh ``Q`` is drawn at every extraction step. With ``nu = m`` and
    ``kappa = 1`` we have ``Q Q^T = I`` and the plain squared norm is used, so
    the selection is exactly SPA's.
    """
    X = as_matrix(X, "X")
    m = X.shape[0]
    if config.nu > m:
        raise InputError(f"nu = {config.nu} exceeds m = {m}")
    plain = config.nu == m and config.kappa == 1.0
    norm_x = np.linalg.norm(X)
    best = None
    errors = []
    for run in range(config.runs):
        draw = (lambda k: None) if plain else (lambda k, run=run: gen_random_q(m, config, run, k))
        indices, norms, V = _select(X, config.rank, draw)
        W = X[:, indices]
        H, info = nnls_solve(W, X, method=nnls_method, return_info=True)
        err = float(np.linalg.norm(X - W @ H) / norm_x)
        errors.append(err)
        if best is None or err < best.relative_error:
            best = SelectionResult(indices, norms, err, H, V, run, {"nnls": info})
    best.info["run_errors"] = errors
    return best
