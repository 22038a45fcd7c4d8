"""Small dense kernels used by every solver.

All routines work in float64 and never mutate their inputs.
"""

import math

import numpy as np
from scipy.linalg import cho_solve

from .errors import NotPositiveDefinite, ConvergenceFailure, InputError

__all__ = [
    "spectral_norm",
    "lipschitz",
    "SpdFactorization",
    "cholesky_spd",
    "spd_inverse",
    "logdet_spd",
    "sym_eig",
]

# safety margin applied to norm estimates used as Lipschitz constants
LIPSCHITZ_MARGIN = 1e-8


def _power_iteration(G, v, tol, max_iter):
    """Rayleigh-quotient power iteration on a symmetric PSD matrix ``G``.

    Returns ``(mu, stalled)``; ``stalled`` means the quotient froze while the
    iterate was still far from an eigenvector.
    """
    mu = 0.0
    frozen = 0
    for _ in range(max_iter):
        w = G @ v
        nw = math.sqrt(float(w @ w))
        if nw == 0.0:
            return 0.0, True
        mu_new = float(v @ w)
        change = abs(mu_new - mu)
        residual = math.sqrt(max(float(w @ w) - mu_new * mu_new, 0.0))
        if change <= 1e-12 * abs(mu_new) and residual > 1e-6 * nw:
            frozen += 1
            if frozen >= 3:
                return mu_new, True
        else:
            frozen = 0
        v = w / nw
        if change <= tol * abs(mu_new):
            return mu_new, False
        mu = mu_new
    return mu, False


def spectral_norm(A, tol=1e-10, max_iter=500) -> float:
    """Largest singular value of ``A`` by power iteration on the smaller Gram matrix.

    The iteration starts from the normalized all-ones vector; if it stalls
    (or the start vector lies in the null space) it restarts from the
    canonical basis vectors ``e_1, e_2, ...``. The result is deterministic.

    Parameters
    ----------
    A : array_like, shape (m, n)
    tol : float
        Relative change of the Rayleigh quotient at which to stop.
    max_iter : int
        Iteration budget per start vector.

    Returns
    -------
    float
        ``sigma_max(A)``; 0 for the zero matrix.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.size == 0 or not np.any(A):
        return 0.0
    m, n = A.shape
    G = A.T @ A if n <= m else A @ A.T
    k = G.shape[0]
    starts = [np.full(k, 1.0 / math.sqrt(k))]
    best = 0.0
    for attempt in range(k + 1):
        v = starts[0] if attempt == 0 else np.eye(k)[attempt - 1]
        mu, stalled = _power_iteration(G, v, tol, max_iter)
        best = max(best, mu)
        if not stalled:
            break
    return math.sqrt(max(best, 0.0))


def lipschitz(A) -> float:
    """``spectral_norm(A)`` inflated by a relative margin of 1e-8 for step sizes."""
    return spectral_norm(A) * (1.0 + LIPSCHITZ_MARGIN)


class SpdFactorization:
    """Cholesky factor ``L`` (lower, positive diagonal) of a symmetric matrix."""

    def __init__(self, L, jitter=0.0):
        self.L = L
        self.dim = L.shape[0]
        self.jitter = jitter

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))

    def solve(self, B):
        return cho_solve((self.L, True), B)

    def inverse(self):
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)


def _square_symmetric(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InputError(f"expected a non-empty square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def cholesky_spd(A) -> SpdFactorization:
    """Cholesky factorization with one jitter retry.

    On failure, ``1e-12 * trace(A) / dim`` is added to the diagonal and the
    factorization retried once before raising :class:`NotPositiveDefinite`.
    """
    S = _square_symmetric(A)
    try:
        return SpdFactorization(np.linalg.cholesky(S))
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * abs(np.trace(S)) / S.shape[0]
    try:
        L = np.linalg.cholesky(S + jitter * np.eye(S.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    if not np.all(np.diag(L) > 0):
        raise NotPositiveDefinite("matrix is not positive definite")
    return SpdFactorization(L, jitter)


def spd_inverse(A) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    return cholesky_spd(A).inverse()


def logdet_spd(A) -> float:
    """``log det A`` for SPD ``A`` as ``2 * sum(log(diag(L)))``."""
    return cholesky_spd(A).logdet()


def sym_eig(A, max_sweeps=100):
    """Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns
    -------
    values : ndarray, shape (k,)
        Eigenvalues in descending order.
    vectors : ndarray, shape (k, k)
        Orthonormal eigenvectors as columns, ``A = V diag(values) V^T``.
    """
    A = _square_symmetric(A).copy()
    k = A.shape[0]
    V = np.eye(k)
    scale = np.linalg.norm(A)
    if k == 1 or scale == 0.0:
        return np.diag(A).copy(), V
    eps = np.finfo(float).eps
    offdiag = ~np.eye(k, dtype=bool)

    def off_norm():
        return float(np.linalg.norm(A[offdiag]))

    for _ in range(max_sweeps):
        off = off_norm()
        if off <= eps * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if abs(apq) <= eps * eps * scale:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        off = off_norm()
        if off > 1e-10 * scale:
            raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]
