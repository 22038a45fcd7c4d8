"""Maximum-volume NMF and its row-normalized variant.

The model is ``1/2 ||X - WH||_F^2 - lam * logdet(H H^T + delta I)`` with
``W >= 0`` and the columns of ``H`` on the unit simplex. The normalized
variant rewards the volume of ``S^{-1} H`` (rows scaled to unit norm) and
drops the simplex constraint.

Two solvers are provided:

* :func:`adgrad2_fit`, an adaptive accelerated projected gradient method
  that estimates the local Lipschitz constant from the last two iterates;
* :func:`admm_fit`, an ADMM splitting ``Y = H H^T``: ``W`` by an extrapolated
  projected gradient loop, ``H`` by a Bregman proximal step under a quartic
  kernel (or by the adaptive method), ``Y`` in closed form in eigen-space,
  then dual ascent.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core import SolverOptions, FactorPair, ConvergenceTrace, as_matrix, rng_stream
from .errors import InputError, NegativeInput, ZeroRow, NumericalError, DimensionMismatch
from .linalg import lipschitz, spectral_norm, cholesky_spd, sym_eig
from .projections import project_simplex_columns, project_nonneg, simplex_threshold_sorted

__all__ = [
    "ALGORITHMS",
    "MaxvolModel",
    "AdmmState",
    "AdaptiveStepState",
    "maxvol_gradient_h",
    "maxvol_gradient_w",
    "maxvol_objective",
    "normalized_logdet",
    "normalized_logdet_bounds",
    "normalized_gradient_h",
    "adgrad2_fit",
    "admm_fit",
    "nmaxvol_fit",
    "maxvol_fit",
    "bregman_h_update",
    "phi_plus",
    "y_update",
]

ALGORITHMS = ("adgrad2", "admm_bregman", "admm_adgrad")

DEFAULT_DELTA = 1.0
DEFAULT_DELTA_NORMALIZED = 0.5
DEFAULT_RHO = 0.01

# initial growth ratios of the adaptive step rule
ADGRAD_THETA0 = 1e9
# size of the probing step that creates the second point of the adaptive rule
ADGRAD_PROBE = 1e-6


@dataclass
class MaxvolModel:
    lam: float = 1.0
    delta: float | None = None
    normalized: bool = False
    algorithm: str = "adgrad2"
    rho: float = DEFAULT_RHO
    bregman_steps: int | None = None

    def __post_init__(self):
        if self.delta is None:
            self.delta = DEFAULT_DELTA_NORMALIZED if self.normalized else DEFAULT_DELTA
        if self.lam < 0:
            raise InputError("lambda must be nonnegative")
        if self.delta < 0:
            raise InputError("delta must be nonnegative")
        if self.normalized and not self.delta > 0:
            raise InputError("the normalized variant needs delta > 0")
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.normalized and self.algorithm != "adgrad2":
            raise InputError("the normalized variant is solved with adgrad2 only")
        if not self.rho > 0:
            raise InputError("rho must be positive")


@dataclass
class AdmmState:
    Y: np.ndarray
    Lam: np.ndarray
    rho: float


class AdaptiveStepState:
    """Step-size memory of the adaptive method for one block.

    ``gamma`` estimates an inverse local Lipschitz constant and ``Gamma`` the
    constant itself; both may grow by at most ``sqrt(1 + ratio/2)`` per step.
    """

    def __init__(self, x0, grad0, L0, proj):
        L0 = L0 if L0 > 0 else 1.0
        self.Gamma = L0
        self.gamma = 1.0 / L0
        self.theta = self.Theta = ADGRAD_THETA0
        self.x_bar_old = x0
        self.x = proj(x0 - ADGRAD_PROBE * grad0)
        self.x_bar = self.x
        self.x_old = x0
        self.steps = 0
        self.stalls = 0

    def run(self, grad_fn, proj, steps, debug=False):
        """``steps`` adaptive projected-gradient steps; returns the last iterate."""
        # the other block moved since the last call, so refresh the old gradient
        g_old = grad_fn(self.x_bar_old)
        for _ in range(steps):
            g = grad_fn(self.x_bar)
            dx = float(np.linalg.norm(self.x_bar - self.x_bar_old))
            dg = float(np.linalg.norm(g - g_old))
            gamma_cap = self.gamma * math.sqrt(1.0 + self.theta / 2.0)
            Gamma_cap = self.Gamma * math.sqrt(1.0 + self.Theta / 2.0)
            if dx > 0 and dg > 0:
                gamma = min(gamma_cap, dx / (2.0 * dg))
                Gamma = min(Gamma_cap, dg / (2.0 * dx))
            else:
                # identical points or gradients: keep the previous estimates
                gamma, Gamma = self.gamma, self.Gamma
                self.stalls += 1
            if debug:
                assert gamma <= gamma_cap * (1 + 1e-12)
            x = proj(self.x_bar - gamma * g)
            self.theta = gamma / self.gamma
            self.Theta = Gamma / self.Gamma
            self.x_bar_old, g_old = self.x_bar, g
            t = math.sqrt(gamma * Gamma)
            self.x_bar = x + (1.0 - t) / (1.0 + t) * (x - self.x_old)
            self.x_old = x
            self.x = x
            self.gamma, self.Gamma = gamma, Gamma
            self.steps += 1
        return self.x


def _gram_inverse(H, delta):
    return cholesky_spd(H @ H.T + delta * np.eye(H.shape[0])).inverse()


def maxvol_gradient_w(W, H, X):
    """``(WH - X) H^T``."""
    return (W @ H - X) @ H.T


def _volume_grad(H, lam, delta):
    return -2.0 * lam * (_gram_inverse(H, delta) @ H)


def maxvol_gradient_h(W, H, X, lam, delta):
    """``W^T (WH - X) - 2 lam (H H^T + delta I)^{-1} H``."""
    W, H, X = (np.asarray(A, dtype=np.float64) for A in (W, H, X))
    grad = W.T @ (W @ H - X)
    if lam != 0:
        grad = grad + _volume_grad(H, lam, delta)
    return grad


def _row_scales(H):
    s = np.linalg.norm(H, axis=1)
    floor = 1e-12 * float(np.linalg.norm(H))
    if np.any(s <= floor) or not np.all(np.isfinite(s)):
        i = int(np.argmin(s))
        raise ZeroRow(f"row {i} of H is (numerically) zero")
    return s


def normalized_logdet(H, delta):
    """``logdet(Ht Ht^T + delta I)`` with ``Ht`` the row-normalized ``H``."""
    H = np.asarray(H, dtype=np.float64)
    Ht = H / _row_scales(H)[:, None]
    return cholesky_spd(Ht @ Ht.T + delta * np.eye(H.shape[0])).logdet()


def normalized_logdet_bounds(r, delta):
    """Closed-form range ``[log(1 + r/delta) + r log delta, r log(1 + delta)]``."""
    return math.log(1.0 + r / delta) + r * math.log(delta), r * math.log(1.0 + delta)


def normalized_gradient_h(W, H, X, lam, delta):
    """Gradient in ``H`` of ``1/2 ||X - WH||^2 - lam logdet(Ht Ht^T + delta I)``.

    With ``S = diag(||H(i,:)||)``, ``Ht = S^{-1} H`` and
    ``A = (Ht Ht^T + delta I)^{-1}`` the penalty contributes
    ``-2 lam S^{-1} [A - diag(diag(A Ht Ht^T))] Ht``.
    """
    W, H, X = (np.asarray(A, dtype=np.float64) for A in (W, H, X))
    grad = W.T @ (W @ H - X)
    if lam == 0:
        return grad
    return grad + _normalized_volume_grad(H, lam, delta)


def _normalized_volume_grad(H, lam, delta):
    s = _row_scales(H)
    Ht = H / s[:, None]
    G = Ht @ Ht.T
    A = cholesky_spd(G + delta * np.eye(H.shape[0])).inverse()
    B = A - np.diag(np.einsum("ij,ji->i", A, G))
    return -2.0 * lam * ((B @ Ht) / s[:, None])


def maxvol_objective(X, W, H, model: MaxvolModel):
    """Return ``(fit, reg, weight)`` with objective ``fit + weight * reg``."""
    R = X - W @ H
    fit = 0.5 * float(np.sum(R * R))
    if model.normalized:
        reg = normalized_logdet(H, model.delta)
    else:
        reg = cholesky_spd(H @ H.T + model.delta * np.eye(H.shape[0])).logdet()
    return fit, reg, -model.lam


def phi_plus(x, gamma):
    """``(sqrt(x^2 + 4 gamma) + x) / 2``, the positive root of ``z^2 - x z - gamma``.

    Evaluated without cancellation for negative ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.asarray(gamma) < 0):
        raise InputError("gamma must be nonnegative")
    root = np.sqrt(x * x + 4.0 * gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = np.where(root - x > 0, 2.0 * gamma / (root - x), 0.0)
    z = np.where(x >= 0, 0.5 * (root + x), neg)
    return float(z) if z.ndim == 0 else z


def y_update(H, Lam, rho, lam, delta):
    """Closed-form minimizer in ``Y`` of the augmented Lagrangian.

    ``Y = Phi_{lam/rho}(H H^T + delta I - Lam/rho) - delta I`` with ``Phi``
    acting on the eigenvalues.
    """
    r = H.shape[0]
    A = H @ H.T + delta * np.eye(r) - Lam / rho
    A = 0.5 * (A + A.T)
    d, V = sym_eig(A)
    Z = (V * phi_plus(d, lam / rho)) @ V.T
    Y = Z - delta * np.eye(r)
    return 0.5 * (Y + Y.T)


def _lagrangian_grad_h(W, H, X, Y, Lam, rho):
    """Gradient in ``H`` of the augmented Lagrangian (``Lam`` symmetric)."""
    return W.T @ (W @ H - X) - 2.0 * (Lam @ H) + 2.0 * rho * ((H @ H.T - Y) @ H)


def bregman_h_update(W, X, H_k, Y, Lam, rho, eps=1e-6, max_iter=100, return_info=False):
    """One Bregman proximal step in ``H`` under the quartic kernel.

    The kernel is ``a/4 ||H||^4 + s/2 ||H||^2`` with ``a = 6 rho`` and
    ``s = 2 rho ||Y|| + ||W^T W - 2 Lam||``. The minimizer over column
    stochastic ``H`` is ``[Q - e nu^T]_+ / (a ||H||^2 + s)``; the unknown
    ``||H||^2`` is found by fixed-point iteration, with ``Q`` sorted once.
    """
    r, n = H_k.shape
    alpha_t = 6.0 * rho
    sigma_t = rho * 2.0 * spectral_norm(Y) + spectral_norm(W.T @ W - 2.0 * Lam)
    if not sigma_t > 0:
        sigma_t = np.finfo(float).eps
    norm2 = float(np.sum(H_k * H_k))
    grad_h = (alpha_t * norm2 + sigma_t) * H_k
    Q = grad_h - _lagrangian_grad_h(W, H_k, X, Y, Lam, rho)
    Q_sorted = -np.sort(-Q, axis=0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        scale = alpha_t * norm2 + sigma_t
        nu = simplex_threshold_sorted(Q_sorted, scale)
        H = np.maximum(Q - nu[None, :], 0.0) / scale
        new = float(np.sum(H * H))
        change = abs(norm2 - new) / max(norm2, np.finfo(float).tiny)
        norm2 = new
        if change <= eps:
            converged = True
            break
    # exact column sums: the threshold solves sum = scale up to rounding
    H = H / H.sum(axis=0)
    if return_info:
        return H, {"iterations": it, "converged": converged}
    return H


def _check_data(X, r):
    X = as_matrix(X, "X")
    if np.any(X < 0):
        raise NegativeInput("X must be nonnegative")
    m, n = X.shape
    if not 1 <= r <= min(m, n):
        raise InputError(f"rank must be in [1, {min(m, n)}], got {r}")
    return X


def _init_factors(X, r, seed, simplex_h=True):
    m, n = X.shape
    rng = rng_stream(seed, "maxvol-init")
    cols = rng.choice(n, size=r, replace=False)
    W = X[:, cols] + 1e-2 * float(X.max()) * rng.random((m, r))
    H = rng.random((r, n))
    H = project_simplex_columns(H / H.sum(axis=0))
    return W, H


def _start(X, r, opts, W0, H0, simplex_h):
    if W0 is None or H0 is None:
        W, H = _init_factors(X, r, opts.seed, simplex_h)
    else:
        W, H = as_matrix(W0, "W0").copy(), as_matrix(H0, "H0").copy()
    if W.shape != (X.shape[0], r) or H.shape != (r, X.shape[1]):
        raise DimensionMismatch("initial factors have wrong shapes")
    W = project_nonneg(W)
    H = project_simplex_columns(H) if simplex_h else project_nonneg(H)
    return W, H


def _reseed_zero_rows(H, X, rng, trace, it):
    s = np.linalg.norm(H, axis=1)
    bad = s <= 1e-12 * max(float(np.linalg.norm(H)), np.finfo(float).tiny)
    if np.any(bad):
        H = H.copy()
        H[bad] = rng.uniform(0.0, float(X.max()), size=(int(bad.sum()), H.shape[1]))
        trace.flags.setdefault("reseeded_rows", []).append(it)
    return H


def adgrad2_fit(X, model: MaxvolModel | None = None, opts: SolverOptions | None = None, W0=None, H0=None):
    """MaxVol NMF (standard or normalized) by the adaptive accelerated method.

    Returns
    -------
    FactorPair, ConvergenceTrace
        On a non-finite iterate the last finite pair is returned and
        ``trace.flags["nan"]`` holds the iteration.
    """
    model = model or MaxvolModel()
    opts = opts or SolverOptions()
    r = opts.rank
    X = _check_data(X, r)
    simplex_h = not model.normalized
    W, H = _start(X, r, opts, W0, H0, simplex_h)
    lam, delta = model.lam, model.delta
    proj_h = project_simplex_columns if simplex_h else project_nonneg
    grad_h_fn = normalized_gradient_h if model.normalized else maxvol_gradient_h
    penalty = _normalized_volume_grad if model.normalized else _volume_grad
    rng = rng_stream(opts.seed, "maxvol-reseed")

    trace = ConvergenceTrace()
    if model.normalized:
        H = _reseed_zero_rows(H, X, rng, trace, 0)
    fit, reg, weight = maxvol_objective(X, W, H, model)
    trace.record(0, fit, reg, weight)
    sw = AdaptiveStepState(W, maxvol_gradient_w(W, H, X), spectral_norm(H @ H.T), project_nonneg)
    sh = AdaptiveStepState(H, grad_h_fn(W, H, X, lam, delta), spectral_norm(W.T @ W), proj_h)
    if model.normalized:
        sh.x = sh.x_bar = _reseed_zero_rows(sh.x, X, rng, trace, 0)
    W, H = sw.x, sh.x
    last = (W, H)
    for it in range(1, opts.outer + 1):
        try:
            HHt, XHt = H @ H.T, X @ H.T
            W = sw.run(lambda Wk: Wk @ HHt - XHt, project_nonneg, opts.inner, opts.debug)
            WtW, WtX = W.T @ W, W.T @ X

            def grad_h(Hk):
                ls = WtW @ Hk - WtX
                return ls if lam == 0 else ls + penalty(Hk, lam, delta)

            H = sh.run(grad_h, proj_h, opts.inner, opts.debug)
            if model.normalized:
                H2 = _reseed_zero_rows(H, X, rng, trace, it)
                if H2 is not H:
                    sh.x = sh.x_bar = sh.x_old = H = H2
            fit, reg, weight = maxvol_objective(X, W, H, model)
        except NumericalError as exc:
            trace.flags["numerical_failure"] = (it, str(exc))
            W, H = last
            break
        if not (np.isfinite(fit) and np.isfinite(reg) and np.all(np.isfinite(W)) and np.all(np.isfinite(H))):
            trace.flags["nan"] = it
            W, H = last
            break
        trace.record(it, fit, reg, weight)
        last = (W, H)
    else:
        trace.flags["budget_exhausted"] = True
    trace.flags["adgrad_stalls"] = sw.stalls + sh.stalls
    return FactorPair(W, H, {"algorithm": "adgrad2", "normalized": model.normalized}), trace


def nmaxvol_fit(X, model: MaxvolModel | None = None, opts: SolverOptions | None = None, W0=None, H0=None):
    """Normalized MaxVol NMF (nonnegative ``H``, no simplex constraint)."""
    if model is None:
        model = MaxvolModel(normalized=True)
    elif not model.normalized:
        model = MaxvolModel(lam=model.lam, delta=model.delta, normalized=True, rho=model.rho)
    return adgrad2_fit(X, model, opts, W0, H0)


def admm_fit(X, model: MaxvolModel | None = None, opts: SolverOptions | None = None, W0=None, H0=None):
    """MaxVol NMF by ADMM on the splitting ``Y = H H^T``.

    Each outer iteration runs ``opts.inner`` extrapolated projected gradient
    steps on ``W``, ``model.bregman_steps`` (default ``opts.inner``) Bregman
    steps on ``H`` (or ``opts.inner`` adaptive steps for ``admm_adgrad``),
    one ``Y`` update and one dual step. The trace records the MaxVol
    objective and, in ``extra``, the primal residual ``||Y - H H^T||_F``,
    the number of unconverged Bregman fixed points and the largest column
    sum deviation of ``H`` from one.
    """
    model = model or MaxvolModel(algorithm="admm_bregman")
    opts = opts or SolverOptions()
    if model.algorithm not in ("admm_bregman", "admm_adgrad"):
        raise InputError("admm_fit needs algorithm admm_bregman or admm_adgrad")
    r = opts.rank
    X = _check_data(X, r)
    W, H = _start(X, r, opts, W0, H0, True)
    lam, delta, rho = model.lam, model.delta, model.rho
    steps_h = opts.inner if model.bregman_steps is None else model.bregman_steps
    state = AdmmState(H @ H.T, np.zeros((r, r)), rho)

    trace = ConvergenceTrace()
    fit, reg, weight = maxvol_objective(X, W, H, model)
    trace.record(0, fit, reg, weight, primal_residual=0.0, bregman_unconverged=0,
                 colsum_deviation=float(np.abs(H.sum(axis=0) - 1.0).max()))
    alpha = 1.0
    W_old = W.copy()
    sh = None
    if model.algorithm == "admm_adgrad":
        sh = AdaptiveStepState(H, _lagrangian_grad_h(W, H, X, state.Y, state.Lam, rho),
                               spectral_norm(W.T @ W), project_simplex_columns)
        H = sh.x
    last = (W, H, state)
    for it in range(1, opts.outer + 1):
        try:
            HHt, XHt = H @ H.T, X @ H.T
            L = lipschitz(HHt)
            for _ in range(opts.inner):
                alpha0 = alpha
                alpha = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha0 * alpha0))
                Wbar = W + (alpha0 - 1.0) / alpha * (W - W_old)
                W_old = W
                W = project_nonneg(Wbar + (XHt - Wbar @ HHt) / L)
            unconverged = 0
            Y, Lam = state.Y, state.Lam
            if sh is None:
                for _ in range(steps_h):
                    H, info = bregman_h_update(W, X, H, Y, Lam, rho, return_info=True)
                    unconverged += not info["converged"]
            else:
                WtW, WtX = W.T @ W, W.T @ X
                H = sh.run(lambda Hk: WtW @ Hk - WtX - 2.0 * (Lam @ Hk) + 2.0 * rho * ((Hk @ Hk.T - Y) @ Hk),
                           project_simplex_columns, opts.inner, opts.debug)
            Y = y_update(H, Lam, rho, lam, delta)
            G = H @ H.T
            Lam = Lam + rho * (Y - G)
            state = AdmmState(Y, Lam, rho)
            fit, reg, weight = maxvol_objective(X, W, H, model)
        except NumericalError as exc:
            trace.flags["numerical_failure"] = (it, str(exc))
            W, H, state = last
            break
        if not (np.isfinite(fit) and np.isfinite(reg) and np.all(np.isfinite(H))):
            trace.flags["nan"] = it
            W, H, state = last
            break
        trace.record(it, fit, reg, weight, primal_residual=float(np.linalg.norm(Y - G)),
                     bregman_unconverged=unconverged,
                     colsum_deviation=float(np.abs(H.sum(axis=0) - 1.0).max()))
        last = (W, H, state)
    else:
        trace.flags["budget_exhausted"] = True
    flags = {"algorithm": model.algorithm, "rho": rho, "Y": state.Y, "Lambda": state.Lam}
    return FactorPair(W, H, flags), trace


def maxvol_fit(X, model: MaxvolModel | None = None, opts: SolverOptions | None = None, W0=None, H0=None):
    """Dispatch on ``model.algorithm`` (and ``model.normalized``)."""
    model = model or MaxvolModel()
    if model.normalized:
        return nmaxvol_fit(X, model, opts, W0, H0)
    if model.algorithm == "adgrad2":
        return adgrad2_fit(X, model, opts, W0, H0)
    return admm_fit(X, model, opts, W0, H0)
