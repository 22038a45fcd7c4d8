"""Minimum-volume NMF and its matrix-completion variants.

All variants share one extrapolated block scheme (a few projected gradient
steps on ``W``, then on ``H``, with Nesterov momentum that is never
restarted) and differ only in the penalty and in the feasible sets:

* ``minvol``: penalty ``lam/2 logdet(W^T W + delta I)``, columns of ``W`` on
  the simplex, ``H >= 0``;
* ``minvol_complete``: the same, with the fit restricted to observed entries;
* ``new_minvol``: penalty ``lam/2 logdet(W^T W + delta I) + gamma/2 ||H||_F^2``,
  ``W >= 0``, ``H >= 0``;
* ``nmf_baseline``: no penalty, ``W >= 0``, ``H >= 0``.

The log-determinant is handled through its tangent majorizer at the
extrapolated point ``Wbar``, which adds ``lam * Wbar P`` to the gradient with
``P = (Wbar^T Wbar + delta I)^{-1}``.
"""

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np

from .core import SolverOptions, FactorPair, ConvergenceTrace, as_matrix, rng_stream
from .errors import InputError, NegativeInput, NotPositiveDefinite, DimensionMismatch
from .linalg import lipschitz, cholesky_spd
from .projections import project_simplex_columns, project_nonneg
from .bssmf import prepare_data, BETA_CAP

__all__ = [
    "VARIANTS",
    "MinvolModel",
    "minvol_fit",
    "minvol_objective",
    "init_hyperparams",
    "autotune_step",
    "warm_start_nmf",
    "AUTOTUNE_THRESHOLD",
]

VARIANTS = ("minvol", "minvol_complete", "new_minvol", "nmf_baseline")

DEFAULT_DELTA = 1.0
AUTOTUNE_THRESHOLD = 1e-3
FIT_FLOOR = 1e-6


@dataclass
class MinvolModel:
    variant: str = "minvol"
    lam: float | None = None
    delta: float = DEFAULT_DELTA
    gamma: float | None = None
    autotune: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.delta is None:
            self.delta = DEFAULT_DELTA
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if self.variant == "nmf_baseline":
            self.lam = 0.0
        if self.lam is not None and self.lam < 0:
            raise InputError("lambda must be nonnegative")
        if self.gamma is not None and self.gamma < 0:
            raise InputError("gamma must be nonnegative")
        if self.variant == "new_minvol" and self.gamma is not None and self.gamma == 0:
            raise InputError("new_minvol needs gamma > 0")

    @property
    def simplex_w(self):
        return self.variant in ("minvol", "minvol_complete")

    @property
    def uses_gamma(self):
        return self.variant == "new_minvol"


def _sq_residual(X, W, H, mask):
    R = X - W @ H
    if mask is not None:
        R = mask * R
    return float(np.sum(R * R))


def _logdet_gram(W, delta):
    return cholesky_spd(W.T @ W + delta * np.eye(W.shape[1])).logdet()


def minvol_objective(X, W, H, model: MinvolModel, mask=None):
    """Return ``(fit, reg, weight)`` with objective ``fit + weight * reg``.

    ``fit = 1/2 ||M o (X - WH)||^2``. For MinVol ``reg = 1/2 logdet`` and
    ``weight = lam``; for new MinVol the two penalties are folded into
    ``reg`` with unit weight; plain NMF has weight 0.
    """
    fit = 0.5 * _sq_residual(X, W, H, mask)
    if model.variant == "nmf_baseline":
        return fit, 0.0, 0.0
    half_logdet = 0.5 * _logdet_gram(W, model.delta)
    if model.variant == "new_minvol":
        reg = model.lam * half_logdet + 0.5 * model.gamma * float(np.sum(H * H))
        return fit, reg, 1.0
    return fit, half_logdet, model.lam


def init_hyperparams(X, mask, W0, H0, model: MinvolModel) -> MinvolModel:
    """Balance the penalties against the fit of a starting point.

    ``lam = max(||P(X - W0 H0)||^2, 1e-6) / |logdet(W0^T W0 + delta I)|`` and,
    for new MinVol, ``gamma = 0.01 max(||P(X - W0 H0)||^2, 1e-6) / ||H0||^2``.
    A log-determinant below 1e-14 in magnitude falls back to ``lam = 1``.
    """
    if model.variant == "nmf_baseline":
        return replace(model, lam=0.0)
    fit2 = max(_sq_residual(X, W0, H0, mask), FIT_FLOOR)
    logdet = _logdet_gram(W0, model.delta)
    if abs(logdet) < 1e-14:
        warnings.warn("logdet of the starting point is zero; using lambda = 1", RuntimeWarning)
        lam = 1.0
    else:
        lam = fit2 / abs(logdet)
    gamma = model.gamma
    if model.uses_gamma:
        hn = float(np.sum(H0 * H0))
        gamma = 0.01 * fit2 / hn if hn > 0 else 1.0
    return replace(model, lam=lam, gamma=gamma)


def autotune_step(trace: ConvergenceTrace, model: MinvolModel, X, W, H, mask=None, data_norm2=None):
    """Rebalance ``lam`` (and ``gamma``) once progress stalls.

    Triggered when ``|obj[-1] - obj[-2]| / ||P(X)||^2 < 1e-3``; the new values
    re-apply :func:`init_hyperparams` at the current ``(W, H)``.

    Returns
    -------
    (MinvolModel, bool)
        The possibly updated model and whether the rule fired.
    """
    if not model.autotune or model.variant == "nmf_baseline" or len(trace) < 2:
        return model, False
    if data_norm2 is None:
        data_norm2 = float(np.sum((X if mask is None else mask * X) ** 2))
    ratio = abs(trace.objective[-1] - trace.objective[-2]) / data_norm2
    if not ratio < AUTOTUNE_THRESHOLD:
        return model, False
    new = init_hyperparams(X, mask, W, H, model)
    if not model.uses_gamma:
        new = replace(new, gamma=model.gamma)
    trace.log(trace.iters[-1], f"autotune lam {model.lam:.6g} -> {new.lam:.6g}")
    return new, True


def _momentum(alpha, L_prev, L):
    alpha_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha))
    beta = min((alpha - 1.0) / alpha_next, BETA_CAP * math.sqrt(L_prev / L)) if L > 0 else 0.0
    return alpha_next, beta


def _run_scheme(X, M, W, H, model: MinvolModel, outer, inner, trace, tol=0.0, debug=False):
    """Shared extrapolated block scheme; returns final ``(W, H)``."""
    r = W.shape[1]
    I = np.eye(r)
    lam, delta = model.lam, model.delta
    gamma = model.gamma if model.uses_gamma else 0.0
    M2 = None if M is None else M * M
    proj_w = project_simplex_columns if model.simplex_w else project_nonneg
    data_norm2 = float(np.sum((X if M is None else M * X) ** 2))

    def p_matrix(Wk):
        return cholesky_spd(Wk.T @ Wk + delta * I).inverse()

    a1 = a2 = 1.0
    W_old, H_old = W.copy(), H.copy()
    LW_prev = lipschitz(H @ H.T + lam * p_matrix(W)) if lam > 0 else lipschitz(H @ H.T)
    LH_prev = lipschitz(W.T @ W + gamma * I)
    for it in range(1, outer + 1):
        HHt = H @ H.T
        XHt = X @ H.T if M is None else None
        for _ in range(inner):
            P = p_matrix(W) if lam > 0 else None
            LW = lipschitz(HHt + lam * P) if lam > 0 else lipschitz(HHt)
            a1, beta = _momentum(a1, LW_prev, LW)
            if debug:
                assert 0.0 <= beta <= BETA_CAP * math.sqrt(LW_prev / LW) + 1e-15
            Wbar = W + beta * (W - W_old)
            W_old = W
            if M is None:
                grad = Wbar @ HHt - XHt
            else:
                grad = (M2 * (Wbar @ H - X)) @ H.T
            if lam > 0:
                Pbar = p_matrix(Wbar)
                grad = grad + lam * (Wbar @ Pbar)
                L = lipschitz(HHt + lam * Pbar)
            else:
                L = LW
            W = proj_w(Wbar - grad / L)
            LW_prev = L
        WtW = W.T @ W
        WtX = W.T @ X if M is None else None
        LH = lipschitz(WtW + gamma * I)
        for _ in range(inner):
            a2, beta = _momentum(a2, LH_prev, LH)
            if debug:
                assert 0.0 <= beta <= BETA_CAP * math.sqrt(LH_prev / LH) + 1e-15
            Hbar = H + beta * (H - H_old)
            H_old = H
            if M is None:
                grad = WtW @ Hbar - WtX
            else:
                grad = W.T @ (M2 * (W @ Hbar - X))
            H = project_nonneg(((LH - gamma) / LH) * Hbar - grad / LH)
            LH_prev = LH
        fit, reg, weight = minvol_objective(X, W, H, model, M)
        trace.record(it, fit, reg, weight, lam=lam, gamma=gamma)
        if not np.isfinite(trace.objective[-1]):
            trace.flags["nan"] = it
            break
        if model.autotune:
            model, fired = autotune_step(trace, model, X, W, H, M, data_norm2)
            if fired:
                lam = model.lam
                gamma = model.gamma if model.uses_gamma else 0.0
                LH_prev = lipschitz(W.T @ W + gamma * I)
        elif tol > 0 and len(trace) >= 2:
            prev, cur = trace.objective[-2], trace.objective[-1]
            if abs(prev - cur) <= tol * max(abs(prev), np.finfo(float).tiny):
                trace.flags["converged"] = it
                break
    else:
        trace.flags["budget_exhausted"] = True
    trace.flags["final_lam"] = lam
    trace.flags["final_gamma"] = gamma
    return W, H


def _random_start(X, M, r, seed, simplex_w=True):
    m, n = X.shape
    rng = rng_stream(seed, "minvol-init")
    W = rng.random((m, r))
    W = project_simplex_columns(W / W.sum(axis=0)) if simplex_w else W
    H = rng.random((r, n))
    # scale H so that W H matches the observed data in the least-squares sense
    WH = W @ H
    if M is not None:
        WH = M * WH
    denom = float(np.sum(WH * WH))
    s = float(np.sum(WH * X)) / denom if denom > 0 else 1.0
    return W, H * max(s, np.finfo(float).tiny)


def warm_start_nmf(X, mask=None, r=3, iters=500, seed=0, inner=1):
    """NMF with column-stochastic ``W``, run from a random start.

    ``iters`` outer iterations of the shared scheme with no penalty; each
    performs ``inner`` steps on ``W`` (projected onto the simplex) and on
    ``H`` (projected onto the nonnegative orthant).
    """
    X, M = prepare_data(X, mask)
    _check_nonneg(X, M)
    W, H = _random_start(X, M, r, seed)
    model = MinvolModel("minvol", lam=0.0)
    trace = ConvergenceTrace()
    fit0 = 0.5 * _sq_residual(X, W, H, M)
    trace.record(0, fit0, 0.0, 0.0)
    W, H = _run_scheme(X, M, W, H, model, iters, inner, trace)
    return FactorPair(W, H, {"warm_start_iters": iters, "initial_fit": fit0}), trace


def _check_nonneg(X, M):
    obs = X if M is None else X[M > 0]
    if np.any(obs < 0):
        raise NegativeInput("observed data must be nonnegative")


def minvol_fit(X, mask=None, model: MinvolModel | None = None, opts: SolverOptions | None = None,
               W0=None, H0=None, warm_start_iters=500):
    """Fit one of the MinVol variants.

    Parameters
    ----------
    X : array_like, shape (m, n)
        Nonnegative data; NaN marks a missing entry when ``mask`` is absent.
    mask : array_like, optional
        Observation weights in [0, 1].
    model : MinvolModel
        ``lam``/``gamma`` left as None are set by :func:`init_hyperparams` at
        the starting point.
    opts : SolverOptions
        ``rank``, ``outer``, ``inner``, ``seed``, ``tol`` and ``debug`` are read.
    W0, H0 : array_like, optional
        Starting point; by default a warm start of ``warm_start_iters``
        iterations of simplex-structured NMF.

    Returns
    -------
    FactorPair, ConvergenceTrace
    """
    model = model or MinvolModel()
    opts = opts or SolverOptions()
    X, M = prepare_data(X, mask)
    _check_nonneg(X, M)
    m, n = X.shape
    r = opts.rank
    if not 1 <= r <= min(m, n):
        raise InputError(f"rank must be in [1, {min(m, n)}], got {r}")
    if W0 is None or H0 is None:
        if warm_start_iters > 0:
            pair, _ = warm_start_nmf(X, M, r, warm_start_iters, opts.seed)
            W, H = pair.W, pair.H
        else:
            W, H = _random_start(X, M, r, opts.seed, model.simplex_w)
    else:
        W, H = as_matrix(W0, "W0").copy(), as_matrix(H0, "H0").copy()
        if W.shape != (m, r) or H.shape != (r, n):
            raise DimensionMismatch("initial factors have wrong shapes")
    W = project_simplex_columns(W) if model.simplex_w else project_nonneg(W)
    H = project_nonneg(H)
    if model.lam is None or (model.uses_gamma and model.gamma is None):
        tuned = init_hyperparams(X, M, W, H, model)
        model = replace(model, lam=tuned.lam if model.lam is None else model.lam,
                        gamma=tuned.gamma if model.gamma is None else model.gamma)
    if model.uses_gamma and not model.gamma > 0:
        raise InputError("new_minvol needs gamma > 0")
    trace = ConvergenceTrace()
    try:
        fit, reg, weight = minvol_objective(X, W, H, model, M)
        trace.record(0, fit, reg, weight, lam=model.lam, gamma=model.gamma or 0.0)
        W, H = _run_scheme(X, M, W, H, model, opts.outer, opts.inner, trace, opts.tol, opts.debug)
    except NotPositiveDefinite:
        trace.flags["not_positive_definite"] = True
        raise
    flags = {"variant": model.variant, "lam": trace.flags["final_lam"],
             "gamma": trace.flags["final_gamma"], "delta": model.delta}
    return FactorPair(W, H, flags), trace
