import math

import numpy as np
import pytest

from volmf.core import ConvergenceTrace, SolverOptions
from volmf.errors import InputError, NegativeInput
from volmf.linalg import logdet_spd, sym_eig
from volmf.minvol import (
    AUTOTUNE_THRESHOLD, MinvolModel, autotune_step, init_hyperparams, minvol_fit, minvol_objective,
    warm_start_nmf,
)
from oracles import central_difference


def planted(seed, m=20, n=200, r=4, zeros=0.8):
    """Exact data with column-stochastic W and sparse H (identity block keeps rows nonzero)."""
    rng = np.random.default_rng(seed)
    W = rng.random((m, r))
    H = rng.random((r, n))
    H[rng.random((r, n)) < zeros] = 0
    H[:, :r] = np.eye(r)
    s = W.sum(axis=0)
    return (W / s) @ (H * s[:, None]), W / s, H * s[:, None]


class TestModel:
    def test_validation(self):
        with pytest.raises(InputError):
            MinvolModel("nope")
        with pytest.raises(InputError):
            MinvolModel(delta=0.0)
        with pytest.raises(InputError):
            MinvolModel("new_minvol", gamma=0.0)
        assert MinvolModel("nmf_baseline", lam=5.0).lam == 0.0

    def test_objective_split(self):
        X, W, H = planted(0, m=6, n=10, r=3)
        fit, reg, weight = minvol_objective(X + 1, W, H, MinvolModel(lam=2.0))
        assert weight == 2.0
        assert reg == pytest.approx(0.5 * logdet_spd(W.T @ W + np.eye(3)))
        fit, reg, weight = minvol_objective(X, W, H, MinvolModel("new_minvol", lam=2.0, gamma=0.5))
        assert weight == 1.0
        assert reg == pytest.approx(logdet_spd(W.T @ W + np.eye(3)) + 0.25 * np.sum(H * H))
        assert minvol_objective(X, W, H, MinvolModel("nmf_baseline"))[2] == 0.0


class TestHyperparams:
    def one_by_one(self, fit2, logdet, hnorm2):
        W0 = np.array([[math.sqrt(math.exp(logdet) - 1.0)]])
        H0 = np.array([[math.sqrt(hnorm2)]])
        X = W0 @ H0 + math.sqrt(fit2)
        return X, W0, H0

    def test_lambda_formula(self):
        X, W0, H0 = self.one_by_one(4.0, 2.0, 1.0)
        assert init_hyperparams(X, None, W0, H0, MinvolModel()).lam == pytest.approx(2.0, rel=1e-12)

    def test_gamma_formula(self):
        X, W0, H0 = self.one_by_one(4.0, 2.0, 8.0)
        model = init_hyperparams(X, None, W0, H0, MinvolModel("new_minvol"))
        assert model.gamma == pytest.approx(0.005, rel=1e-12)

    def test_fit_floor(self):
        X, W, H = planted(1, m=6, n=10, r=3)
        ld = logdet_spd(W.T @ W + np.eye(3))
        assert init_hyperparams(X, None, W, H, MinvolModel()).lam == pytest.approx(1e-6 / abs(ld), rel=1e-9)

    def test_zero_logdet(self):
        with pytest.warns(RuntimeWarning):
            model = init_hyperparams(np.ones((2, 2)), None, np.zeros((2, 1)), np.ones((1, 2)), MinvolModel())
        assert model.lam == 1.0


class TestAutotune:
    def setup_trace(self, drop, X):
        trace = ConvergenceTrace()
        norm2 = float(np.sum(X * X))
        trace.record(0, 10.0, 0.0, 0.0)
        trace.record(1, 10.0 - drop * norm2, 0.0, 0.0)
        return trace

    def test_no_trigger(self):
        X, W, H = planted(2, m=6, n=10, r=3)
        model = MinvolModel(lam=0.3, autotune=True)
        new, fired = autotune_step(self.setup_trace(1e-2, X), model, X, W, H)
        assert not fired and new.lam == 0.3

    def test_fixed_point(self):
        X, W, H = planted(2, m=6, n=10, r=3)
        Xn = X + 0.1
        model = init_hyperparams(Xn, None, W, H, MinvolModel(autotune=True))
        new, fired = autotune_step(self.setup_trace(1e-4, Xn), model, Xn, W, H)
        assert fired and new.lam == pytest.approx(model.lam, rel=1e-15)

    def test_fit_halved(self):
        X, W, H = planted(3, m=6, n=10, r=3)
        rng = np.random.default_rng(0)
        E = rng.standard_normal(X.shape)
        X1 = X + 0.1 * E
        X2 = X + 0.1 / math.sqrt(2) * E
        model = init_hyperparams(X1, None, W, H, MinvolModel(autotune=True))
        trace = self.setup_trace(1e-4, X2)
        new, fired = autotune_step(trace, model, X2, W, H)
        assert fired and new.lam == pytest.approx(model.lam / 2, rel=1e-12)
        assert trace.events and "autotune" in trace.events[-1][1]

    def test_threshold_constant(self):
        assert AUTOTUNE_THRESHOLD == 1e-3


class TestWarmStart:
    def test_contract(self):
        X, _, _ = planted(4, m=10, n=40, r=3)
        pair, trace = warm_start_nmf(X, None, 3, iters=100, seed=1)
        assert np.abs(pair.W.sum(axis=0) - 1).max() <= 1e-10
        assert trace.objective[-1] <= trace.objective[0]
        again, _ = warm_start_nmf(X, None, 3, iters=100, seed=1)
        np.testing.assert_array_equal(pair.W, again.W)
        np.testing.assert_array_equal(pair.H, again.H)


class TestFit:
    def test_nmf_baseline_exact(self):
        X, _, _ = planted(5, m=15, n=60, r=3)
        pair, _ = minvol_fit(X, None, MinvolModel("nmf_baseline"), SolverOptions(rank=3, outer=1000, inner=20))
        assert np.linalg.norm(X - pair.W @ pair.H) / np.linalg.norm(X) < 1e-6

    def test_lambda_zero_objectives_coincide(self):
        X, W, H = planted(5, m=6, n=10, r=3)
        a = minvol_objective(X + 0.2, W, H, MinvolModel(lam=0.0))
        b = minvol_objective(X + 0.2, W, H, MinvolModel("nmf_baseline"))
        assert a[0] + a[1] * a[2] == b[0] + b[1] * b[2]

    @pytest.mark.parametrize("variant", ["minvol", "minvol_complete", "new_minvol", "nmf_baseline"])
    def test_descent_and_feasibility(self, variant):
        X, _, _ = planted(6, m=10, n=40, r=3)
        mask = (np.random.default_rng(0).random(X.shape) > 0.3).astype(float)
        mask = None if variant == "minvol" else mask
        pair, trace = minvol_fit(X, mask, MinvolModel(variant), SolverOptions(rank=3, outer=50, debug=True))
        assert np.all(np.isfinite(trace.objective))
        assert trace.objective[-1] <= trace.objective[0]
        assert pair.W.min() >= 0 and pair.H.min() >= 0
        if variant in ("minvol", "minvol_complete"):
            assert np.abs(pair.W.sum(axis=0) - 1).max() <= 1e-10

    def test_trace_bookkeeping(self):
        X, _, _ = planted(7, m=8, n=30, r=3)
        _, trace = minvol_fit(X, None, MinvolModel(lam=0.01), SolverOptions(rank=3, outer=10))
        for f, g, w, o in zip(trace.fit, trace.reg, trace.weight, trace.objective):
            assert o == pytest.approx(f + w * g, abs=1e-12)

    def test_planted_recovery(self):
        for seed in range(3):
            X, Wt, _ = planted(seed)
            model = MinvolModel("minvol", lam=1e-3, delta=0.1)
            pair, _ = minvol_fit(X, None, model, SolverOptions(rank=4, outer=500, inner=20, seed=seed))
            assert np.linalg.norm(X - pair.W @ pair.H) / np.linalg.norm(X) < 1e-3
            ld = logdet_spd(pair.W.T @ pair.W + 0.1 * np.eye(4))
            ld0 = logdet_spd(Wt.T @ Wt + 0.1 * np.eye(4))
            assert abs(ld - ld0) <= 0.05 * abs(ld0)

    def test_new_minvol_row_balance(self):
        # at a noiseless stationary point with small delta, ||H(i,:)||^2 = lam / gamma
        X, _, _ = planted(0)
        model = MinvolModel("new_minvol", lam=1.0, gamma=0.1, delta=1e-6)
        pair, _ = minvol_fit(X, None, model, SolverOptions(rank=4, outer=500, inner=20))
        rn = np.sum(pair.H ** 2, axis=1)
        assert np.abs(rn - rn.mean()).max() / rn.mean() <= 0.2
        np.testing.assert_allclose(rn, 10.0, rtol=0.2)

    def test_negative_data(self):
        with pytest.raises(NegativeInput):
            minvol_fit(-np.ones((3, 3)), None, MinvolModel(), SolverOptions(rank=2, outer=1))

    def test_autotune_logs(self):
        X, _, _ = planted(8, m=10, n=40, r=3)
        _, trace = minvol_fit(X, None, MinvolModel(autotune=True), SolverOptions(rank=3, outer=30))
        assert trace.events
        lams = dict(zip(trace.iters, trace.extra["lam"]))
        for it, message in trace.events:
            if it + 1 in lams:
                assert message.endswith(f"-> {lams[it + 1]:.6g}")


def test_masked_gradient_and_spd():
    rng = np.random.default_rng(0)
    X, W, H = rng.random((6, 8)), rng.random((6, 3)), rng.random((3, 8))
    M = (rng.random((6, 8)) > 0.3).astype(float)
    lam, delta = 0.7, 1.0
    G = W.T @ W + delta * np.eye(3)
    assert sym_eig(G)[0].min() >= delta - 1e-10
    P = np.linalg.inv(G)
    grad = (M * (W @ H - X)) @ H.T + lam * W @ P
    model = MinvolModel(lam=lam, delta=delta)

    def f(Wk):
        fit, reg, weight = minvol_objective(X, Wk, H, model, M)
        return fit + weight * reg

    fd = central_difference(f, W)
    assert np.linalg.norm(grad - fd) <= 1e-4 * np.linalg.norm(fd)
