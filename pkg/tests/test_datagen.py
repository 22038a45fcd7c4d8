import numpy as np
import pytest

from volmf.datagen import (
    FIXTURES, SyntheticSpec, fixture, gen_completion_instance, gen_dirichlet_instance,
    gen_separable_instance,
)
from volmf.errors import InputError, UnknownFixture
from volmf.separable import spa_select
from volmf.ssc import check_ssc1_necessary


def rmse(A, B):
    return float(np.sqrt(np.mean((A - B) ** 2)))


class TestSpec:
    @pytest.mark.parametrize("kwargs", [
        {"h_zero_fraction": 1.0}, {"missing_fraction": -0.1}, {"noise_level": -1.0}, {"r": 0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(InputError):
            SyntheticSpec(**kwargs)


class TestCompletion:
    def test_noiseless_equal(self):
        inst = gen_completion_instance(SyntheticSpec(m=30, n=40, r=3, seed=1))
        np.testing.assert_array_equal(inst.X, inst.X_clean)

    @pytest.mark.parametrize("seed", range(5))
    def test_mean_one_and_product(self, seed):
        X, Xc, mask, W, H = gen_completion_instance(SyntheticSpec(m=40, n=30, r=4, seed=seed))
        assert abs(Xc.mean() - 1.0) <= 1e-12
        np.testing.assert_allclose(W @ H, Xc, rtol=0, atol=1e-14)
        assert W.min() >= 0 and H.min() >= 0

    def test_zero_fraction(self):
        inst = gen_completion_instance(SyntheticSpec(m=20, n=50, r=5, h_zero_fraction=0.8))
        assert int((inst.H == 0).sum()) == 200

    @pytest.mark.parametrize("level", [0.01, 0.1, 0.5])
    def test_noise_calibration(self, level):
        inst = gen_completion_instance(SyntheticSpec(m=50, n=60, r=5, noise_level=level, seed=3))
        assert abs(rmse(inst.X, inst.X_clean) - level) <= 0.01 * level
        assert inst.X.min() >= 0

    @pytest.mark.parametrize("fraction", [0.0, 0.5, 0.9])
    def test_mask_coverage(self, fraction):
        inst = gen_completion_instance(SyntheticSpec(m=30, n=30, r=3, missing_fraction=fraction, seed=2))
        assert inst.mask.any(axis=0).all() and inst.mask.any(axis=1).all()
        assert int((inst.mask == 0).sum()) == round(fraction * 900)
        assert set(np.unique(inst.mask)) <= {0.0, 1.0}

    def test_deterministic(self):
        spec = SyntheticSpec(m=25, n=35, r=4, noise_level=0.05, seed=11)
        a, b = gen_completion_instance(spec), gen_completion_instance(spec)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
        c = gen_completion_instance(SyntheticSpec(m=25, n=35, r=4, noise_level=0.05, seed=12))
        assert not np.array_equal(a.X, c.X)

    def test_mask_stream_independent_of_noise(self):
        a = gen_completion_instance(SyntheticSpec(m=20, n=20, r=3, noise_level=0.0, seed=4))
        b = gen_completion_instance(SyntheticSpec(m=20, n=20, r=3, noise_level=0.2, seed=4))
        np.testing.assert_array_equal(a.mask, b.mask)
        np.testing.assert_array_equal(a.X_clean, b.X_clean)

    @pytest.mark.slow
    def test_sparse_h_passes_necessary_ssc(self):
        passed = 0
        for seed in range(100):
            H = gen_completion_instance(SyntheticSpec(r=5, h_zero_fraction=0.8, seed=seed)).H
            passed += check_ssc1_necessary(H).necessary_ok
        assert passed >= 95


class TestSeparable:
    @pytest.mark.parametrize("seed", range(5))
    def test_structure(self, seed):
        X, idx, W, H = gen_separable_instance(20, 60, 4, seed=seed)
        np.testing.assert_allclose(H.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(H[:, idx], np.eye(4))
        np.testing.assert_array_equal(X[:, idx], W)
        s = np.linalg.svd(X, compute_uv=False)
        assert s[3] > 1e-8 * s[0] and s[4] < 1e-12 * s[0]

    @pytest.mark.parametrize("seed", range(5))
    def test_spa_recovers(self, seed):
        X, idx, _, _ = gen_separable_instance(30, 200, 5, seed=seed)
        assert set(spa_select(X, 5).indices) == set(idx)

    def test_noise_bound(self):
        X, _, W, H = gen_separable_instance(10, 50, 3, noise=0.05, seed=0)
        assert np.linalg.norm(X - W @ H, axis=0).max() <= 0.05 + 1e-15

    def test_bad_sizes(self):
        with pytest.raises(InputError):
            gen_separable_instance(5, 2, 3)


class TestDirichlet:
    def test_shapes_and_simplex(self):
        X, W, H = gen_dirichlet_instance(seed=0)
        assert X.shape == (50, 500) and W.shape == (50, 5)
        np.testing.assert_allclose(H.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(X, W @ H)


class TestFixtures:
    def test_example1_entry(self):
        assert fixture("example1_X")[0, 0] == 11

    def test_example1_product(self):
        np.testing.assert_allclose(fixture("example1_W") @ fixture("example1_H"), fixture("example1_X"),
                                   rtol=0, atol=1e-12)

    def test_example1_h_column_sums(self):
        np.testing.assert_allclose(fixture("example1_H").sum(axis=0), 4.0, atol=1e-14)

    def test_tightness_product(self):
        np.testing.assert_allclose(fixture("tightness_W") @ fixture("tightness_H"), fixture("tightness_X"),
                                   rtol=0, atol=1e-14)

    def test_tightness_zero_counts(self):
        # the printed matrix has zero counts (1, 2, 1)
        np.testing.assert_array_equal((fixture("tightness_H") == 0).sum(axis=1), [1, 2, 1])

    def test_fresh_copies(self):
        a = fixture("example1_X")
        a[0, 0] = -1
        assert fixture("example1_X")[0, 0] == 11

    def test_all_known(self):
        for name in FIXTURES:
            assert np.all(np.isfinite(fixture(name)))

    def test_unknown(self):
        with pytest.raises(UnknownFixture):
            fixture("nope")
