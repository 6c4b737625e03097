import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcscf.errors import NumericalError
from bcscf.linalg import (
    SAMPLING_BETA,
    MaskedMatrix,
    masked_residual,
    sampling_operator,
    soft_threshold,
    solve_spd,
    spectral_norm_sq,
)

from oracles import dense_masked_residual, prox_l1_grid


def random_obs(rng, m=5, n=5, frac=0.5):
    mask = rng.random((m, n)) < frac
    mask[0, 0] = True
    rows, cols = np.nonzero(mask)
    return MaskedMatrix((m, n), rows, cols, rng.normal(size=len(rows)))


class TestMaskedMatrix:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            MaskedMatrix((2, 2), [0, 0], [1, 1], [1.0, 2.0])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            MaskedMatrix((2, 2), [2], [0], [1.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            MaskedMatrix((2, 2), [0], [0], [np.nan])

    def test_scatter_matches_dense(self):
        obs = random_obs(np.random.default_rng(0), 4, 6)
        assert np.array_equal(obs.scatter().toarray(), obs.to_dense())


class TestMaskedResidual:
    def test_zero_factors(self):
        obs = random_obs(np.random.default_rng(1))
        R = masked_residual(obs, np.zeros((5, 2)), np.zeros((2, 5)))
        assert np.array_equal(R.values, obs.values)

    def test_single_entry(self):
        obs = MaskedMatrix((1, 1), [0], [0], [4.0])
        assert masked_residual(obs, np.array([[2.0]]), np.array([[2.0]])).values[0] == 0.0

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(2)
        obs = random_obs(rng)
        U, V = rng.normal(size=(5, 3)), rng.normal(size=(3, 5))
        R = masked_residual(obs, U, V)
        np.testing.assert_allclose(R.to_dense(), dense_masked_residual(obs, U, V),
                                   rtol=0, atol=1e-13)

    def test_dimension_mismatch(self):
        obs = random_obs(np.random.default_rng(3))
        with pytest.raises(ValueError):
            masked_residual(obs, np.zeros((4, 2)), np.zeros((2, 5)))


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm_sq(np.eye(3)) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        assert spectral_norm_sq(np.diag([5.0, 2.0, 1.0])) == pytest.approx(5.0, abs=1e-10)

    def test_zero_matrix(self):
        assert spectral_norm_sq(np.zeros((4, 4))) == 0.0

    def test_start_vector_in_null_space(self):
        # all-ones start is orthogonal to (1, -1)
        G = np.array([[1.0, -1.0], [-1.0, 1.0]])
        assert spectral_norm_sq(G) == pytest.approx(2.0, abs=1e-10)

    def test_non_square(self):
        with pytest.raises(ValueError):
            spectral_norm_sq(np.zeros((2, 3)))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_eigvalsh(self, seed):
        rng = np.random.default_rng(seed)
        B = rng.normal(size=(20, 10))
        G = B.T @ B
        assert spectral_norm_sq(G, tol=1e-15) == pytest.approx(np.linalg.eigvalsh(G)[-1],
                                                               abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_rayleigh_lower_bound(self, seed):
        rng = np.random.default_rng(seed)
        B = rng.normal(size=(8, 6))
        G = B.T @ B
        v = rng.normal(size=6)
        assert spectral_norm_sq(G) >= v @ G @ v / (v @ v) - 1e-9


def test_sampling_gram_top_eigenvalue_is_beta():
    obs = random_obs(np.random.default_rng(4), 4, 5)
    A = sampling_operator(obs).toarray()
    AtA = A.T @ A
    assert set(np.unique(AtA)) <= {0.0, 1.0}
    assert np.allclose(AtA, np.diag(np.diag(AtA)))
    assert np.linalg.eigvalsh(AtA)[-1] == pytest.approx(SAMPLING_BETA, abs=1e-12)


class TestSolveSPD:
    def test_identity(self):
        B = np.random.default_rng(0).normal(size=(3, 4))
        assert np.allclose(solve_spd(np.eye(4), B), B, atol=1e-15)

    def test_scaled_identity(self):
        np.testing.assert_allclose(solve_spd(2 * np.eye(2), np.array([[4.0, 6.0]])), [[2.0, 3.0]])

    def test_multiply_back(self):
        rng = np.random.default_rng(5)
        Q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        A = Q @ np.diag(np.linspace(1, 50, 8)) @ Q.T
        B = rng.normal(size=(3, 8))
        X = solve_spd(A, B)
        assert np.linalg.norm(X @ A - B) / max(1, np.linalg.norm(B)) <= 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_multiply_back_ill_conditioned(self, seed):
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        A = Q @ np.diag(np.logspace(0, 6, 10)) @ Q.T
        A = (A + A.T) / 2
        B = rng.normal(size=(4, 10))
        X = solve_spd(A, B)
        assert np.linalg.norm(X @ A - B) / max(1, np.linalg.norm(B)) <= 1e-10

    def test_not_pd_names_pivot(self):
        with pytest.raises(NumericalError, match="pivot 2"):
            solve_spd(np.diag([1.0, -1.0, 1.0]), np.ones((1, 3)))


class TestSoftThreshold:
    def test_values(self):
        np.testing.assert_array_equal(soft_threshold(np.array([3.0, -0.5, -3.0]), 1.0),
                                      [2.0, 0.0, -2.0])

    def test_zero_threshold_identity(self):
        x = np.random.default_rng(0).normal(size=20)
        np.testing.assert_array_equal(soft_threshold(x, 0.0), x)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(np.zeros(2), -1.0)

    def test_no_negative_zeros(self):
        out = soft_threshold(np.array([-0.5, 0.5]), 1.0)
        assert not np.any(np.signbit(out))

    def test_matches_prox_oracle(self):
        rng = np.random.default_rng(6)
        t = rng.normal(scale=3, size=200)
        s = rng.exponential(1.0, size=200)
        got = np.array([soft_threshold(np.array([ti]), si)[0] for ti, si in zip(t, s)])
        want = np.array([prox_l1_grid(ti, si) for ti, si in zip(t, s)])
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3), s=st.floats(0, 100))
    def test_non_expansive(self, a, b, s):
        fa, fb = soft_threshold(np.array([a, b]), s)
        assert abs(fa - fb) <= abs(a - b) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(t=st.floats(-1e3, 1e3), s=st.floats(0, 100))
    def test_odd(self, t, s):
        assert soft_threshold(np.array([-t]), s)[0] == -soft_threshold(np.array([t]), s)[0]
