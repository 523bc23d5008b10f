"""Fractional Brownian motion: covariance, noise source and both generators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from fracbolus.errors import CholeskyError, ValidationError
from fracbolus.fbm import (
    SamplePath,
    TimeGrid,
    exact_factor,
    fbm_covariance,
    fbm_covariance_matrix,
    fbm_paths,
    jittered_cholesky,
    simulate_fbm_exact,
    simulate_fbm_volterra,
    standard_normals,
    volterra_weights,
)
from fracbolus.studies import fbm_functional_samples

# 2^0.8, evaluated independently (mpmath, 30 digits) and frozen.
R_1_2_H09 = 1.7411011265922482


class TestCovariance:
    def test_diagonal_is_t_to_2h(self):
        assert fbm_covariance(1.0, 1.0, 0.9) == 1.0
        assert fbm_covariance(2.5, 2.5, 0.7) == pytest.approx(2.5**1.4, rel=1e-15)

    def test_brownian_case_is_min(self):
        assert fbm_covariance(2.0, 3.0, 0.5) == pytest.approx(2.0, rel=1e-15)

    def test_frozen_value(self):
        got = fbm_covariance(1.0, 2.0, 0.9)
        print(f"R_0.9(1,2) = {got!r}, frozen {R_1_2_H09!r}")
        assert got == pytest.approx(R_1_2_H09, rel=1e-14)

    @pytest.mark.parametrize("s,t,H", [(-1.0, 1.0, 0.7), (1.0, 1.0, 0.0), (1.0, 1.0, 1.2)])
    def test_rejects_bad_input(self, s, t, H):
        with pytest.raises(ValidationError):
            fbm_covariance(s, t, H)

    def test_accepts_h_equal_one(self):
        assert fbm_covariance(2.0, 3.0, 1.0) == pytest.approx(6.0)

    @given(
        s=st.floats(0.0, 50.0),
        t=st.floats(0.0, 50.0),
        H=st.floats(0.01, 1.0),
    )
    def test_symmetric(self, s, t, H):
        assert fbm_covariance(s, t, H) == fbm_covariance(t, s, H)

    @settings(max_examples=40)
    @given(
        times=st.lists(st.floats(0.01, 10.0), min_size=1, max_size=10, unique=True),
        H=st.floats(0.05, 0.99),
    )
    def test_matrix_positive_semidefinite(self, times, H):
        times = np.sort(times)
        K = fbm_covariance_matrix(times, H)
        eig = np.linalg.eigvalsh(K)
        assert np.allclose(K, K.T)
        assert eig[0] >= -1e-10 * np.trace(K)


class TestGrid:
    def test_grid_points(self):
        g = TimeGrid(3.0, 6)
        assert g.delta == 0.5
        np.testing.assert_array_equal(g.t, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])

    def test_from_times_checks_uniformity(self):
        assert TimeGrid.from_times([0.0, 0.5, 1.0]) == TimeGrid(1.0, 2)
        with pytest.raises(ValidationError):
            TimeGrid.from_times([0.0, 0.5, 1.2])
        with pytest.raises(ValidationError):
            TimeGrid.from_times([0.1, 0.5, 0.9])

    def test_sample_path_is_read_only(self):
        path = SamplePath(TimeGrid(1.0, 2), [0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            path.values[0] = 5.0


class TestNoise:
    def test_deterministic(self):
        a = standard_normals(123, 1000, stream=4)
        b = standard_normals(123, 1000, stream=4)
        assert a.tobytes() == b.tobytes()

    def test_prefix_stable(self):
        long = standard_normals(9, 500)
        short = standard_normals(9, 20)
        np.testing.assert_array_equal(long[:20], short)

    def test_streams_and_seeds_differ(self):
        base = standard_normals(1, 200)
        assert not np.array_equal(base, standard_normals(1, 200, stream=1))
        assert not np.array_equal(base, standard_normals(2, 200))

    def test_inverse_cdf_of_philox_words(self):
        raw = np.random.Philox(key=77 | (3 << 64)).random_raw(10)
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
        np.testing.assert_array_equal(standard_normals(77, 10, 3), ndtri(u))

    def test_moments(self):
        z = standard_normals(5, 200_000)
        print(f"mean {z.mean():.5f}, var {z.var():.5f}")
        assert abs(z.mean()) < 4 / np.sqrt(z.size)
        assert abs(z.var() - 1.0) < 4 * np.sqrt(2.0 / z.size)

    def test_rejects_out_of_range_seed(self):
        with pytest.raises(ValidationError):
            standard_normals(-1, 3)


class TestCholesky:
    def test_plain_factor(self):
        A = np.array([[4.0, 2.0], [2.0, 3.0]])
        L, jitter = jittered_cholesky(A)
        assert jitter == 0.0
        np.testing.assert_allclose(L @ L.T, A)

    def test_rank_deficient_gets_jitter(self):
        A = np.ones((4, 4))
        L, jitter = jittered_cholesky(A)
        print(f"jitter used: {jitter:.3g}")
        assert jitter > 0
        np.testing.assert_allclose(L @ L.T, A, atol=1e-8)

    def test_indefinite_fails(self):
        A = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(CholeskyError) as info:
            jittered_cholesky(A)
        assert info.value.jitter == pytest.approx(1e-9)


class TestVolterra:
    def test_starts_at_zero(self):
        for H in (0.55, 0.9):
            assert simulate_fbm_volterra(H, 2.0, 50, seed=3).values[0] == 0.0

    def test_brownian_limit_is_partial_sums(self):
        T, n, seed = 1.0, 100, 11
        path = simulate_fbm_volterra(0.5, T, n, seed)
        incr = np.sqrt(T / n) * standard_normals(seed, n)
        np.testing.assert_allclose(path.values[1:], np.cumsum(incr), rtol=1e-12, atol=1e-14)

    def test_weights(self):
        w = volterra_weights(0.9, 4)
        np.testing.assert_allclose(w, [1.0, 2**1.4 - 1, 3**1.4 - 2**1.4, 4**1.4 - 3**1.4])

    def test_common_noise_across_h(self):
        a = simulate_fbm_volterra(0.6, 1.0, 64, seed=2)
        b = simulate_fbm_volterra(0.9, 1.0, 64, seed=2)
        corr = np.corrcoef(np.diff(a.values), np.diff(b.values))[0, 1]
        print(f"increment correlation H=0.6 vs 0.9 on shared noise: {corr:.3f}")
        assert corr > 0.8

    @pytest.mark.parametrize("T,n", [(1.0, 0), (0.0, 10), (-1.0, 10)])
    def test_rejects_bad_grid(self, T, n):
        with pytest.raises(ValidationError):
            simulate_fbm_volterra(0.7, T, n, seed=0)

    def test_terminal_variance_is_riemann_liouville(self):
        # The kernel (t-s)^(H-1/2) gives Var = T^(2H)/(2H), not T^(2H).
        H, T, n, m = 0.9, 1.0, 256, 10_000
        paths = fbm_paths(H, T, n, seed=0, streams=range(m), generator="volterra")
        end = paths[:, -1]
        var, se = np.mean(end**2), np.std(end**2) / np.sqrt(m)
        target = T ** (2 * H) / (2 * H)
        print(f"Volterra Var(B_T) = {var:.4f} +- {se:.4f}; T^2H/(2H) = {target:.4f}; T^2H = {T ** (2 * H):.4f}")
        assert abs(var - target) < 4 * se + 0.01 * target

    def test_deterministic(self):
        a = simulate_fbm_volterra(0.8, 2.0, 30, seed=5)
        b = simulate_fbm_volterra(0.8, 2.0, 30, seed=5)
        assert a.values.tobytes() == b.values.tobytes()


class TestExact:
    def test_starts_at_zero(self):
        assert simulate_fbm_exact(0.7, 1.0, 20, seed=1).values[0] == 0.0

    def test_brownian_increments(self):
        n, m = 32, 5000
        paths = fbm_paths(0.5, 2.0, n, seed=3, streams=range(m))
        inc = np.diff(paths, axis=1)
        C = inc.T @ inc / m
        delta = 2.0 / n
        print(f"diag mean {np.mean(np.diag(C)):.5f} vs delta {delta}; max off-diag {np.max(np.abs(C - np.diag(np.diag(C)))):.5f}")
        assert np.allclose(np.diag(C), delta, atol=5 * delta * np.sqrt(2 / m))
        assert np.max(np.abs(C - np.diag(np.diag(C)))) < 5 * delta / np.sqrt(m)

    def test_batch_matches_single(self):
        batch = fbm_paths(0.8, 1.5, 40, seed=7, streams=[0, 3])
        single = simulate_fbm_exact(0.8, 1.5, 40, seed=7, stream=3).values
        np.testing.assert_allclose(batch[1], single, rtol=1e-12, atol=1e-14)

    def test_factor_cached(self):
        assert exact_factor(0.7, 1.0, 64) is exact_factor(0.7, 1.0, 64)

    def test_empirical_covariance(self):
        # 2x10^4 seeds on the H=0.7, T=2, n=128 grid: 8256 distinct entries, so a
        # 3-SE band is expected to miss ~0.27% of them by chance alone.
        H, T, n, m = 0.7, 2.0, 128, 20_000
        paths = fbm_paths(H, T, n, seed=1, streams=range(m))[:, 1:]
        prod_mean = paths.T @ paths / m
        prod_sq = (paths**2).T @ (paths**2) / m
        se = np.sqrt((prod_sq - prod_mean**2) / m)
        t = TimeGrid(T, n).t[1:]
        z = np.abs(prod_mean - fbm_covariance_matrix(t, H)) / se
        iu = np.triu_indices(n)
        frac = np.mean(z[iu] <= 3.0)
        print(f"entries within 3 SE: {frac:.4f}; max |z| = {z.max():.2f}")
        assert frac >= 0.99
        assert z.max() < 5.0

    @pytest.mark.parametrize("H", [0.55, 0.7, 0.9])
    def test_self_similar_terminal_variance(self, H):
        T, n, m = 2.0, 100, 10_000
        coef = np.zeros(n)
        coef[-1] = 1.0
        end = fbm_functional_samples(H, T, n, seed=2, replicates=m, coef=coef)
        var, se = np.mean(end**2), np.std(end**2) / np.sqrt(m)
        print(f"H={H}: Var(B_T)={var:.4f} +- {se:.4f}, T^2H={T ** (2 * H):.4f}")
        assert abs(var - T ** (2 * H)) < 4 * se

    def test_deterministic(self):
        a = simulate_fbm_exact(0.9, 1.0, 16, seed=8)
        b = simulate_fbm_exact(0.9, 1.0, 16, seed=8)
        assert a.values.tobytes() == b.values.tobytes()
