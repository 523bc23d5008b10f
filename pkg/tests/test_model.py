"""Model parameters, the weighted integral, explicit solution and tau0."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracbolus.analytics import r_h_theta
from fracbolus.errors import ValidationError
from fracbolus.fbm import SamplePath, TimeGrid, fbm_paths, simulate_fbm_exact
from fracbolus.model import (
    ModelParams,
    ProcessBundle,
    deterministic_solution,
    detect_tau0,
    fou_paths,
    simulate_concentration,
    theta_weight,
    weighted_wiener_integral,
)
from fracbolus.studies import theta_integral_terminal

# Frozen values from direct evaluation (mpmath, 30 digits).
THETA_1_B09 = 0.14190675485932575  # 0.1 * e^0.35
THETA_1_B0 = 33.11545195869231  # e^3.5
CDET_1 = 0.0301973834223185  # e^-3.5


class TestParams:
    def test_defaults(self):
        p = ModelParams()
        assert (p.upsilon, p.beta, p.H, p.C0, p.T) == (1.5, 0.0, 0.9, 1.0, 3.0)
        assert p.sigma2 == pytest.approx(0.26)

    def test_derived(self):
        p = ModelParams(beta=0.9, upsilon=3.5)
        assert p.gamma == pytest.approx(9.0)
        assert p.drift_rate == pytest.approx(0.35)
        assert p.alpha_H == pytest.approx(0.9 * 0.8)

    @pytest.mark.parametrize(
        "bad",
        [
            {"upsilon": 0.0},
            {"sigma": -0.1},
            {"beta": 1.0},
            {"beta": -0.1},
            {"H": 0.5},
            {"H": 1.0},
            {"C0": 0.0},
            {"T": 0.0},
            {"upsilon": float("nan")},
        ],
    )
    def test_rejects(self, bad):
        with pytest.raises(ValidationError):
            ModelParams(**bad)

    def test_replace_revalidates(self):
        with pytest.raises(ValidationError):
            ModelParams().replace(H=0.3)


class TestTheta:
    def test_at_zero(self):
        assert theta_weight(0.0, ModelParams(beta=0.3)) == pytest.approx(0.7)

    def test_frozen_values(self):
        assert theta_weight(1.0, ModelParams(upsilon=3.5, beta=0.9)) == pytest.approx(THETA_1_B09, rel=1e-14)
        assert theta_weight(1.0, ModelParams(upsilon=3.5, beta=0.0)) == pytest.approx(THETA_1_B0, rel=1e-14)

    @given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(0.1, 5.0), st.floats(0.0, 0.95))
    def test_positive_nondecreasing(self, a, b, ups, beta):
        p = ModelParams(upsilon=ups, beta=beta)
        lo, hi = sorted((a, b))
        assert 0 < theta_weight(lo, p) <= theta_weight(hi, p)

    def test_negative_time(self):
        with pytest.raises(ValidationError):
            theta_weight(-1.0, ModelParams())


class TestWeightedIntegral:
    def test_constant_theta_telescopes(self):
        # drift rate 0 makes theta constant = 1 - beta
        stub = SimpleNamespace(beta=0.5, drift_rate=0.0)
        bh = simulate_fbm_exact(0.8, 1.0, 50, seed=4)
        out = weighted_wiener_integral(bh, stub)
        np.testing.assert_allclose(out.values, 0.5 * bh.values, rtol=1e-12, atol=1e-15)

    def test_zero_path(self):
        bh = SamplePath(TimeGrid(1.0, 10), np.zeros(11))
        assert np.all(weighted_wiener_integral(bh, ModelParams()).values == 0.0)

    def test_rejects_non_path(self):
        with pytest.raises(ValidationError):
            weighted_wiener_integral(np.zeros(5), ModelParams())

    def test_terminal_variance_matches_quadrature(self):
        p = ModelParams(H=0.9, beta=0.9, upsilon=3.5, T=3.0)
        samples = theta_integral_terminal(p, 2048, seed=10, replicates=10_000)
        var = np.mean(samples**2)
        R = r_h_theta(3.0, 3.0, p)
        print(f"MC Var(B_T(theta)) = {var:.5f}, quadrature R = {R:.5f}, rel diff {var / R - 1:+.3%}")
        assert abs(var / R - 1.0) < 0.05


class TestDeterministic:
    def test_values(self):
        p = ModelParams(upsilon=3.5, C0=1.0, beta=0.9)
        xdet, cdet = deterministic_solution(p, TimeGrid(1.0, 4))
        assert xdet.values[0] == pytest.approx(1.0) and cdet.values[0] == 1.0
        assert cdet.values[-1] == pytest.approx(CDET_1, rel=1e-14)

    @given(st.floats(0.0, 0.95), st.floats(0.1, 4.0), st.floats(0.1, 10.0))
    def test_power_identity(self, beta, ups, C0):
        p = ModelParams(beta=beta, upsilon=ups, C0=C0)
        xdet, cdet = deterministic_solution(p, TimeGrid(3.0, 30))
        np.testing.assert_allclose(xdet.values ** (p.gamma + 1.0), cdet.values, rtol=1e-12)


class TestSimulate:
    def test_sigma_zero_is_deterministic(self):
        p = ModelParams(sigma=0.0, upsilon=1.5)
        b = simulate_concentration(p, 100, seed=1)
        np.testing.assert_array_equal(b.c.values, p.C0 * np.exp(-p.upsilon * b.t))
        assert np.all(np.diff(b.c.values) < 0)
        assert b.tau0_index is None

    def test_sigma_zero_with_beta(self):
        p = ModelParams(sigma=0.0, beta=0.5, upsilon=2.0, C0=3.0)
        b = simulate_concentration(p, 50, seed=1)
        np.testing.assert_allclose(b.c.values, 3.0 * np.exp(-2.0 * b.t), rtol=1e-13)

    @pytest.mark.parametrize("generator", ["exact", "volterra"])
    def test_initial_values(self, generator):
        p = ModelParams(beta=0.4, C0=2.0)
        b = simulate_concentration(p, 40, seed=2, generator=generator)
        assert b.c.values[0] == pytest.approx(2.0, rel=1e-15)
        assert b.x.values[0] == pytest.approx(2.0**0.6, rel=1e-15)
        assert b.bh.values[0] == 0.0

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 0.9), st.integers(0, 2**32))
    def test_power_identity_ulp(self, beta, seed):
        p = ModelParams(beta=beta, upsilon=3.5, sigma=0.5)
        b = simulate_concentration(p, 64, seed=seed)
        expect = np.abs(b.x.values) ** (p.gamma + 1.0)
        assert np.all(np.abs(b.c.values - expect) <= 4 * np.spacing(np.maximum(expect, 1e-300)))

    def test_scale_relation(self):
        p = ModelParams(beta=0.6, upsilon=2.0, sigma=0.7, H=0.75)
        b = simulate_concentration(p, 500, seed=6)
        xdet, _ = deterministic_solution(p, b.grid)
        lhs = b.x.values - xdet.values
        rhs = p.sigma * b.bh_theta.values * np.exp(-p.drift_rate * b.t)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-13)

    def test_fou_paths_match(self):
        p = ModelParams(beta=0.2)
        X = fou_paths(p, 80, seed=4, streams=[0, 5])
        b = simulate_concentration(p, 80, seed=4, stream=5)
        np.testing.assert_allclose(X[1], b.x.values, rtol=1e-11, atol=1e-14)

    def test_rejects_small_grid_and_unknown_generator(self):
        with pytest.raises(ValidationError):
            simulate_concentration(ModelParams(), 1, seed=0)
        with pytest.raises(ValidationError):
            simulate_concentration(ModelParams(), 10, seed=0, generator="fft")

    def test_no_overflow_for_long_horizons(self):
        p = ModelParams(upsilon=50.0, T=30.0, sigma=0.5)
        with np.errstate(over="raise", invalid="raise"):
            X = fou_paths(p, 300, seed=1, streams=[0])
        b = simulate_concentration(p, 300, seed=1)
        assert np.all(np.isfinite(X)) and np.all(np.isfinite(b.x.values))
        print(f"bh_theta finite: {np.isfinite(b.bh_theta.values).all()}, tau0 index {b.tau0_index}")
        assert b.tau0_index is not None

    def test_matches_euler_langevin(self):
        # X_T from the explicit formula vs the left-point Euler scheme of
        # X_t = C0 - upsilon int X ds + sigma B^H_t, same fBm path.
        p = ModelParams.from_sigma2(0.26, beta=0.0, upsilon=1.5, H=0.9, C0=1.0, T=2.0)
        n, m = 4096, 200
        B = fbm_paths(p.H, p.T, n, seed=3, streams=range(m))
        X = fou_paths(p, n, seed=3, streams=range(m))
        delta = p.T / n
        dB = np.diff(B, axis=1)
        y = np.full(m, p.C0)
        for k in range(n):
            y = y - p.upsilon * y * delta + p.sigma * dB[:, k]
        rms = np.sqrt(np.mean((y - X[:, -1]) ** 2))
        print(f"RMS(explicit - Euler) at T: {rms:.2e}")
        assert rms < 1e-2


class TestTau0:
    def _bundle(self, core):
        p = ModelParams(sigma=1.0, C0=1.0, beta=0.0)
        grid = TimeGrid(1.0, len(core) - 1)
        zeros = SamplePath(grid, np.zeros(len(core)))
        theta = SamplePath(grid, np.asarray(core) - 1.0)
        return ProcessBundle(grid, zeros, theta, zeros, zeros, p)

    def test_constructed_core(self):
        assert detect_tau0(self._bundle([1.0, 0.5, -0.2, 0.3])) == (2, pytest.approx(2 / 3))

    def test_touching_zero_counts(self):
        assert detect_tau0(self._bundle([1.0, 0.0, 0.3]))[0] == 1

    def test_none_without_noise(self):
        b = simulate_concentration(ModelParams(sigma=0.0), 20, seed=0)
        assert detect_tau0(b) is None and b.tau0 is None

    def test_census_strong_noise(self):
        p = ModelParams.from_sigma2(4.0, beta=0.9, H=0.6, upsilon=3.5, T=3.0)
        X = fou_paths(p, 300, seed=0, streams=range(1000))
        frac = np.mean(np.any(X <= 0.0, axis=1))
        print(f"beta=0.9, sigma^2=4, H=0.6: fraction of paths with tau0 < T: {frac:.3f}")
        assert 0.0 <= frac <= 1.0


class TestRegularity:
    def test_smoother_for_larger_h(self):
        stats = {}
        for H in (0.6, 0.9):
            p = ModelParams(H=H)
            X = fou_paths(p, 300, seed=0, streams=range(100))
            dd = X[:, 2:] - 2 * X[:, 1:-1] + X[:, :-2]
            stats[H] = float(np.median(np.sum(dd**2, axis=1)))
        print(f"median second-order variation: H=0.6 {stats[0.6]:.3e}, H=0.9 {stats[0.9]:.3e}")
        assert stats[0.9] < stats[0.6]


def test_theta_formula_by_hand():
    p = ModelParams(upsilon=2.0, beta=0.25)
    assert theta_weight(0.7, p) == pytest.approx(0.75 * math.exp(2.0 * 0.75 * 0.7), rel=1e-15)
