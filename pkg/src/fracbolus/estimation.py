"""Estimators of (H, sigma, upsilon) from discretely observed concentrations.

Observed concentrations ``c_k`` are mapped to the fractional OU process by
``x_k = c_k^(1-beta)``. Then

* ``hurst_hat``  -- ratio of lag-2 to lag-1 second-order quadratic variations,
* ``sigma_hat``  -- lag-1 quadratic variation against the filter constant
  ``sum_{k,l} a_k a_l |k-l|^(2H)`` of ``a = (-1/4, 1/2, -1/4)``,
* ``upsilon_hat_known`` -- inversion of the ergodic second moment with the
  time integral done by the trapezoid rule (H and sigma known),
* ``upsilon_hat_unknown`` -- the same inversion with ``(H_hat, sigma_hat)``
  and a discrete mean square plugged in,
* ``regression_upsilon`` -- log-linear least squares, for short samples.

Quadratic variations are averaged over their number of terms, which keeps
the lag-2/lag-1 ratio unbiased for short samples and makes ``sigma_hat``
scale-free in the sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DegenerateInputError, ValidationError
from .fbm import SamplePath

__all__ = [
    "FILTER",
    "ObservationSet",
    "EstimationResult",
    "to_fou_observations",
    "ergodic_moment",
    "quadratic_variations",
    "filter_constant",
    "hurst_hat",
    "sigma_hat",
    "upsilon_from_moment",
    "upsilon_hat_known",
    "upsilon_hat_unknown",
    "regression_upsilon",
    "discretization_gap",
]

FILTER = np.array([-0.25, 0.5, -0.25])
SPACING_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Concentrations ``c_k`` observed on a uniform time grid."""

    times: np.ndarray
    concentrations: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        c = np.atleast_1d(np.asarray(self.concentrations, dtype=float))
        if t.ndim != 1 or t.shape != c.shape or t.size == 0:
            raise ValidationError("times and concentrations must be nonempty 1-d arrays of equal length")
        if not np.all(np.isfinite(t)) or not np.all(np.isfinite(c)):
            raise ValidationError("observations must be finite")
        if np.any(c <= 0):
            k = int(np.flatnonzero(c <= 0)[0])
            raise ValidationError(
                f"concentration c[{k}] = {c[k]} is not positive; the model stops at the first "
                "zero (tau0), so truncate the record there instead of passing zeros"
            )
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValidationError("observation times must be strictly increasing")
            delta = (t[-1] - t[0]) / (t.size - 1)
            if np.max(np.abs(steps - delta)) > SPACING_RTOL * delta:
                raise ValidationError("observation times are not uniformly spaced (non-uniform grid)")
        if not 0.0 <= self.beta < 1.0:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "concentrations", c)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        """Number of steps; the record holds ``n + 1`` observations."""
        return self.times.size - 1

    @property
    def delta(self) -> float | None:
        if self.times.size < 2:
            return None
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    def with_beta(self, beta) -> "ObservationSet":
        return ObservationSet(self.times, self.concentrations, beta)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.beta == other.beta
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.concentrations, other.concentrations)
        )


@dataclass
class EstimationResult:
    """Point estimate with the statistics it was computed from."""

    estimate: float
    method: str
    n: int
    delta: float | None
    warnings: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "method": self.method,
            "n": self.n,
            "delta": self.delta,
            "warnings": list(self.warnings),
            "stats": dict(self.stats),
        }


def to_fou_observations(obs: ObservationSet) -> np.ndarray:
    """``x_k = c_k^(1-beta)``."""
    return obs.concentrations ** (1.0 - obs.beta)


def ergodic_moment(order: int, p) -> float:
    """Stationary moment ``E(Y_0^order)`` of the fractional OU process.

    Zero for odd orders; for even ``n``
    ``n! sigma^n (1-beta)^(n-nH) upsilon^(-nH) H^(n/2) Gamma(2H)^(n/2) / (2^(n/2) (n/2)!)``.
    """
    n = int(order)
    if n < 1 or n != order:
        raise ValidationError(f"moment order must be a positive integer, got {order!r}")
    if n % 2:
        return 0.0
    H, half = p.H, n // 2
    return float(
        math.factorial(n)
        * p.sigma**n
        * (1.0 - p.beta) ** (n - n * H)
        * p.upsilon ** (-n * H)
        * (H * gamma_fn(2.0 * H)) ** half
        / (2.0**half * math.factorial(half))
    )


def _as_sequence(x, min_len, what):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError(f"{what} needs a 1-d sample")
    if x.size < min_len:
        raise ValidationError(f"{what} needs at least {min_len} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{what} got non-finite observations")
    return x


def quadratic_variations(x):
    """Mean squared second differences at lags 1 and 2.

    Returns ``(v1, v2, s1, s2)``: means of ``|x_{k+1} - 2x_k + x_{k-1}|^2``
    (k = 1..n-1) and ``|x_{k+2} - 2x_k + x_{k-2}|^2`` (k = 2..n-2), then the
    corresponding raw sums.
    """
    x = np.asarray(x, dtype=float)
    d1 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    d2 = x[4:] - 2.0 * x[2:-2] + x[:-4]
    s1, s2 = float(np.dot(d1, d1)), float(np.dot(d2, d2))
    return s1 / d1.size, s2 / d2.size, s1, s2


def _check_not_affine(x, s1, n_terms):
    scale = float(np.max(np.abs(x)))
    if s1 <= n_terms * (64.0 * np.finfo(float).eps * scale) ** 2:
        raise DegenerateInputError(
            "lag-1 second differences vanish (affine sample); the Hurst estimator is undefined"
        )


def filter_constant(H: float) -> float:
    """``sum_{k,l=0..2} a_k a_l |k-l|^(2H) = -1/2 + 2^(2H-3)`` for ``a = (-1/4, 1/2, -1/4)``."""
    k = np.arange(3)
    gaps = np.abs(k[:, None] - k[None, :]).astype(float)
    powered = np.where(gaps > 0, gaps ** (2.0 * H), 0.0)
    return float(FILTER @ powered @ FILTER)


def hurst_hat(x) -> EstimationResult:
    """``H_hat = log2(v2 / v1) / 2`` from the lag-2 and lag-1 quadratic variations.

    The raw value is returned even outside (1/2, 1), with a warning.

    Raises
    ------
    DegenerateInputError
        If the lag-1 variation vanishes, e.g. for an affine sample.
    """
    x = _as_sequence(x, 6, "hurst_hat")
    v1, v2, s1, s2 = quadratic_variations(x)
    _check_not_affine(x, s1, x.size - 2)
    if v2 == 0.0:
        raise DegenerateInputError("lag-2 second differences vanish; the Hurst estimator is undefined")
    est = 0.5 * math.log2(v2 / v1)
    warns = []
    if not 0.5 < est < 1.0:
        warns.append(f"H_hat = {est:.4g} lies outside (1/2, 1)")
    return EstimationResult(
        est, "hurst_quadratic_variation", x.size - 1, None, warns,
        {"qv_lag1_mean": v1, "qv_lag2_mean": v2, "qv_lag1_sum": s1, "qv_lag2_sum": s2},
    )


def sigma_hat(x, H_est: float, delta: float, beta: float = 0.0) -> EstimationResult:
    """Volatility from the lag-1 quadratic variation.

    ``sigma_hat = (1-beta)^-1 * sqrt(-v1 / (8 K(H) delta^(2H)))`` with
    ``K(H) = filter_constant(H) < 0`` on (0, 1).
    """
    x = _as_sequence(x, 4, "sigma_hat")
    if not 0.0 < H_est < 1.0:
        raise ValidationError(f"sigma_hat needs H in (0, 1), got {H_est} (the filter constant vanishes at H = 1)")
    if not delta > 0:
        raise ValidationError(f"step must be > 0, got {delta}")
    d1 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    v1 = float(np.dot(d1, d1)) / d1.size
    K = filter_constant(H_est)
    s2 = -v1 / (8.0 * K * delta ** (2.0 * H_est)) / (1.0 - beta) ** 2
    return EstimationResult(
        math.sqrt(s2), "sigma_quadratic_variation", x.size - 1, float(delta), [],
        {"qv_lag1_mean": v1, "filter_constant": K, "H_used": float(H_est), "sigma2": s2},
    )


def upsilon_from_moment(H: float, sigma: float, beta: float, mean_square: float) -> float:
    """Invert ``mean_square = sigma^2 (1-beta)^(2-2H) upsilon^(-2H) H Gamma(2H)`` for upsilon."""
    if not mean_square > 0:
        raise DegenerateInputError("mean square is zero; upsilon is undefined")
    if not sigma > 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    base = mean_square / (sigma**2 * (1.0 - beta) ** 2 * H * gamma_fn(2.0 * H))
    return float(base ** (-1.0 / (2.0 * H)) / (1.0 - beta))


def upsilon_hat_known(x_path, H: float, sigma: float, beta: float = 0.0, times=None) -> EstimationResult:
    """Elimination constant from one path when H and sigma are known.

    The time average ``(1/T) int_0^T X_t^2 dt`` uses the trapezoid rule on the
    path's grid. ``x_path`` is a :class:`SamplePath`, or an array together
    with ``times``.
    """
    if isinstance(x_path, SamplePath):
        t, x = x_path.t, x_path.values
    else:
        if times is None:
            raise ValidationError("pass times with a bare array of observations")
        t, x = np.asarray(times, dtype=float), np.asarray(x_path, dtype=float)
    x = _as_sequence(x, 2, "upsilon_hat_known")
    if t.shape != x.shape:
        raise ValidationError("times and path differ in length")
    if not 0.5 < H < 1.0:
        raise ValidationError(f"H must lie in (1/2, 1), got {H}")
    span = float(t[-1] - t[0])
    mean_square = float(np.trapezoid(x * x, t)) / span
    est = upsilon_from_moment(H, sigma, beta, mean_square)
    delta = span / (x.size - 1)
    return EstimationResult(est, "upsilon_ergodic_known", x.size - 1, delta, [], {"time_average_x2": mean_square, "T": span})


def upsilon_hat_unknown(x, delta: float, beta: float = 0.0) -> EstimationResult:
    """Elimination constant with H and sigma replaced by their estimators.

    ``f(H_hat, sigma_hat, (1/n) sum_{k<n} x_k^2)`` where ``f`` is
    :func:`upsilon_from_moment`.
    """
    x = _as_sequence(x, 6, "upsilon_hat_unknown")
    h = hurst_hat(x)
    s = sigma_hat(x, h.estimate, delta, beta)
    mean_square = float(np.mean(x[:-1] ** 2))
    warns = list(h.warnings)
    est = upsilon_from_moment(h.estimate, s.estimate, beta, mean_square)
    stats = {
        "H_hat": h.estimate,
        "sigma_hat": s.estimate,
        "mean_square": mean_square,
        **h.stats,
        "filter_constant": s.stats["filter_constant"],
    }
    return EstimationResult(est, "upsilon_ergodic_plugin", x.size - 1, float(delta), warns, stats)


def regression_upsilon(obs: ObservationSet) -> EstimationResult:
    """Log-linear least squares on the transformed observations.

    ``-(1-beta)^-1 cov(t, log x) / var(t)`` with ``x_k = c_k^(1-beta)``. On
    deterministic data ``log x`` is linear with slope ``-upsilon (1-beta)``, so
    the estimate is exact for every beta; for beta = 0 it is the plain
    regression of ``log c`` on t.
    """
    t = obs.times
    if t.size < 2 or np.ptp(t) == 0:
        raise DegenerateInputError("regression needs at least two distinct observation times")
    logx = np.log(to_fou_observations(obs))
    tc = t - t.mean()
    slope = float(np.dot(tc, logx - logx.mean()) / np.dot(tc, tc))
    intercept = float(logx.mean() - slope * t.mean())
    return EstimationResult(
        -slope / (1.0 - obs.beta), "upsilon_log_linear_regression", obs.n, obs.delta, [],
        {"slope_log_x": slope, "intercept_log_x": intercept, "C0_fit": math.exp(intercept / (1.0 - obs.beta))},
    )


def discretization_gap(x, delta: float, refine: int = 1) -> float:
    """``|(1/T) int_0^T X^2 dt - (1/n) sum_{k<n} X_{k delta}^2|``.

    The integral is the trapezoid rule on the sample's own grid (step
    ``delta / refine``); the discrete mean square uses every ``refine``-th
    point. With ``refine = 1`` both use the same grid.
    """
    x = np.asarray(x, dtype=float)
    refine = int(refine)
    if refine < 1 or (x.size - 1) % refine:
        raise ValidationError("path length must be a multiple of refine steps")
    n = (x.size - 1) // refine
    T = n * delta
    time_avg = float(np.trapezoid(x * x, dx=delta / refine)) / T
    coarse = x[::refine]
    return abs(time_avg - float(np.mean(coarse[:-1] ** 2)))
