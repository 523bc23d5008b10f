"""Fractional Brownian motion: covariance, noise, and two path generators.

Two generators share one noise source:

* ``simulate_fbm_volterra`` -- the discretised Volterra (Decreusefond-Lavaud)
  scheme, O(n^2), with kernel weights ``(i-j)^(H+1/2) - (i-j-1)^(H+1/2)``.
* ``simulate_fbm_exact`` -- Cholesky factorisation of the fBm covariance on
  the grid; exact in distribution, used as the reference generator.

The standard normals ``xi_j`` are produced by a counter-based generator
(Philox-4x64) keyed by ``(seed, stream)``: the j-th raw 64-bit word is turned
into an open-interval uniform ``((w >> 11) + 0.5) * 2**-53`` and mapped
through the Cephes ``ndtri`` rational approximation of the inverse normal CDF.
The j-th normal therefore depends only on ``(seed, stream, j)``, never on which
generator consumes it or on the path length.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtri

from .errors import CholeskyError, ValidationError

__all__ = [
    "TimeGrid",
    "SamplePath",
    "alpha_h",
    "check_hurst",
    "fbm_covariance",
    "fbm_covariance_matrix",
    "standard_normals",
    "jittered_cholesky",
    "volterra_weights",
    "simulate_fbm_volterra",
    "simulate_fbm_exact",
    "fbm_paths",
]

GRID_RTOL = 1e-9
_CACHE_MAX_N = 4096


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i*T/n``, ``i = 0..n``."""

    T: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ValidationError(f"grid size n must be a positive integer, got {self.n!r}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"horizon T must be positive, got {self.T!r}")

    @property
    def delta(self) -> float:
        return self.T / self.n

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.T / self.n

    def __len__(self):
        return self.n + 1

    @classmethod
    def from_times(cls, t) -> "TimeGrid":
        """Recover the grid from explicit times, checking ``t_0 = 0`` and uniform spacing."""
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValidationError("a time grid needs at least two points")
        if t[0] != 0.0:
            raise ValidationError(f"time grid must start at 0, got t_0={t[0]!r}")
        n = t.size - 1
        grid = cls(float(t[-1]), n)
        if not np.allclose(t, grid.t, rtol=0.0, atol=GRID_RTOL * grid.T):
            raise ValidationError("time grid is not uniform within 1e-9")
        return grid


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Values sampled on a uniform :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValidationError(
                f"path has {values.shape} values for a grid of {len(self.grid)} points"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def __len__(self):
        return len(self.grid)


def alpha_h(H: float) -> float:
    """``H(2H-1)``, the constant in front of the fBm kernel ``|u-v|^(2H-2)``."""
    return H * (2.0 * H - 1.0)


def check_hurst(H, model=True) -> float:
    """Validate a Hurst index: (1/2, 1) for model use, (0, 1] otherwise."""
    H = float(H)
    if model:
        if not 0.5 < H < 1.0:
            raise ValidationError(f"Hurst parameter must lie in (1/2, 1), got {H}")
    elif not 0.0 < H <= 1.0:
        raise ValidationError(f"Hurst parameter must lie in (0, 1], got {H}")
    return H


def fbm_covariance(s, t, H):
    """``R_H(s, t) = (s^2H + t^2H - |t-s|^2H) / 2``; broadcasts over arrays."""
    check_hurst(H, model=False)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValidationError("fBm covariance is defined for nonnegative times only")
    h2 = 2.0 * H
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_covariance_matrix(times, H) -> np.ndarray:
    """``(R_H(t_i, t_j))_{i,j}``, built in place to keep one n x n array alive."""
    check_hurst(H, model=False)
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValidationError("fBm covariance is defined for nonnegative times only")
    h2 = 2.0 * H
    a = np.subtract.outer(t, t)
    np.abs(a, out=a)
    np.power(a, h2, out=a)
    np.negative(a, out=a)
    d = t**h2
    a += d[:, None]
    a += d[None, :]
    a *= 0.5
    return a


def standard_normals(seed: int, n: int, stream: int = 0) -> np.ndarray:
    """The first ``n`` normals of the counter-based stream keyed by ``(seed, stream)``."""
    seed = int(seed)
    stream = int(stream)
    if not 0 <= seed < 2**64 or not 0 <= stream < 2**64:
        raise ValidationError("seed and stream must be 64-bit unsigned integers")
    bitgen = np.random.Philox(key=seed | (stream << 64))
    raw = bitgen.random_raw(int(n))
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def jittered_cholesky(matrix, base: float = 1e-12, escalations: int = 3):
    """Lower Cholesky factor with bounded diagonal jitter.

    Tries the bare matrix first, then adds ``base * max(diag)`` to the
    diagonal, multiplying the jitter by ten up to ``escalations`` times.

    Returns
    -------
    (L, jitter) : tuple
        The factor and the absolute jitter that was added (0.0 if none).
    """
    a = np.asarray(matrix, dtype=float)
    scale = float(np.max(np.diag(a))) if a.size else 0.0
    jitters = [0.0] + [base * scale * 10.0**k for k in range(escalations + 1)]
    for jitter in jitters:
        # One working copy per attempt; never form a dense identity (n can be 10^4).
        work = a.copy()
        work.flat[:: a.shape[0] + 1] += jitter
        try:
            L = linalg.cholesky(work, lower=True, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    raise CholeskyError(
        f"matrix not positive definite after jitter {jitters[-1]:.3g}", jitter=jitters[-1]
    )


def _check_grid_args(T, n):
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValidationError(f"number of steps must be >= 1, got {n!r}")
    if not T > 0:
        raise ValidationError(f"horizon must be positive, got {T!r}")
    return TimeGrid(float(T), int(n))


@functools.lru_cache(maxsize=16)
def volterra_weights(H: float, n: int) -> np.ndarray:
    """``w_m = m^(H+1/2) - (m-1)^(H+1/2)`` for ``m = 1..n``; computed once per (H, n)."""
    m = np.arange(1, n + 1, dtype=float)
    w = m ** (H + 0.5) - (m - 1.0) ** (H + 0.5)
    w.setflags(write=False)
    return w


def _volterra_from_normals(H, grid, xi):
    delta = grid.delta
    coef = delta ** (H - 0.5) / (H + 0.5) * np.sqrt(delta)
    w = volterra_weights(H, grid.n)
    out = np.zeros(grid.n + 1)
    # B_i = coef * sum_{j<i} w_{i-j} xi_j is a causal convolution; direct O(n^2) sum.
    out[1:] = coef * np.convolve(xi, w)[: grid.n]
    return out


def simulate_fbm_volterra(H: float, T: float, n: int, seed: int, stream: int = 0) -> SamplePath:
    """Approximate fBm path by the discretised Volterra representation.

    ``B_{t_i} ~ (T/n)^(H-1/2)/(H+1/2) * sum_{j<i} w_{i-j} dB_j`` with
    ``dB_j = (T/n)^(1/2) xi_j``. Cost is O(n^2). The kernel ``(t-s)^(H-1/2)``
    is the Riemann-Liouville one, so the terminal variance tends to
    ``T^(2H)/(2H)`` rather than ``T^(2H)``; the exact generator is the
    reference for distributional checks.
    """
    H = check_hurst(H, model=False)
    grid = _check_grid_args(T, n)
    xi = standard_normals(seed, grid.n, stream)
    return SamplePath(grid, _volterra_from_normals(H, grid, xi))


def _exact_factor_uncached(H, T, n):
    grid = TimeGrid(T, n)
    L, _ = jittered_cholesky(fbm_covariance_matrix(grid.t[1:], H))
    L.setflags(write=False)
    return L


_exact_factor_cached = functools.lru_cache(maxsize=4)(_exact_factor_uncached)


def exact_factor(H: float, T: float, n: int) -> np.ndarray:
    """Cholesky factor of ``(R_H(t_i, t_j))_{i,j=1..n}``; cached for moderate n."""
    if n <= _CACHE_MAX_N:
        return _exact_factor_cached(float(H), float(T), int(n))
    return _exact_factor_uncached(float(H), float(T), int(n))


def simulate_fbm_exact(H: float, T: float, n: int, seed: int, stream: int = 0) -> SamplePath:
    """Exact-in-distribution fBm path on ``t_i = iT/n`` via Cholesky.

    Raises
    ------
    CholeskyError
        If the grid covariance is not positive definite after jitter.
    """
    H = check_hurst(H, model=False)
    grid = _check_grid_args(T, n)
    L = exact_factor(H, grid.T, grid.n)
    values = np.zeros(grid.n + 1)
    values[1:] = L @ standard_normals(seed, grid.n, stream)
    return SamplePath(grid, values)


def fbm_paths(H, T, n, seed, streams, generator="exact") -> np.ndarray:
    """Batch of fBm paths, one row per stream, as an ``(m, n+1)`` array.

    Row ``r`` is bit-for-bit the path ``simulate_fbm_<generator>(H, T, n,
    seed, streams[r])`` would give for the Volterra generator, and equal up
    to BLAS summation order for the exact one.
    """
    H = check_hurst(H, model=False)
    grid = _check_grid_args(T, n)
    streams = list(streams)
    xi = np.stack([standard_normals(seed, grid.n, s) for s in streams]) if streams else np.zeros((0, grid.n))
    out = np.zeros((len(streams), grid.n + 1))
    if generator == "exact":
        L = exact_factor(H, grid.T, grid.n)
        out[:, 1:] = xi @ L.T
    elif generator == "volterra":
        for r in range(len(streams)):
            out[r] = _volterra_from_normals(H, grid, xi[r])
    else:
        raise ValidationError(f"unknown generator {generator!r}; use 'volterra' or 'exact'")
    return out
