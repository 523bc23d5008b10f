"""The fractional one-compartment IV bolus model.

The concentration ``C`` solves ``dC = -upsilon C dt + sigma C^beta dB^H`` up to
its first zero ``tau0`` and is computed from the explicit solution

    C_t = |C0^(1-beta) + sigma B^H_t(theta)|^(gamma+1) exp(-upsilon t),

with ``theta_t = (1-beta) exp(upsilon (1-beta) t)``, ``gamma = beta/(1-beta)``
and ``B^H(theta)`` the pathwise integral of ``theta`` against ``B^H``.
``X = C^(1-beta)`` (signed, before the absolute value) is a fractional
Ornstein-Uhlenbeck process with rate ``upsilon (1-beta)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal

from .errors import ValidationError
from .fbm import SamplePath, TimeGrid, alpha_h, check_hurst, fbm_paths, simulate_fbm_exact, simulate_fbm_volterra

__all__ = [
    "ModelParams",
    "ProcessBundle",
    "theta_weight",
    "weighted_wiener_integral",
    "simulate_concentration",
    "deterministic_solution",
    "detect_tau0",
    "fou_paths",
]

GENERATORS = ("exact", "volterra")


@dataclass(frozen=True)
class ModelParams:
    """Model parameters. Times in hours, concentrations in g (or g/L)."""

    upsilon: float = 1.5
    sigma: float = float(np.sqrt(0.26))
    beta: float = 0.0
    H: float = 0.9
    C0: float = 1.0
    T: float = 3.0

    def __post_init__(self):
        for name in ("upsilon", "sigma", "beta", "H", "C0", "T"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.upsilon <= 0:
            raise ValidationError(f"upsilon must be > 0, got {self.upsilon}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.beta < 1.0:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}")
        check_hurst(self.H)
        if self.C0 <= 0:
            raise ValidationError(f"C0 must be > 0, got {self.C0}")
        if self.T <= 0:
            raise ValidationError(f"T must be > 0, got {self.T}")

    @classmethod
    def from_sigma2(cls, sigma2, **kw) -> "ModelParams":
        if sigma2 < 0:
            raise ValidationError(f"sigma^2 must be >= 0, got {sigma2}")
        return cls(sigma=float(np.sqrt(sigma2)), **kw)

    @property
    def gamma(self) -> float:
        return self.beta / (1.0 - self.beta)

    @property
    def drift_rate(self) -> float:
        """``upsilon (1 - beta)``, the mean-reversion rate of X."""
        return self.upsilon * (1.0 - self.beta)

    @property
    def x0(self) -> float:
        return self.C0 ** (1.0 - self.beta)

    @property
    def alpha_H(self) -> float:
        return alpha_h(self.H)

    @property
    def sigma2(self) -> float:
        return self.sigma**2

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProcessBundle:
    """All processes of one simulated realisation, on one shared grid."""

    grid: TimeGrid
    bh: SamplePath
    bh_theta: SamplePath
    x: SamplePath
    c: SamplePath
    params: ModelParams
    seed: int | None = None
    stream: int = 0
    generator: str | None = None
    tau0_index: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    @property
    def core(self) -> np.ndarray:
        """``C0^(1-beta) + sigma B^H(theta)``, the quantity whose sign defines tau0."""
        p = self.params
        return p.x0 + p.sigma * self.bh_theta.values

    @property
    def tau0(self) -> float | None:
        return None if self.tau0_index is None else float(self.t[self.tau0_index])


def theta_weight(t, p: ModelParams):
    """``theta_t = (1-beta) exp(upsilon (1-beta) t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("theta is defined for t >= 0")
    out = (1.0 - p.beta) * np.exp(p.drift_rate * t)
    return float(out) if out.ndim == 0 else out


def weighted_wiener_integral(bh: SamplePath, p: ModelParams) -> SamplePath:
    """Left-point sums ``out[i] = sum_{j<i} theta(t_j) (bh[j+1] - bh[j])``."""
    if not isinstance(bh, SamplePath):
        raise ValidationError("weighted_wiener_integral needs a SamplePath")
    out = np.zeros(len(bh))
    # theta grows like exp(lambda t); overflow to inf is reported, not hidden,
    # and detect_tau0 falls back on X where it happens.
    with np.errstate(over="ignore", invalid="ignore"):
        th = theta_weight(bh.t[:-1], p)
        out[1:] = np.cumsum(th * np.diff(bh.values))
    return SamplePath(bh.grid, out)


def _scaled_integral(increments, p: ModelParams, delta: float):
    """``Z_i = exp(-lambda t_i) B^H_{t_i}(theta)`` along the last axis, computed stably.

    Uses ``Z_{i+1} = a (Z_i + (1-beta) dB_i)`` with ``a = exp(-lambda delta)``,
    which never forms ``exp(lambda t)`` and so cannot overflow.
    """
    a = np.exp(-p.drift_rate * delta)
    z = signal.lfilter([a * (1.0 - p.beta)], [1.0, -a], increments, axis=-1)
    pad = [(0, 0)] * (z.ndim - 1) + [(1, 0)]
    return np.pad(z, pad)


def deterministic_solution(p: ModelParams, grid: TimeGrid):
    """``(X^det, C^det)`` with ``X^det_t = C0^(1-beta) e^{-upsilon(1-beta)t}``, ``C^det_t = C0 e^{-upsilon t}``."""
    t = grid.t
    xdet = p.x0 * np.exp(-p.drift_rate * t)
    cdet = p.C0 * np.exp(-p.upsilon * t)
    return SamplePath(grid, xdet), SamplePath(grid, cdet)


def simulate_concentration(
    p: ModelParams, n: int, seed: int, generator: str = "exact", stream: int = 0
) -> ProcessBundle:
    """Simulate one realisation of ``(B^H, B^H(theta), X, C)`` on ``t_i = i T/n``.

    ``C`` is evaluated from the explicit solution, not from an SDE scheme.
    The full path is kept past ``tau0``; ``tau0_index`` reports the first grid
    index where the core ``C0^(1-beta) + sigma B^H(theta)`` is <= 0.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 2):
        raise ValidationError(f"need n >= 2 grid steps, got {n!r}")
    if generator == "exact":
        bh = simulate_fbm_exact(p.H, p.T, n, seed, stream)
    elif generator == "volterra":
        bh = simulate_fbm_volterra(p.H, p.T, n, seed, stream)
    else:
        raise ValidationError(f"unknown generator {generator!r}; use one of {GENERATORS}")
    grid = bh.grid
    bh_theta = weighted_wiener_integral(bh, p)
    xdet, _ = deterministic_solution(p, grid)
    x = xdet.values + p.sigma * _scaled_integral(np.diff(bh.values), p, grid.delta)
    c = np.abs(x) ** (p.gamma + 1.0)
    bundle = ProcessBundle(
        grid=grid,
        bh=bh,
        bh_theta=bh_theta,
        x=SamplePath(grid, x),
        c=SamplePath(grid, c),
        params=p,
        seed=int(seed),
        stream=int(stream),
        generator=generator,
    )
    hit = detect_tau0(bundle)
    if hit is not None:
        object.__setattr__(bundle, "tau0_index", hit[0])
    return bundle


def detect_tau0(bundle: ProcessBundle):
    """First ``(index, time)`` where the core is <= 0, or ``None``.

    Where ``B^H(theta)`` has overflowed the sign of X is used instead; the two
    agree because ``X = core * exp(-upsilon (1-beta) t)``.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        core = bundle.core
    core = np.where(np.isfinite(core), core, bundle.x.values)
    hits = np.flatnonzero(core <= 0.0)
    if hits.size == 0:
        return None
    i = int(hits[0])
    return i, float(bundle.t[i])


def fou_paths(p: ModelParams, n: int, seed: int, streams, generator: str = "exact") -> np.ndarray:
    """Batch of X paths (one row per stream) on ``t_i = i T/n``.

    Row ``r`` matches ``simulate_concentration(p, n, seed, generator, streams[r]).x``
    up to floating-point summation order.
    """
    bh = fbm_paths(p.H, p.T, n, seed, streams, generator)
    grid = TimeGrid(p.T, n)
    xdet, _ = deterministic_solution(p, grid)
    return xdet.values[None, :] + p.sigma * _scaled_integral(np.diff(bh, axis=1), p, grid.delta)
