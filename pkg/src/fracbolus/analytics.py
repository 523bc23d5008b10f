"""Gaussian analytics of the fractional OU process X and the concentration C.

Both covariance kernels reduce to the double integral

    J(s, t) = int_0^s int_0^t |u - v|^(2H-2) exp(lambda (u + v)) du dv,
    lambda = upsilon (1 - beta),

through ``R_{H,theta}(s, t) = alpha_H (1-beta)^2 J(s, t)`` and
``R_X(s, t) = sigma^2 exp(-lambda (s+t)) R_{H,theta}(s, t)``.

Substituting ``w = u - v`` integrates out the exponential in closed form, which
leaves one-dimensional integrals whose only singularity is the algebraic
factor ``w^(2H-2)`` at ``w = 0``; QUADPACK's algebraic-weight rule (QAWS)
absorbs that factor exactly. Everything is evaluated as
``D(s, t) = exp(-lambda (s+t)) J(s, t)`` so that long horizons do not overflow.
"""

from __future__ import annotations

import functools
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .errors import CholeskyError, QuadratureError, SingularCovarianceError, ValidationError
from .fbm import SamplePath, jittered_cholesky
from .model import ModelParams

__all__ = [
    "GaussianSpec",
    "BudgetQuery",
    "r_h_theta",
    "r_h_theta_lattice",
    "r_x",
    "build_gaussian_spec",
    "density_chi_n",
    "borell_deviation_bound",
    "deviation_radius",
    "sigma_budget",
    "concentration_envelope",
]

DEFAULT_RTOL = 1e-6
MAX_DENSITY_DIM = 20


def _phi(x, lam):
    # int_0^x exp(-2 lam y) dy
    return -np.expm1(-2.0 * lam * x) / (2.0 * lam) if lam > 0 else x


def _quad(f, a, b, rtol, alg=None):
    kw = dict(epsabs=0.0, epsrel=rtol, limit=200, full_output=1)
    if alg is not None:
        kw.update(weight="alg", wvar=(alg, 0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, a, b, **kw)
    value, abserr = out[0], out[1]
    ok = len(out) < 4
    return value, abserr, ok


@functools.lru_cache(maxsize=4096)
def _scaled_kernel(s: float, t: float, H: float, lam: float, rtol: float):
    """``(D(s, t), abserr)`` with ``D = exp(-lam (s+t)) J(s, t)``."""
    if s == 0.0 or t == 0.0:
        return 0.0, 0.0
    if s > t:
        s, t = t, s
    a = 2.0 * H - 2.0
    piece_rtol = rtol / 8.0
    failures = []

    # [0,s]^2: 2 int_0^s w^a exp(lam (s-t-w)) phi(s-w) dw
    sq, err, ok = _quad(lambda w: np.exp(-lam * w) * _phi(s - w, lam), 0.0, s, piece_rtol, alg=a)
    shift = np.exp(-lam * (t - s))
    total, total_err = 2.0 * shift * sq, 2.0 * shift * err
    if not ok:
        failures.append("square")

    if t > s:
        # [0,s] x [s,t]: w = u - v, v in [max(0, s-w), min(s, t-w)]
        def g(w):
            lo = max(0.0, s - w)
            hi = min(s, t - w)
            if hi <= lo:
                return 0.0
            return np.exp(lam * (w + 2.0 * hi - s - t)) * _phi(hi - lo, lam)

        b1, b2 = sorted((s, t - s))
        val, err, ok = _quad(g, 0.0, b1, piece_rtol, alg=a)
        total += val
        total_err += err
        if not ok:
            failures.append("rectangle near diagonal")
        for lo, hi in ((b1, b2), (b2, t)):
            if hi > lo:
                val, err, ok = _quad(lambda w: w**a * g(w), lo, hi, piece_rtol)
                total += val
                total_err += err
                if not ok:
                    failures.append(f"rectangle [{lo:g}, {hi:g}]")

    if failures or total_err > rtol * abs(total):
        raise QuadratureError(
            f"kernel quadrature did not converge at (s={s}, t={t}, H={H}): "
            f"value {total:.6g}, error estimate {total_err:.3g} ({', '.join(failures) or 'tolerance'})",
            value=total,
            abserr=total_err,
        )
    return total, total_err


def _check_times(s, t):
    s, t = float(s), float(t)
    if s < 0 or t < 0 or not (np.isfinite(s) and np.isfinite(t)):
        raise ValidationError(f"covariance needs finite times >= 0, got ({s}, {t})")
    return s, t


def r_h_theta(s, t, p: ModelParams, rtol: float = DEFAULT_RTOL, full_output: bool = False):
    """Covariance of ``B^H(theta)``.

    ``R_{H,theta}(s,t) = alpha_H (1-beta)^2 int_0^s int_0^t |u-v|^(2H-2) e^{lambda(u+v)} du dv``.
    ``p.sigma`` is not used.

    Parameters
    ----------
    rtol : float
        Relative accuracy target of the adaptive quadrature.
    full_output : bool
        Also return the absolute error estimate.

    Raises
    ------
    QuadratureError
        If the quadrature misses ``rtol``; carries the achieved error estimate.
    """
    s, t = _check_times(s, t)
    lam = p.drift_rate
    d, err = _scaled_kernel(s, t, p.H, lam, float(rtol))
    scale = p.alpha_H * (1.0 - p.beta) ** 2 * np.exp(lam * (s + t))
    return (scale * d, scale * err) if full_output else scale * d


def r_x(s, t, p: ModelParams, rtol: float = DEFAULT_RTOL, full_output: bool = False):
    """Covariance of X, ``sigma^2 exp(-lambda(s+t)) R_{H,theta}(s,t)``."""
    s, t = _check_times(s, t)
    d, err = _scaled_kernel(s, t, p.H, p.drift_rate, float(rtol))
    scale = p.sigma2 * p.alpha_H * (1.0 - p.beta) ** 2
    return (scale * d, scale * err) if full_output else scale * d


def r_h_theta_lattice(s, t, p: ModelParams, n: int = 500):
    """Off-diagonal lattice sum for ``R_{H,theta}(s, t)`` with step ``max(s,t)/n``.

    ``alpha_H (1-beta)^2 delta^2 sum_{i != j} |u_i - v_j|^(2H-2) e^{lambda(u_i+v_j)}``
    over lattice points ``u_i = i delta <= s``, ``v_j = j delta <= t``. The
    diagonal cells, where the kernel is singular, are left out, so the sum
    underestimates the integral, badly when H is close to 1/2. Kept as a
    diagnostic for reproducing tables computed this way; use :func:`r_h_theta`
    for actual values.
    """
    s, t = _check_times(s, t)
    delta = max(s, t) / n
    u = np.arange(1, int(round(s / delta)) + 1) * delta
    v = np.arange(1, int(round(t / delta)) + 1) * delta
    gap = np.abs(u[:, None] - v[None, :])
    with np.errstate(divide="ignore"):
        kern = np.where(gap > 0.5 * delta, gap ** (2.0 * p.H - 2.0), 0.0)
    lam = p.drift_rate
    total = np.sum(kern * np.exp(lam * (u[:, None] + v[None, :])))
    return p.alpha_H * (1.0 - p.beta) ** 2 * delta**2 * total


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Covariance ``Rn`` and mean ``Vn`` of ``(X_{t_1}, ..., X_{t_n})``."""

    times: np.ndarray
    Rn: np.ndarray
    Vn: np.ndarray
    abserr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        Rn = np.atleast_2d(np.asarray(self.Rn, dtype=float))
        Vn = np.atleast_1d(np.asarray(self.Vn, dtype=float))
        n = times.size
        if Rn.shape != (n, n) or Vn.shape != (n,):
            raise ValidationError(f"inconsistent shapes: times {times.shape}, Rn {Rn.shape}, Vn {Vn.shape}")
        scale = max(float(np.nanmax(np.abs(Rn))), np.finfo(float).tiny)
        if np.nanmax(np.abs(Rn - Rn.T)) > 1e-12 * scale:
            raise ValidationError("Rn is not symmetric")
        if np.any(np.diag(Rn) < 0):
            raise ValidationError("Rn has a negative diagonal entry")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "Rn", Rn)
        object.__setattr__(self, "Vn", Vn)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def condition_number(self) -> float:
        eig = linalg.eigvalsh(self.Rn)
        return float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")

    def to_dict(self) -> dict:
        out = {
            "times": self.times.tolist(),
            "Rn": self.Rn.tolist(),
            "Vn": self.Vn.tolist(),
            "condition_number": self.condition_number,
        }
        if self.abserr is not None:
            out["abserr"] = self.abserr.tolist()
        out.update(self.meta)
        return out


def build_gaussian_spec(times, p: ModelParams, rtol: float = DEFAULT_RTOL) -> GaussianSpec:
    """``Rn(i,j) = R_X(t_i, t_j)`` and ``Vn(i) = C0^(1-beta) e^{-lambda t_i}``.

    Entries whose quadrature fails are left as NaN and listed in
    ``spec.meta["failed_entries"]``; a spec with failures cannot be used for
    densities.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("need a nonempty 1-d sequence of times")
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValidationError("times must be positive and strictly increasing")
    n = times.size
    Rn = np.empty((n, n))
    err = np.empty((n, n))
    failed = []
    for i in range(n):
        for j in range(i, n):
            try:
                Rn[i, j], err[i, j] = r_x(times[i], times[j], p, rtol, full_output=True)
            except QuadratureError as exc:
                Rn[i, j], err[i, j] = np.nan, exc.abserr if exc.abserr is not None else np.nan
                failed.append((i, j, str(exc)))
            Rn[j, i], err[j, i] = Rn[i, j], err[i, j]
    Rn = 0.5 * (Rn + Rn.T)
    Vn = p.x0 * np.exp(-p.drift_rate * times)
    meta = {"failed_entries": failed} if failed else {}
    return GaussianSpec(times, Rn, Vn, err, meta)


def _sign_patterns(n):
    return np.array(list(itertools.product((1.0, -1.0), repeat=n)))


def density_chi_n(xs, spec: GaussianSpec, beta: float, full_output: bool = False):
    """Density of ``(C_{t_1}, ..., C_{t_n})`` at ``xs``.

    ``C = |X|^(gamma+1)`` folds every coordinate of the Gaussian vector X, so
    the density sums the Gaussian density of ``(+-x_1^(1-beta), ...,
    +-x_n^(1-beta))`` over all ``2^n`` sign patterns, times the Jacobian
    ``prod (1-beta) x_i^(-beta)``. Points with a coordinate <= 0 get 0.

    Parameters
    ----------
    xs : array_like, shape (n,) or (m, n)
        Evaluation point(s).
    full_output : bool
        Also return the condition number of ``Rn``.

    Raises
    ------
    SingularCovarianceError
        If ``Rn`` cannot be factorised; carries the condition estimate.
    """
    if not 0.0 <= beta < 1.0:
        raise ValidationError(f"beta must lie in [0, 1), got {beta}")
    n = spec.n
    if n > MAX_DENSITY_DIM:
        raise ValidationError(f"density evaluation supports n <= {MAX_DENSITY_DIM}, got {n}")
    if spec.meta.get("failed_entries") or not np.all(np.isfinite(spec.Rn)):
        raise ValidationError("GaussianSpec has failed quadrature entries")
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    pts = np.atleast_2d(xs)
    if pts.shape[1] != n:
        raise ValidationError(f"points have dimension {pts.shape[1]}, GaussianSpec has {n}")
    cond = spec.condition_number
    try:
        L, _ = jittered_cholesky(spec.Rn)
    except CholeskyError as exc:
        raise SingularCovarianceError(
            f"Rn is singular (condition number {cond:.3g})", jitter=exc.jitter, condition=cond
        ) from None

    out = np.zeros(pts.shape[0])
    inside = np.all(pts > 0.0, axis=1)
    if np.any(inside):
        x = pts[inside]
        y = x ** (1.0 - beta)
        log_norm = -0.5 * n * np.log(2.0 * np.pi) - np.sum(np.log(np.diag(L)))
        log_jac = n * np.log(1.0 - beta) - beta * np.sum(np.log(x), axis=1)
        signs = _sign_patterns(n)
        log_terms = np.empty((x.shape[0], signs.shape[0]))
        for k, eps in enumerate(signs):
            z = linalg.solve_triangular(L, (eps * y - spec.Vn).T, lower=True, check_finite=False)
            log_terms[:, k] = -0.5 * np.sum(z * z, axis=0)
        top = np.max(log_terms, axis=1)
        log_sum = top + np.log(np.sum(np.exp(log_terms - top[:, None]), axis=1))
        out[inside] = np.exp(log_norm + log_jac + log_sum)
    value = float(out[0]) if single else out
    return (value, cond) if full_output else value


def _sup_variance(T, p, rtol):
    return p.sigma2 * r_h_theta(T, T, p, rtol)


def borell_deviation_bound(x, T, p: ModelParams, raw: bool = False, rtol: float = DEFAULT_RTOL) -> float:
    """Upper bound on ``P(sup_{t<=T} |X_t - X^det_t| > x)``.

    ``2 exp(-x^2 / (2 sigma^2 R_{H,theta}(T,T)))``, clamped to [0, 1] unless
    ``raw``. With ``sigma = 0`` the process is deterministic and the bound is 0.
    """
    if not x > 0 or not T > 0:
        raise ValidationError(f"need x > 0 and T > 0, got x={x}, T={T}")
    if p.sigma == 0.0:
        return 0.0
    value = 2.0 * np.exp(-(x**2) / (2.0 * _sup_variance(T, p, rtol)))
    return float(value) if raw else float(min(1.0, value))


def deviation_radius(level, T, p: ModelParams, rtol: float = DEFAULT_RTOL) -> float:
    """The ``x`` at which :func:`borell_deviation_bound` equals ``level``."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    return float(np.sqrt(2.0 * _sup_variance(T, p, rtol) * np.log(2.0 / level)))


@dataclass(frozen=True)
class BudgetQuery:
    """Level ``lam``, X-space radius ``x`` and horizon ``T`` for a sigma budget."""

    lam: float
    x: float
    T: float
    params: ModelParams

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValidationError(f"level must lie in (0, 1), got {self.lam}")
        if not self.x > 0:
            raise ValidationError(f"radius must be > 0, got {self.x}")
        if not self.T > 0:
            raise ValidationError(f"horizon must be > 0, got {self.T}")

    @classmethod
    def from_concentration_radius(cls, lam, radius, T, params) -> "BudgetQuery":
        """Convert a concentration-space radius via ``x = radius^(1-beta)``."""
        return cls(lam, float(radius) ** (1.0 - params.beta), T, params)


def sigma_budget(q: BudgetQuery, rtol: float = DEFAULT_RTOL) -> float:
    """``M = x^2 / (2 R_{H,theta}(T,T) log(2/lam))``.

    Any ``sigma^2 <= M`` keeps ``sup_{t<=T} |X_t - X^det_t| <= x`` with
    probability at least ``1 - lam``.
    """
    R = r_h_theta(q.T, q.T, q.params, rtol)
    return float(q.x**2 / (2.0 * R * np.log(2.0 / q.lam)))


def concentration_envelope(cdet: SamplePath, x: float, gamma: float) -> SamplePath:
    """Upper envelope ``2^gamma (C^det_t + x^(gamma+1))``.

    C stays in ``[0, envelope]`` on the whole grid with probability at least
    ``1 - borell_deviation_bound(x, T, p)``.
    """
    if not x > 0:
        raise ValidationError(f"radius must be > 0, got {x}")
    if not gamma >= 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    return SamplePath(cdet.grid, 2.0**gamma * (cdet.values + x ** (gamma + 1.0)))
