"""Monte Carlo harnesses shared by the command line, the demos and the tests.

Every study takes a master ``seed``; replicate ``r`` draws its noise from
stream ``r`` of that seed, so batches are reproducible and any single
replicate can be regenerated alone with :func:`simulate_concentration`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .estimation import discretization_gap, hurst_hat, sigma_hat, upsilon_from_moment
from .fbm import TimeGrid, check_hurst, exact_factor, standard_normals
from .model import ModelParams, deterministic_solution, fou_paths, theta_weight

__all__ = [
    "SweepRow",
    "delta_schedule",
    "summarize",
    "estimate_path",
    "estimator_sweep",
    "deviation_sup",
    "exceedance_frequency",
    "time_average_moments",
    "discretization_gap_study",
    "loglog_slope",
    "fbm_functional_samples",
    "theta_integral_terminal",
]

ESTIMATORS = ("H_hat", "sigma2_hat", "upsilon_star")


def delta_schedule(n: int) -> float:
    """Sampling step ``delta_n = n^(-1/2)``, so that ``delta_n -> 0`` and ``n delta_n -> inf``."""
    return float(n) ** -0.5


@dataclass
class SweepRow:
    n: int
    median: float
    q25: float
    q75: float
    truth: float
    mae: float
    failed: int

    def as_tuple(self):
        return (self.n, self.median, self.q25, self.q75, self.truth, self.mae, self.failed)


def summarize(n: int, values, truth: float) -> SweepRow:
    """Quantiles of the finite estimates; failures count as infinite error in ``mae``."""
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values)
    err = np.where(ok, np.abs(values - truth), np.inf)
    if ok.any():
        q25, med, q75 = np.quantile(values[ok], [0.25, 0.5, 0.75])
    else:
        q25 = med = q75 = float("nan")
    return SweepRow(int(n), float(med), float(q25), float(q75), float(truth), float(np.median(err)), int((~ok).sum()))


def estimate_path(x, delta: float, beta: float) -> dict:
    """``H_hat``, ``sigma2_hat`` and ``upsilon_star`` of one sampled path; NaN where undefined."""
    out = dict.fromkeys(ESTIMATORS, float("nan"))
    try:
        h = hurst_hat(x).estimate
    except ValueError:
        return out
    out["H_hat"] = h
    try:
        s = sigma_hat(x, h, delta, beta).estimate
    except ValueError:
        return out
    out["sigma2_hat"] = s * s
    ms = float(np.mean(np.asarray(x)[:-1] ** 2))
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            u = upsilon_from_moment(h, s, beta, ms)
        out["upsilon_star"] = u if np.isfinite(u) else float("nan")
    except ValueError:
        pass
    return out


def estimator_sweep(p: ModelParams, n_values, replicates: int, seed: int, generator: str = "exact"):
    """Estimator quantiles against the number of observations.

    For each ``n`` the horizon is ``T = n delta_n`` with ``delta_n = n^(-1/2)``
    and ``replicates`` paths are simulated from streams ``0..replicates-1``.

    Returns
    -------
    (table, raw) : tuple
        ``table[name]`` is a list of :class:`SweepRow`; ``raw[name][n]`` holds
        the per-replicate estimates.
    """
    if replicates < 1:
        raise ValidationError("need at least one replicate")
    truths = {"H_hat": p.H, "sigma2_hat": p.sigma2, "upsilon_star": p.upsilon}
    table = {k: [] for k in ESTIMATORS}
    raw = {k: {} for k in ESTIMATORS}
    for n in n_values:
        n = int(n)
        delta = delta_schedule(n)
        q = p.replace(T=n * delta)
        X = fou_paths(q, n, seed, range(replicates), generator)
        est = [estimate_path(row, delta, p.beta) for row in X]
        for k in ESTIMATORS:
            vals = np.array([e[k] for e in est])
            raw[k][n] = vals
            table[k].append(summarize(n, vals, truths[k]))
    return table, raw


def fbm_functional_samples(H, T, n, seed, replicates, coef, batch: int = 2000) -> np.ndarray:
    """Samples of ``sum_k coef_k B^H_{t_k}`` (k = 1..n) under the exact generator.

    Equal to applying ``coef`` to full paths from :func:`simulate_fbm_exact`,
    but costs O(n) per replicate instead of O(n^2): the functional is
    ``(L^T coef) . xi`` for the Cholesky factor ``L``.
    """
    check_hurst(H, model=False)
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (n,):
        raise ValidationError(f"need {n} coefficients, got {coef.shape}")
    w = exact_factor(H, T, n).T @ coef
    out = np.empty(replicates)
    for start in range(0, replicates, batch):
        stop = min(start + batch, replicates)
        xi = np.stack([standard_normals(seed, n, r) for r in range(start, stop)])
        out[start:stop] = xi @ w
    return out


def theta_integral_terminal(p: ModelParams, n: int, seed: int, replicates: int) -> np.ndarray:
    """Samples of the left-point sum ``B^H_T(theta) = sum_j theta(t_j) (B_{t_{j+1}} - B_{t_j})``.

    Summation by parts turns the sum into ``sum_k c_k B_{t_k}`` with
    ``c_k = theta(t_{k-1}) - theta(t_k)`` for k < n and ``c_n = theta(t_{n-1})``.
    """
    th = theta_weight(TimeGrid(p.T, n).t[:-1], p)
    coef = np.empty(n)
    coef[:-1] = th[:-1] - th[1:]
    coef[-1] = th[-1]
    return fbm_functional_samples(p.H, p.T, n, seed, replicates, coef)


def deviation_sup(p: ModelParams, n: int, seed: int, replicates: int, generator: str = "exact") -> np.ndarray:
    """``max_i |X_{t_i} - X^det_{t_i}|`` for each replicate."""
    X = fou_paths(p, n, seed, range(replicates), generator)
    xdet, _ = deterministic_solution(p, TimeGrid(p.T, n))
    return np.max(np.abs(X - xdet.values[None, :]), axis=1)


def exceedance_frequency(p: ModelParams, xs, n: int, seed: int, replicates: int, generator: str = "exact") -> dict:
    """Empirical ``P(sup |X - X^det| > x)`` with its binomial standard error, per x."""
    sup = deviation_sup(p, n, seed, replicates, generator)
    out = {}
    for x in xs:
        f = float(np.mean(sup > x))
        out[float(x)] = (f, math.sqrt(max(f * (1.0 - f), 1.0 / replicates) / replicates))
    return out


def time_average_moments(p: ModelParams, n: int, seed: int, replicates: int, orders=(2, 3), generator: str = "exact", batch: int = 10):
    """Trapezoid time averages ``(1/T) int_0^T X_t^k dt``, one row per replicate.

    Paths are drawn in batches of ``batch`` to bound memory for long horizons.
    """
    out = np.empty((replicates, len(orders)))
    for start in range(0, replicates, batch):
        streams = range(start, min(start + batch, replicates))
        X = fou_paths(p, n, seed, streams, generator)
        for j, k in enumerate(orders):
            out[start:start + len(streams), j] = np.trapezoid(X**k, dx=p.T / n, axis=1) / p.T
    return out


def discretization_gap_study(p: ModelParams, n_values, seed: int, replicates: int, refine: int = 1, generator: str = "exact"):
    """Mean gap between the trapezoid time average and the discrete mean square.

    Uses ``delta_n = n^(-1/2)`` and ``T = n delta_n``. With ``refine > 1`` the
    paths are simulated ``refine`` times finer than the observation grid, so
    the time average approximates the continuous integral.

    Returns
    -------
    list of (n, delta, mean_gap, std_err)
    """
    rows = []
    for n in n_values:
        n = int(n)
        delta = delta_schedule(n)
        q = p.replace(T=n * delta)
        # One call per n: the exact factor for large grids is not cached.
        X = fou_paths(q, n * refine, seed, range(replicates), generator)
        gaps = np.array([discretization_gap(row, delta, refine) for row in X])
        del X
        rows.append((n, delta, float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")))
    return rows


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` on ``log x``."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    if not (np.all(np.isfinite(lx)) and np.all(np.isfinite(ly))):
        raise NumericalError("log-log slope needs positive finite values")
    return float(np.polyfit(lx, ly, 1)[0])
