"""Data-driven choice of (H, sigma^2, beta) from a handful of observed concentrations.

The loop is

1. fix ``H`` close to 1 (default 0.9);
2. fix ``beta``;
3. measure the largest deviation ``x`` of the transformed observations
   ``x_i = c_i^(1-beta)`` from the deterministic curve and compute the sigma
   budget ``M(lambda, x, H)``;
4. recommend ``sigma^2 in (0, M]`` and decide whether ``beta`` should move.

Step 4 is a visual judgement in its original form. Here it is replaced by two
computable surrogates, both configurable:

* local regularity: the Hurst estimate of the observations must reach
  ``local_hurst_min`` (default 0.75). Failing it only adds a warning.
* global perturbation: the deviation ratio ``x / C0^(1-beta)`` must lie in
  ``ratio_band`` (default [0.05, 0.5]). Above the band the data are more
  perturbed than the model allows at this ``beta``, so ``beta`` goes up;
  below it, ``beta`` goes down. Steps are ``beta_step`` and ``beta`` stays in
  ``(0, beta_max]``.

The ratio decreases as ``beta`` grows (``c^(1-beta)`` flattens towards 1), so
the adjustment moves it back into the band.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytics import BudgetQuery, borell_deviation_bound, r_h_theta, r_h_theta_lattice, sigma_budget
from .errors import DegenerateInputError, QuadratureError, ValidationError
from .estimation import ObservationSet, hurst_hat, regression_upsilon, to_fou_observations
from .model import ModelParams

__all__ = [
    "ProcedureConfig",
    "BudgetTable",
    "ProcedureIteration",
    "ProcedureReport",
    "budget_table",
    "observed_deviation_radius",
    "run_procedure",
]

SURROGATE_NOTE = (
    "local and global regularity are judged by documented surrogates: "
    "the Hurst estimate of the observations and the deviation ratio x / C0^(1-beta)"
)


@dataclass(frozen=True)
class ProcedureConfig:
    """Settings of the parameter-choice loop.

    ``radius`` fixes the concentration-space radius used for the recommended
    budget; when ``None`` the observed deviation is used. ``upsilon``, ``C0``
    and ``T`` default to values derived from the observations (regression,
    first observation at t = 0 or the regression intercept, last time).
    """

    H_init: float = 0.9
    beta_init: float = 0.9
    lam: float = 0.01
    radius_grid: tuple = (0.1, 0.2, 0.4)
    lambda_grid: tuple = (0.01, 0.05, 0.10)
    max_iterations: int = 5
    radius: float | None = None
    upsilon: float | None = None
    C0: float | None = None
    T: float | None = None
    local_hurst_min: float = 0.75
    ratio_band: tuple = (0.05, 0.5)
    beta_step: float = 0.1
    beta_max: float = 0.95
    covariance: str = "quadrature"

    def __post_init__(self):
        object.__setattr__(self, "radius_grid", tuple(float(r) for r in self.radius_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "ratio_band", tuple(float(v) for v in self.ratio_band))
        if not 0.5 < self.H_init < 1.0:
            raise ValidationError(f"H_init must lie in (1/2, 1), got {self.H_init}")
        if not 0.0 < self.beta_init <= self.beta_max < 1.0:
            raise ValidationError("need 0 < beta_init <= beta_max < 1")
        if not 0.0 < self.lam < 1.0 or not all(0.0 < v < 1.0 for v in self.lambda_grid):
            raise ValidationError("levels must lie in (0, 1)")
        if not self.radius_grid or any(r <= 0 for r in self.radius_grid) or not self.lambda_grid:
            raise ValidationError("radius and level grids must be nonempty with positive radii")
        if self.radius is not None and not self.radius > 0:
            raise ValidationError(f"radius must be > 0, got {self.radius}")
        if int(self.max_iterations) < 1:
            raise ValidationError("max_iterations must be >= 1")
        lo, hi = self.ratio_band
        if not 0.0 <= lo < hi:
            raise ValidationError(f"ratio band must satisfy 0 <= low < high, got {self.ratio_band}")
        if not self.beta_step > 0:
            raise ValidationError("beta_step must be > 0")
        if self.covariance not in ("quadrature", "lattice"):
            raise ValidationError(f"covariance must be 'quadrature' or 'lattice', got {self.covariance!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BudgetTable:
    """``M(lambda, radius^(1-beta), H)`` on a radius x level grid."""

    H: float
    beta: float
    upsilon: float
    T: float
    radii: tuple
    lambdas: tuple
    M: np.ndarray
    R_TT: float
    covariance: str = "quadrature"
    failed: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        """X-space radii ``radius^(1-beta)``."""
        return np.asarray(self.radii) ** (1.0 - self.beta)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "beta": self.beta,
            "upsilon": self.upsilon,
            "T": self.T,
            "radii": list(self.radii),
            "x": self.x.tolist(),
            "lambdas": list(self.lambdas),
            "M": [[None if np.isnan(v) else float(v) for v in row] for row in self.M],
            "R_TT": self.R_TT,
            "covariance": self.covariance,
            "failed": list(self.failed),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("radius,x," + ",".join(f"M_lambda_{v:g}" for v in self.lambdas) + "\n")
        for r, x, row in zip(self.radii, self.x, self.M):
            buf.write(f"{r!r},{x!r}," + ",".join("nan" if np.isnan(v) else repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def format_text(self, digits: int = 2) -> str:
        """Rows by radius, columns by level, rounded like a printed table."""
        head = f"M(lambda, x, H={self.H:g}), beta={self.beta:g}"
        cols = "radius \\ lambda " + " ".join(f"{v:>6g}" for v in self.lambdas)
        lines = [head, cols]
        for r, row in zip(self.radii, self.M):
            cells = " ".join(f"{v:6.{digits}f}" if np.isfinite(v) else "  fail" for v in row)
            lines.append(f"{r:>15g} {cells}")
        return "\n".join(lines)


def _covariance_TT(p: ModelParams, method: str) -> float:
    if method == "lattice":
        return float(r_h_theta_lattice(p.T, p.T, p))
    return float(r_h_theta(p.T, p.T, p))


def budget_table(H: float, p: ModelParams, cfg: ProcedureConfig) -> BudgetTable:
    """Sigma budgets over ``cfg.radius_grid`` x ``cfg.lambda_grid`` for Hurst index ``H``.

    Radii are concentration-space values converted by ``x = radius^(1-beta)``.
    ``p`` supplies ``beta``, ``upsilon`` and ``T``. One covariance value
    ``R_{H,theta}(T, T)`` serves the whole table; if it cannot be computed
    every cell is NaN and listed in ``failed``.
    """
    p = p.replace(H=float(H))
    radii, lambdas = cfg.radius_grid, cfg.lambda_grid
    M = np.full((len(radii), len(lambdas)), np.nan)
    failed = []
    try:
        R = _covariance_TT(p, cfg.covariance)
    except QuadratureError as exc:
        R = float("nan")
        failed = [(i, j, str(exc)) for i in range(len(radii)) for j in range(len(lambdas))]
    else:
        for i, r in enumerate(radii):
            x = r ** (1.0 - p.beta)
            for j, lam in enumerate(lambdas):
                M[i, j] = x**2 / (2.0 * R * math.log(2.0 / lam))
    return BudgetTable(p.H, p.beta, p.upsilon, p.T, radii, lambdas, M, R, cfg.covariance, failed)


def observed_deviation_radius(obs: ObservationSet, p: ModelParams) -> float:
    """``max_i |x_i - C0^(1-beta) exp(-upsilon (1-beta) t_i)|`` with ``x_i = c_i^(1-beta)``.

    ``beta`` is taken from ``p``; the observations' own ``beta`` is ignored.
    """
    if obs.times.size == 0:
        raise ValidationError("empty observation set")
    x = to_fou_observations(obs.with_beta(p.beta))
    xdet = p.x0 * np.exp(-p.drift_rate * obs.times)
    return float(np.max(np.abs(x - xdet)))


@dataclass
class ProcedureIteration:
    index: int
    H: float
    beta: float
    x_observed: float
    query: dict | None
    M: float
    sigma2_interval: tuple
    table: BudgetTable
    diagnostics: dict
    action: str

    def to_dict(self) -> dict:
        out = asdict(self)
        out["table"] = self.table.to_dict()
        out["sigma2_interval"] = list(self.sigma2_interval)
        return out


@dataclass
class ProcedureReport:
    iterations: list
    recommendation: dict
    warnings: list
    inputs: dict

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs,
            "iterations": [it.to_dict() for it in self.iterations],
            "recommendation": self.recommendation,
            "warnings": list(self.warnings),
            "surrogates": SURROGATE_NOTE,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def format_text(self) -> str:
        lines = []
        for it in self.iterations:
            d = it.diagnostics
            lines.append(
                f"iteration {it.index}: H={it.H:g} beta={it.beta:g} x_obs={it.x_observed:.4g} "
                f"ratio={d['deviation_ratio']:.3g} H_hat={_fmt(d['H_hat'])} M={it.M:.4g} -> {it.action}"
            )
            lines.append(it.table.format_text())
        rec = self.recommendation
        lo, hi = rec["sigma2_interval"]
        lines.append(f"recommendation: H={rec['H']:g} beta={rec['beta']:g} sigma^2 in ({lo:g}, {hi:.4g}]")
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def _fmt(v):
    return "n/a" if v is None else f"{v:.3g}"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _resolve_inputs(obs: ObservationSet, cfg: ProcedureConfig, beta: float, warnings: list) -> dict:
    """Fill in ``upsilon``, ``C0`` and ``T`` that the config leaves open."""
    fit = None
    if cfg.upsilon is None or (cfg.C0 is None and obs.times[0] != 0.0):
        try:
            fit = regression_upsilon(obs.with_beta(beta))
        except DegenerateInputError as exc:
            raise ValidationError(f"upsilon is not configured and cannot be regressed: {exc}") from None
    upsilon = cfg.upsilon if cfg.upsilon is not None else fit.estimate
    if upsilon <= 0:
        raise ValidationError(f"regressed upsilon {upsilon:.4g} is not positive; supply upsilon")
    if cfg.C0 is not None:
        C0 = cfg.C0
    elif obs.times[0] == 0.0:
        C0 = float(obs.concentrations[0])
    else:
        C0 = fit.stats["C0_fit"]
        warnings.append("C0 taken from the regression intercept (no observation at t = 0)")
    T = cfg.T if cfg.T is not None else float(obs.times[-1])
    if not T > 0:
        raise ValidationError("horizon T must be > 0; supply T for observations ending at t = 0")
    return {
        "upsilon": float(upsilon),
        "upsilon_source": "config" if cfg.upsilon is not None else "regression",
        "C0": float(C0),
        "T": float(T),
    }


def _local_diagnostic(x, cfg):
    if x.size < 6:
        return None, None
    try:
        h = hurst_hat(x).estimate
    except DegenerateInputError:
        return None, None
    return h, bool(h >= cfg.local_hurst_min)


def run_procedure(obs: ObservationSet, cfg: ProcedureConfig | None = None) -> ProcedureReport:
    """Run the parameter-choice loop on ``obs`` and report every iteration.

    Never raises for a non-converging loop; the last iterate is recommended and
    a warning is attached. Observations on the deterministic curve give a
    collapsed interval ``(0, 0]`` and a ``deterministic-fit`` warning.
    """
    cfg = cfg or ProcedureConfig()
    warnings: list = []
    H, beta = float(cfg.H_init), float(cfg.beta_init)
    inputs = _resolve_inputs(obs, cfg, beta, warnings)
    iterations: list = []
    visited = set()
    lo_band, hi_band = cfg.ratio_band
    converged = False

    for index in range(int(cfg.max_iterations)):
        visited.add(round(beta, 12))
        p = ModelParams(upsilon=inputs["upsilon"], sigma=0.0, beta=beta, H=H, C0=inputs["C0"], T=inputs["T"])
        x_obs = observed_deviation_radius(obs, p)
        ratio = x_obs / p.x0
        x_seq = to_fou_observations(obs.with_beta(beta))
        h_hat, local_ok = _local_diagnostic(x_seq, cfg)
        table = budget_table(H, p, cfg)

        x_used = cfg.radius ** (1.0 - beta) if cfg.radius is not None else x_obs
        deterministic = x_used <= 64.0 * np.finfo(float).eps * max(p.x0, 1.0)
        if deterministic:
            query, M = None, 0.0
        else:
            q = BudgetQuery(cfg.lam, x_used, p.T, p)
            query = {"lam": q.lam, "x": q.x, "T": q.T, "params": p.to_dict()}
            M = sigma_budget(q) if cfg.covariance == "quadrature" else (
                x_used**2 / (2.0 * table.R_TT * math.log(2.0 / cfg.lam))
            )

        if deterministic:
            action = "stop"
        elif ratio > hi_band:
            action = "increase_beta"
        elif ratio < lo_band:
            action = "decrease_beta"
        else:
            action = "accept"

        diagnostics = {
            "H_hat": h_hat,
            "local_regular": local_ok,
            "local_hurst_min": cfg.local_hurst_min,
            "deviation_ratio": ratio,
            "ratio_band": list(cfg.ratio_band),
            "globally_moderate": bool(lo_band <= ratio <= hi_band),
            "radius_source": "config" if cfg.radius is not None else "observed",
            "concentration_radius": x_used ** (1.0 / (1.0 - beta)),
        }
        if query is not None and cfg.covariance == "quadrature":
            diagnostics["bound_at_M"] = borell_deviation_bound(x_used, p.T, p.replace(sigma=math.sqrt(M)), raw=True)
        iterations.append(ProcedureIteration(index, H, beta, x_obs, query, M, (0.0, M), table, diagnostics, action))

        if action in ("stop", "accept"):
            converged = True
            break
        step = cfg.beta_step if action == "increase_beta" else -cfg.beta_step
        new_beta = round(min(cfg.beta_max, max(beta + step, 0.0)), 12)
        if new_beta <= 0.0:
            new_beta = beta / 2.0
        if round(new_beta, 12) in visited or new_beta == beta:
            warnings.append(f"beta adjustment cycles or hits its bound at beta={beta:g}; keeping the last iterate")
            break
        beta = new_beta

    last = iterations[-1]
    if last.action == "stop":
        warnings.append("deterministic-fit: observations lie on the deterministic curve, sigma^2 interval collapses to 0")
    elif not converged:
        warnings.append(f"no beta in the visited range met the ratio band {list(cfg.ratio_band)}; last iterate kept")
    if last.diagnostics["local_regular"] is False:
        warnings.append(
            f"H_hat={last.diagnostics['H_hat']:.3g} is below {cfg.local_hurst_min:g}: "
            "the observations look rough at the sampling scale"
        )
    elif last.diagnostics["local_regular"] is None:
        warnings.append("local regularity not assessed (fewer than 6 observations or affine data)")

    recommendation = {
        "H": last.H,
        "beta": last.beta,
        "lam": cfg.lam,
        "x": last.query["x"] if last.query else 0.0,
        "sigma2_interval": [0.0, last.M],
        "beta_direction": [it.action for it in iterations if it.action.endswith("_beta")],
    }
    return ProcedureReport(iterations, recommendation, warnings, {**inputs, "config": cfg.to_dict(), "n_obs": int(obs.times.size)})
