"""Command line: ``fracbolus {simulate,estimate,sweep,bound,procedure,density}``.

Each run writes its outputs and the resolved ``config.json`` into ``--out``.
``--config FILE`` loads a previously written (or hand-made) config whose
values override the flags, so ``fracbolus <cmd> --config out/config.json``
reproduces a run.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from scipy import integrate

from . import analytics, io
from .errors import NumericalError, ValidationError
from .estimation import hurst_hat, regression_upsilon, sigma_hat, to_fou_observations, upsilon_hat_known, upsilon_hat_unknown
from .fbm import TimeGrid
from .model import ModelParams, deterministic_solution, simulate_concentration
from .procedure import ProcedureConfig, budget_table, run_procedure
from .studies import estimator_sweep

__all__ = ["main", "build_parser", "resolve_config", "COMMANDS"]

MODEL_FIELDS = [f.name for f in fields(ModelParams)]


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model parameters (defaults: upsilon=1.5, sigma^2=0.26, beta=0, H=0.9, C0=1, T=3)")
    g.add_argument("--upsilon", type=float, help="elimination constant (1/h)")
    g.add_argument("--sigma", type=float, help="volatility sigma")
    g.add_argument("--sigma2", type=float, help="volatility as sigma^2 (alternative to --sigma)")
    g.add_argument("--beta", type=float, help="exponent beta in [0, 1)")
    g.add_argument("--H", type=float, help="Hurst index in (1/2, 1)")
    g.add_argument("--C0", type=float, help="initial concentration")
    g.add_argument("--T", type=float, help="horizon (h)")
    r = common.add_argument_group("run")
    r.add_argument("--n", type=int, default=300, help="grid steps (default 300)")
    r.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    r.add_argument("--replicates", type=int, default=1, help="replicate count (default 1)")
    r.add_argument("--generator", choices=("volterra", "exact"), default="exact", help="fBm generator (default exact)")
    r.add_argument("--out", default="out", help="output directory (default ./out)")
    r.add_argument("--config", help="JSON config overriding the flags")

    parser = argparse.ArgumentParser(prog="fracbolus", description="Fractional one-compartment IV bolus model")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="simulate concentration paths")

    p = sub.add_parser("estimate", parents=[common], help="estimate H, sigma, upsilon from t,c files")
    p.add_argument("--data", nargs="+", help="observation CSV files with header t,c")
    p.add_argument("--known-H", type=float, help="known H, enables the known-parameter upsilon estimator")
    p.add_argument("--known-sigma", type=float, help="known sigma, enables the known-parameter upsilon estimator")

    p = sub.add_parser("sweep", parents=[common], help="estimator convergence study against n")
    p.add_argument("--n-values", type=_ints, default=[10, 20, 50, 100, 200, 500, 1000], help="comma-separated sample sizes")

    p = sub.add_parser("bound", parents=[common], help="sigma budget tables and envelope curves")
    p.add_argument("--H-values", type=_floats, default=[0.9, 0.6], help="Hurst indices (default 0.9,0.6)")
    p.add_argument("--radii", type=_floats, default=[0.1, 0.2, 0.4], help="concentration-space radii")
    p.add_argument("--levels", type=_floats, default=[0.01, 0.05, 0.10], help="levels lambda")
    p.add_argument("--covariance", choices=("quadrature", "lattice"), default="quadrature")

    p = sub.add_parser("procedure", parents=[common], help="parameter-choice procedure on observations")
    p.add_argument("--data", help="observation CSV (default: bundled example)")
    p.add_argument("--H-init", type=float, default=0.9)
    p.add_argument("--beta-init", type=float, default=0.9)
    p.add_argument("--lam", type=float, default=0.01)
    p.add_argument("--radius", type=float, help="fixed concentration-space radius (default: observed)")
    p.add_argument("--max-iterations", type=int, default=5)

    p = sub.add_parser("density", parents=[common], help="density of (C_t1, ..., C_tn)")
    p.add_argument("--times", type=_floats, default=[1.0], help="observation times (default 1.0)")
    p.add_argument("--points", help="CSV of query points, one column per time")
    p.add_argument("--grid-num", type=int, default=401, help="grid points per axis when --points is absent")
    return parser


def _resolve_params(args) -> tuple[dict, dict]:
    """Full parameter dict plus the subset given explicitly on the command line."""
    given = {k: getattr(args, k) for k in MODEL_FIELDS if getattr(args, k, None) is not None}
    if getattr(args, "sigma2", None) is not None:
        if "sigma" in given:
            raise ValidationError("give either --sigma or --sigma2, not both")
        if args.sigma2 < 0:
            raise ValidationError("sigma^2 must be >= 0")
        given["sigma"] = math.sqrt(args.sigma2)
    return ModelParams(**given).to_dict(), given


def resolve_config(args) -> io.RunConfig:
    params, given = _resolve_params(args)
    options: dict = {}
    cmd = args.command
    if cmd == "estimate":
        options = {"data": args.data, "known_H": args.known_H, "known_sigma": args.known_sigma}
    elif cmd == "sweep":
        options = {"n_values": args.n_values}
    elif cmd == "bound":
        options = {"H_values": args.H_values, "radii": args.radii, "levels": args.levels, "covariance": args.covariance}
    elif cmd == "procedure":
        options = {
            "data": args.data or str(io.example_data_path()),
            "procedure": ProcedureConfig(
                H_init=args.H_init,
                beta_init=args.beta_init,
                lam=args.lam,
                radius=args.radius,
                max_iterations=args.max_iterations,
                upsilon=given.get("upsilon"),
                C0=given.get("C0"),
                T=given.get("T"),
            ).to_dict(),
        }
    elif cmd == "density":
        options = {"times": args.times, "points": args.points, "grid_num": args.grid_num}
    cfg = io.RunConfig(cmd, params, args.n, args.seed, args.replicates, args.generator, args.out, options)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if loaded.get("command", cmd) != cmd:
            raise ValidationError(f"config is for {loaded['command']!r}, not {cmd!r}")
        merged = cfg.to_dict()
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        cfg = io.RunConfig.from_dict(merged)
    ModelParams(**cfg.params)
    if cfg.replicates < 1:
        raise ValidationError("--replicates must be >= 1")
    return cfg


def cmd_simulate(cfg: io.RunConfig) -> list:
    p = ModelParams(**cfg.params)
    out = Path(cfg.out)
    written = []
    for r in range(cfg.replicates):
        bundle = simulate_concentration(p, cfg.n, cfg.seed, cfg.generator, stream=r)
        written.extend(io.write_bundle(bundle, out / f"path_r{r:04d}.csv"))
    return written


def _try(fn, *a, **kw):
    try:
        return fn(*a, **kw).to_dict()
    except (ValidationError, NumericalError) as exc:
        return {"error": type(exc).__name__, "message": str(exc)}


def estimate_observations(obs, known_H=None, known_sigma=None) -> dict:
    """All applicable estimators on one record; a failing estimator does not stop the others."""
    x = to_fou_observations(obs)
    delta = obs.delta
    out = {"n": obs.n, "delta": delta, "beta": obs.beta}
    out["H_hat"] = _try(hurst_hat, x)
    h = out["H_hat"].get("estimate")
    if h is None:
        out["sigma_hat"] = {"error": "skipped", "message": "needs H_hat"}
    else:
        out["sigma_hat"] = _try(sigma_hat, x, h, delta, obs.beta)
    out["upsilon_star"] = _try(upsilon_hat_unknown, x, delta, obs.beta)
    out["upsilon_regression"] = _try(regression_upsilon, obs)
    if known_H is not None and known_sigma is not None:
        out["upsilon_known"] = _try(upsilon_hat_known, x, known_H, known_sigma, obs.beta, times=obs.times)
    return out


def cmd_estimate(cfg: io.RunConfig) -> list:
    paths = cfg.options.get("data") or []
    if not paths:
        raise ValidationError("estimate needs --data FILE [FILE ...]")
    beta = cfg.params["beta"]
    results = {}
    for path in paths:
        obs = io.load_observations(path, beta)
        results[str(path)] = estimate_observations(obs, cfg.options.get("known_H"), cfg.options.get("known_sigma"))
    doc = {"results": results}
    if len(paths) > 1:
        summary = {}
        for key in ("H_hat", "sigma_hat", "upsilon_star", "upsilon_regression", "upsilon_known"):
            vals = [r[key]["estimate"] for r in results.values() if key in r and "estimate" in r[key]]
            if vals:
                summary[key] = {"median": float(np.median(vals)), "count": len(vals)}
        doc["summary"] = summary
    return [io.write_json(doc, Path(cfg.out) / "estimates.json")]


def cmd_sweep(cfg: io.RunConfig) -> list:
    p = ModelParams(**cfg.params)
    table, raw = estimator_sweep(p, cfg.options["n_values"], cfg.replicates, cfg.seed, cfg.generator)
    out = Path(cfg.out)
    written = []
    for name, rows in table.items():
        written.append(io.write_rows(out / f"sweep_{name}.csv", ["n", "median", "q25", "q75", "truth", "mae", "failed"], [r.as_tuple() for r in rows]))
        flat = [(n, r, v) for n, vals in raw[name].items() for r, v in enumerate(vals)]
        written.append(io.write_rows(out / f"raw_{name}.csv", ["n", "replicate", "estimate"], flat))
    return written


def cmd_bound(cfg: io.RunConfig) -> list:
    p = ModelParams(**cfg.params)
    o = cfg.options
    pc = ProcedureConfig(radius_grid=o["radii"], lambda_grid=o["levels"], covariance=o["covariance"])
    out = Path(cfg.out)
    written = []
    texts = []
    for H in o["H_values"]:
        table = budget_table(H, p, pc)
        stem = f"budget_H{H:g}"
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(table.to_csv())
        written.append(out / f"{stem}.csv")
        written.append(io.write_json(table.to_dict(), out / f"{stem}.json"))
        texts.append(table.format_text())
    (out / "budget_tables.txt").write_text("\n\n".join(texts) + "\n")
    written.append(out / "budget_tables.txt")

    grid = TimeGrid(p.T, cfg.n)
    _, cdet = deterministic_solution(p, grid)
    cols = [grid.t, cdet.values]
    for radius in o["radii"]:
        x = radius ** (1.0 - p.beta)
        cols.append(analytics.concentration_envelope(cdet, x, p.gamma).values)
    header = ["t", "c_det"] + [f"envelope_radius_{r:g}" for r in o["radii"]]
    written.append(io.write_rows(out / "envelope.csv", header, np.column_stack(cols)))
    return written


def cmd_procedure(cfg: io.RunConfig) -> list:
    pc = ProcedureConfig(**cfg.options["procedure"])
    obs = io.load_observations(cfg.options["data"], pc.beta_init)
    report = run_procedure(obs, pc)
    out = Path(cfg.out)
    written = [io.write_json(report.to_dict(), out / "procedure.json")]
    (out / "procedure.txt").write_text(report.format_text() + "\n")
    written.append(out / "procedure.txt")
    return written


def _density_grid(spec, beta, num):
    """Concentration grid and cell volumes covering 10 standard deviations of each X coordinate.

    The grid is uniform in X-space, ``c = y^(gamma+1)`` at cell midpoints
    ``y``, so the midpoint rule stays accurate where the density has its
    ``c^(-beta)`` singularity at 0.
    """
    gamma = beta / (1.0 - beta)
    hi = np.abs(spec.Vn) + 10.0 * np.sqrt(np.diag(spec.Rn))
    axes, widths = [], []
    for h in hi:
        y = (np.arange(num) + 0.5) * h / num
        axes.append(y ** (gamma + 1.0))
        widths.append((gamma + 1.0) * y**gamma * h / num)
    return axes, widths


def cmd_density(cfg: io.RunConfig) -> list:
    p = ModelParams(**cfg.params)
    o = cfg.options
    spec = analytics.build_gaussian_spec(o["times"], p)
    n = spec.n
    out = Path(cfg.out)
    summary = {"n": n, "beta": p.beta, "condition_number": spec.condition_number}
    if o.get("points"):
        pts = io.read_points(o["points"], n)
    elif n <= 2:
        axes, widths = _density_grid(spec, p.beta, int(o["grid_num"]))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
    else:
        raise ValidationError("density on more than two times needs --points")
    dens = analytics.density_chi_n(pts, spec, p.beta)
    if not o.get("points"):
        if n == 1:
            hi = (np.abs(spec.Vn[0]) + 10.0 * np.sqrt(spec.Rn[0, 0])) ** (p.gamma + 1.0)
            val, err = integrate.quad(lambda c: analytics.density_chi_n(np.array([c]), spec, p.beta), 0.0, hi, limit=200)
            summary["integral"], summary["integral_abserr"] = val, err
        else:
            cell = np.outer(widths[0], widths[1]).ravel()
            summary["integral"] = float(np.sum(dens * cell))
            summary["integral_method"] = "midpoint rule on the output grid, uniform in X-space"
    header = [f"c{i + 1}" for i in range(n)] + ["density"]
    written = [io.write_rows(out / "density.csv", header, np.column_stack([pts, dens]))]
    written.append(io.write_json(spec.to_dict(), out / "gaussian_spec.json"))
    written.append(io.write_json(summary, out / "density_summary.json"))
    return written


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "bound": cmd_bound,
    "procedure": cmd_procedure,
    "density": cmd_density,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        written = COMMANDS[cfg.command](cfg)
        written.append(cfg.save(cfg.out))
    except ValidationError as exc:
        print(f"fracbolus: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"fracbolus: numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
