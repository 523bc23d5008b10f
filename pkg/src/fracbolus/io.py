"""CSV and JSON input/output.

Floats are written with ``repr`` so every value survives a write/read cycle
bit for bit, and JSON is emitted with sorted keys so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .estimation import ObservationSet
from .model import ProcessBundle

__all__ = [
    "RunConfig",
    "load_observations",
    "write_observations",
    "write_bundle",
    "write_json",
    "write_rows",
    "read_points",
    "example_data_path",
]


def example_data_path() -> Path:
    """Path of the bundled example record (30 steps, beta=0.9, upsilon=3.5, H=0.9, sigma^2=0.26)."""
    return Path(str(resources.files("fracbolus") / "data" / "example_observations.csv"))


@dataclass
class RunConfig:
    """Resolved settings of one command-line run; written as ``config.json`` next to its outputs."""

    command: str
    params: dict
    n: int = 300
    seed: int = 0
    replicates: int = 1
    generator: str = "exact"
    out: str = "out"
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {k: data[k] for k in ("command", "params", "n", "seed", "replicates", "generator", "out", "options") if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**known)

    def save(self, directory) -> Path:
        return write_json(self.to_dict(), Path(directory) / "config.json")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_rows(path, header, rows) -> Path:
    """Write a header line and rows of numbers (floats via ``repr``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_observations(obs: ObservationSet, path) -> Path:
    return write_rows(path, ["t", "c"], zip(obs.times, obs.concentrations))


def load_observations(path, beta: float = 0.0) -> ObservationSet:
    """Read a CSV with ``t`` and ``c`` columns into an :class:`ObservationSet`.

    Columns are located by header name, so the path files written by
    ``simulate`` (``t,bh,bh_theta,x,c``) load directly; other columns are
    ignored.

    Raises
    ------
    ValidationError
        For a header without ``t`` and ``c``, malformed rows (with their line
        number), non-increasing or non-uniform times, or non-positive
        concentrations.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.reader(text.splitlines())
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError(f"{path}: empty file") from None
    if "t" not in header or "c" not in header:
        raise ValidationError(f"{path}: expected a header with columns 't' and 'c', got {','.join(header)!r}")
    it, ic = header.index("t"), header.index("c")
    t, c = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t.append(float(row[it]))
            c.append(float(row[ic]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    if not t:
        raise ValidationError(f"{path}: no observations")
    try:
        return ObservationSet(np.array(t), np.array(c), beta)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_bundle(bundle: ProcessBundle, path) -> tuple[Path, Path]:
    """Write ``t,bh,bh_theta,x,c`` as CSV and the run metadata as a JSON sidecar."""
    path = Path(path)
    with np.errstate(over="ignore"):
        cols = np.column_stack([bundle.t, bundle.bh.values, bundle.bh_theta.values, bundle.x.values, bundle.c.values])
    csv_path = write_rows(path, ["t", "bh", "bh_theta", "x", "c"], cols)
    meta = {
        "params": bundle.params.to_dict(),
        "n": bundle.grid.n,
        "seed": bundle.seed,
        "stream": bundle.stream,
        "generator": bundle.generator,
        "tau0_index": bundle.tau0_index,
        "tau0": bundle.tau0,
        "csv": csv_path.name,
    }
    json_path = write_json(meta, path.with_suffix(".json"))
    return csv_path, json_path


def read_points(path, dim: int) -> np.ndarray:
    """Read density query points: one row per point, ``dim`` columns, optional header."""
    rows = []
    with Path(path).open() as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                if lineno == 1:
                    continue
                raise ValidationError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            if len(vals) != dim:
                raise ValidationError(f"{path}:{lineno}: expected {dim} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no query points")
    return np.array(rows)
