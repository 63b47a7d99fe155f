"""Report rows, CSV tables and heatmap files.

The report CSV has a fixed column order (``REPORT_COLUMNS``) and contains no
timing information, so two runs of the same configuration produce identical
bytes.  Floats are written with ``repr``.
"""

from __future__ import annotations

import csv
import io as _io
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import MlpParams, mlp_forward
from .errors import ContractError, ShapeError
from .oracles import GridSpec
from .training import TrainedModel

REPORT_COLUMNS = (
    "case",
    "priors",
    "seeds",
    "baseline_mse",
    "baseline_std",
    "weight_decay_mse",
    "weight_decay_std",
    "best_decay",
    "tuned_mse",
    "tuned_std",
    "baseline_energy",
    "baseline_energy_std",
    "tuned_energy",
    "tuned_energy_std",
    "lambda_opt",
    "theta_opt",
    "flags",
)
# metric field -> its std column
_METRICS = {
    "baseline_mse": "baseline_std",
    "weight_decay_mse": "weight_decay_std",
    "tuned_mse": "tuned_std",
    "baseline_energy": "baseline_energy_std",
    "tuned_energy": "tuned_energy_std",
}


@dataclass
class ReportRow:
    """One case.  Metric fields hold a mean; ``*_std`` the sample std or None."""

    case: str
    priors: str
    seeds: list
    baseline_mse: float | None = None
    weight_decay_mse: float | None = None
    best_decay: str = ""
    tuned_mse: float | None = None
    baseline_energy: float | None = None
    tuned_energy: float | None = None
    lambda_opt: str = ""
    theta_opt: str = ""
    flags: list = field(default_factory=list)
    std: dict = field(default_factory=dict)
    # not written to CSV: per-seed rows of an aggregate, structured optima
    per_seed: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def cells(self) -> list[str]:
        values = {
            "case": self.case,
            "priors": self.priors,
            "seeds": ";".join(str(s) for s in self.seeds),
            "best_decay": self.best_decay,
            "lambda_opt": self.lambda_opt,
            "theta_opt": self.theta_opt,
            "flags": ";".join(self.flags),
        }
        for name, std_col in _METRICS.items():
            values[name] = _num(getattr(self, name))
            values[std_col] = _num(self.std.get(name))
        return [values[c] for c in REPORT_COLUMNS]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_report(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow(row.cells())
    path.write_text(buf.getvalue())
    return path


def read_report(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ContractError(f"{path}: columns do not match the report schema")
        return list(reader)


def aggregate(rows: list[ReportRow], seeds: list, failed=()) -> ReportRow:
    """Mean and sample std over per-seed rows.

    ``seeds`` may list a seed more than once; each listing counts as one
    sample.  With fewer than two samples std is omitted and flagged.
    """
    by_seed = {r.seeds[0]: r for r in rows}
    samples = [by_seed[s] for s in seeds if s in by_seed]
    if not samples:
        raise ContractError("no surviving seeds to aggregate")
    first = samples[0]
    out = ReportRow(case=first.case, priors=first.priors, seeds=list(seeds), per_seed=samples)
    for name in _METRICS:
        vals = [getattr(r, name) for r in samples if getattr(r, name) is not None]
        if not vals:
            continue
        setattr(out, name, float(np.mean(vals)))
        if len(vals) >= 2:
            out.std[name] = statistics.stdev(vals)
    for name in ("best_decay", "lambda_opt", "theta_opt"):
        per = [getattr(r, name) for r in samples]
        setattr(out, name, "|".join(per) if any(per) else "")
    if len(samples) < 2:
        out.flags.append("single_seed")
    if failed:
        out.flags.append("failed_seeds=" + ",".join(str(s) for s in failed))
    for r in samples:
        out.flags += [f for f in r.flags if f not in out.flags]
    return out


def format_table(rows: list[dict]) -> str:
    """Fixed-width text rendering of report rows (as read by ``read_report``)."""
    cols = ["case", "priors", "seeds", "baseline_mse", "weight_decay_mse", "tuned_mse", "baseline_energy", "tuned_energy", "lambda_opt", "theta_opt", "flags"]
    cols = [c for c in cols if any(r.get(c) for r in rows)]

    def short(c, v):
        if c.endswith(("_mse", "_energy")) and v:
            return f"{float(v):.3e}"
        return v

    table = [cols] + [[short(c, r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(cols))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table)


# ---------------------------------------------------------------------------
# heatmaps
# ---------------------------------------------------------------------------


def field_on_grid(source, grid: GridSpec) -> np.ndarray:
    """``(nx, nt)`` values of an array, model or parameter set on ``grid``."""
    if isinstance(source, (TrainedModel, MlpParams)):
        params = source.params if isinstance(source, TrainedModel) else source
        return mlp_forward(params, grid.points()).reshape(grid.nx, grid.nt)
    arr = np.asarray(source, dtype=np.float64)
    if arr.shape != (grid.nx, grid.nt):
        raise ShapeError(f"field has shape {arr.shape}, grid is {(grid.nx, grid.nt)}")
    return arr


def pgm_bytes(values: np.ndarray) -> bytes:
    """8-bit binary PGM, min-max normalized; a constant field maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError("PGM needs a 2-D array")
    if not np.isfinite(values).all():
        raise ContractError("cannot render a field with non-finite values")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        pix = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pix = np.zeros(values.shape, dtype=np.uint8)
    rows, cols = pix.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ContractError(f"{path}: not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def emit_heatmap(source, grid: GridSpec, path):
    """Write ``<path>.csv`` (rows = x index, columns = t index) and ``<path>.pgm``.

    Returns the two paths.
    """
    values = field_on_grid(source, grid)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path, pgm_path = path.with_suffix(".csv"), path.with_suffix(".pgm")
    csv_path.write_text("".join(",".join(repr(v) for v in row) + "\n" for row in values.tolist()))
    pgm_path.write_bytes(pgm_bytes(values))
    return csv_path, pgm_path


def read_heatmap_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
