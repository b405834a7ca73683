"""Run configuration files and artifact export (trace JSON, series CSV, SVG frames).

Config schema (JSON)::

    {
      "name": "circle",                       # optional
      "shape": {"kind": "circle", "R": 1.0},  # any registered shape kind
      "grid": {"nx": 256, "ny": 256, "bounds": [-2, 2, -2, 2]},
      "h": 0.005,
      "T": 0.5,
      "target_volume": null,                  # optional, default: volume of E_0
      "step": {"pd_tol": 1e-5, "pd_max_iter": 10000, "vol_tol": null, "threshold": 0.5},
      "checks": ["perimeter", ...],
      "export": {"svg_stride": 1, "csv": true}
    }
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .flow import ALL_CHECKS, FlowConfig, FlowTrace, StepSettings
from .grid import SHAPES, GridSpec, shape_from_dict

CONFIG_KEYS = {"name", "shape", "grid", "h", "T", "target_volume", "step", "checks", "export"}
SERIES_HEADER = ("t", "volume", "perimeter", "lambda", "lambda_clamped", "s_norm", "r_ubc", "sup_d",
                 "l2_H2", "l2_gradH2")


@dataclass(frozen=True)
class ExportSettings:
    svg_stride: int = 1
    csv: bool = True

    def to_dict(self):
        return {"svg_stride": self.svg_stride, "csv": self.csv}


@dataclass(frozen=True)
class RunConfig:
    flow: FlowConfig
    export: ExportSettings = field(default_factory=ExportSettings)


# ---------------------------------------------------------------------------
# config parsing


def _number(data, key, path, integer=False, optional=False):
    if key not in data:
        if optional:
            return None
        raise ConfigError(f"missing required key {path!r}", key=path)
    value = data[key]
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path!r} must be a number, got {value!r}", key=path)
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path!r} must be an integer, got {value!r}", key=path)
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path!r} must be finite", key=path)
    return float(value)


def _section(data, key):
    value = data.get(key)
    if not isinstance(value, dict):
        raise ConfigError(f"{key!r} must be an object", key=key)
    return value


def _parse_shape(data):
    spec = _section(data, "shape")
    kind = spec.get("kind")
    if kind not in SHAPES:
        raise ConfigError(f"unknown shape kind {kind!r}; expected one of {sorted(SHAPES)}", key="shape.kind")
    cls = SHAPES[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    for k in spec:
        if k != "kind" and k not in names:
            raise ConfigError(f"unknown key {k!r} for shape {kind!r}", key=f"shape.{k}")
    try:
        return shape_from_dict(spec)
    except (TypeError, ValueError) as exc:
        # name the field when the message mentions one
        named = [n for n in sorted(names) if re.search(rf"\b{n}\b", str(exc))]
        key = f"shape.{named[0]}" if named else "shape"
        raise ConfigError(f"invalid shape: {exc}", key=key) from exc


def _parse_grid(data):
    spec = _section(data, "grid")
    for k in spec:
        if k not in ("nx", "ny", "bounds"):
            raise ConfigError(f"unknown grid key {k!r}", key=f"grid.{k}")
    nx = _number(spec, "nx", "grid.nx", integer=True)
    ny = _number(spec, "ny", "grid.ny", integer=True)
    bounds = spec.get("bounds")
    if not isinstance(bounds, list) or len(bounds) != 4:
        raise ConfigError("grid.bounds must be [x_min, x_max, y_min, y_max]", key="grid.bounds")
    for i, b in enumerate(bounds):
        _number({"b": b}, "b", f"grid.bounds[{i}]")
    for k, n in (("nx", nx), ("ny", ny)):
        if n < 8:
            raise ConfigError(f"grid.{k} must be at least 8, got {n}", key=f"grid.{k}")
    try:
        return GridSpec.from_dict({"nx": nx, "ny": ny, "bounds": bounds})
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}", key="grid.bounds") from exc


def _parse_step(data):
    spec = data.get("step", {})
    if not isinstance(spec, dict):
        raise ConfigError("'step' must be an object", key="step")
    settings = StepSettings.from_dict({})
    out = {}
    for k in spec:
        if k not in settings.to_dict():
            raise ConfigError(f"unknown step setting {k!r}", key=f"step.{k}")
    for k in ("pd_tol", "vol_tol", "threshold", "smoothing"):
        v = _number(spec, k, f"step.{k}", optional=True)
        if v is not None:
            out[k] = v
    v = _number(spec, "pd_max_iter", "step.pd_max_iter", integer=True, optional=True)
    if v is not None:
        out["pd_max_iter"] = v
    if "pd_tol" in out and not 0 < out["pd_tol"] <= 1e-3:
        raise ConfigError("step.pd_tol must lie in (0, 1e-3]", key="step.pd_tol")
    if "pd_max_iter" in out and out["pd_max_iter"] < 16:
        raise ConfigError("step.pd_max_iter must be >= 16", key="step.pd_max_iter")
    if "threshold" in out and not 0 < out["threshold"] < 1:
        raise ConfigError("step.threshold must lie in (0, 1)", key="step.threshold")
    return StepSettings.from_dict(out)


def _parse_export(data):
    spec = data.get("export", {})
    if not isinstance(spec, dict):
        raise ConfigError("'export' must be an object", key="export")
    for k in spec:
        if k not in ("svg_stride", "csv"):
            raise ConfigError(f"unknown export key {k!r}", key=f"export.{k}")
    stride = _number(spec, "svg_stride", "export.svg_stride", integer=True, optional=True)
    if stride is not None and stride < 0:
        raise ConfigError("export.svg_stride must be >= 0 (0 disables frames)", key="export.svg_stride")
    want_csv = spec.get("csv", True)
    if not isinstance(want_csv, bool):
        raise ConfigError("export.csv must be true or false", key="export.csv")
    return ExportSettings(1 if stride is None else stride, want_csv)


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping; every error names the offending key."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", key="")
    for k in data:
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {k!r}", key=k)
    shape = _parse_shape(data)
    grid = _parse_grid(data)
    h = _number(data, "h", "h")
    T = _number(data, "T", "T")
    target = _number(data, "target_volume", "target_volume", optional=True)
    checks = data.get("checks", list(ALL_CHECKS))
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ConfigError("'checks' must be a list of check names", key="checks")
    name = data.get("name", "flow")
    if not isinstance(name, str):
        raise ConfigError("'name' must be a string", key="name")
    flow = FlowConfig(shape, grid, h, T, _parse_step(data), tuple(checks), target, name)
    return RunConfig(flow, _parse_export(data))


def config_to_dict(cfg: RunConfig) -> dict:
    f = cfg.flow
    step = {k: v for k, v in f.step.to_dict().items() if v is not None}
    return {"name": f.name, "shape": f.shape.to_dict(), "grid": f.grid.to_dict(), "h": f.h, "T": f.T,
            "target_volume": f.target_volume, "step": step, "checks": list(f.checks),
            "export": cfg.export.to_dict()}


def load_config(path) -> RunConfig:
    """Read a JSON config file. Malformed JSON raises :class:`ConfigError`."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", key="") from exc
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# artifacts


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def trace_to_dict(trace: FlowTrace, include_contours: bool = True) -> dict:
    """Deterministic summary of a run (wall-clock timings are left out)."""
    states = []
    for s in trace.states:
        d = s.to_dict()
        d["report"].pop("wall_time", None)
        if not include_contours:
            d.pop("contours")
        states.append(d)
    return _clean({
        "config": config_to_dict(RunConfig(trace.config)),
        "m0": trace.m0,
        "singular_flag": trace.singular_flag,
        "singular_time": trace.singular_time,
        "singular_reason": trace.singular_reason,
        "error": trace.error,
        "verdicts": trace.verdicts,
        "states": states,
    })


def write_json(obj, path):
    Path(path).write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def write_trace(trace: FlowTrace, path):
    write_json(trace_to_dict(trace), path)


def series_rows(trace: FlowTrace):
    for s in trace.states:
        r, tp = s.report, s.two_point
        yield (r.t, r.volume, r.perimeter, r.lam, int(r.lambda_clamped), tp.s_norm, tp.ubc_radius,
               r.sup_d, r.l2_H2, r.l2_gradH2)


def write_series_csv(trace: FlowTrace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_HEADER)
        for row in series_rows(trace):
            w.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])


def svg_frame(contours, grid: GridSpec, t: float, width_px: int = 512) -> str:
    """One SVG document drawing the contour loops inside the grid box (y up)."""
    w = grid.x_max - grid.x_min
    hgt = grid.y_max - grid.y_min
    height_px = int(round(width_px * hgt / w))
    paths = []
    for c in contours:
        v = c.vertices if hasattr(c, "vertices") else np.asarray(c)
        pts = " ".join(f"{x:.6f},{grid.y_max + grid.y_min - y:.6f}" for x, y in v)
        paths.append(f'  <polygon points="{pts}" fill="#9ecae1" fill-opacity="0.5" '
                     f'stroke="#08519c" stroke-width="{grid.dx:.6g}"/>')
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="{grid.x_min:.6g} {grid.y_min:.6g} {w:.6g} {hgt:.6g}">',
        f'  <rect x="{grid.x_min:.6g}" y="{grid.y_min:.6g}" width="{w:.6g}" height="{hgt:.6g}" '
        f'fill="white" stroke="#cccccc" stroke-width="{grid.dx:.6g}"/>',
        *paths,
        f'  <text x="{grid.x_min + 0.02 * w:.6g}" y="{grid.y_min + 0.05 * hgt:.6g}" '
        f'font-size="{0.04 * hgt:.6g}" font-family="monospace">t = {t:.4f}</text>',
        "</svg>",
        "",
    ])


def write_frames(trace: FlowTrace, out_dir, stride: int = 1) -> int:
    """Write ``frames/NNNN.svg`` for every ``stride``-th step; returns the count."""
    if stride <= 0:
        return 0
    frames = Path(out_dir) / "frames"
    frames.mkdir(parents=True, exist_ok=True)
    for old in frames.glob("*.svg"):
        old.unlink()
    n = 0
    for k, s in enumerate(trace.states):
        if k == 0 or k % stride:
            continue
        (frames / f"{k:04d}.svg").write_text(svg_frame(s.contours, trace.config.grid, s.t))
        n += 1
    return n


def write_outputs(trace: FlowTrace, out_dir, export: ExportSettings = ExportSettings()) -> dict:
    """Write every run artifact under ``out_dir``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / "trace.json"}
    write_trace(trace, paths["trace"])
    if export.csv:
        paths["series"] = out / "series.csv"
        write_series_csv(trace, paths["series"])
    paths["frames"] = write_frames(trace, out, export.svg_stride)
    return paths


def read_contour_csv(path):
    """Read a closed polyline from a CSV with ``x`` and ``y`` columns.

    A repeated closing vertex is dropped. Raises ``ValueError`` on malformed
    content.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("empty CSV")
        names = [n.strip() for n in reader.fieldnames]
        if "x" not in names or "y" not in names:
            raise ValueError("CSV needs 'x' and 'y' columns")
        reader.fieldnames = names
        pts = []
        for lineno, row in enumerate(reader, start=2):
            try:
                pts.append((float(row["x"]), float(row["y"])))
            except (TypeError, ValueError):
                raise ValueError(f"non-numeric coordinate on line {lineno}") from None
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinate")
    return pts


def write_contour_csv(contour, path):
    v = contour.vertices if hasattr(contour, "vertices") else np.asarray(contour)
    np.savetxt(path, v, delimiter=",", header="x,y", comments="", fmt="%.12g")


def ensure_writable(out_dir):
    """Create ``out_dir`` or raise ``OSError`` if it cannot be written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    return out
