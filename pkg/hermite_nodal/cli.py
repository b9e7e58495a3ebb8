"""
Command-line front end.

    python -m hermite_nodal density --d 2 --E 1 --N 40 --radii 0.4:1.8:0.1
    python -m hermite_nodal kernel --N 10 --points "0.5,0.3;0.9,-0.2" --method both
    python -m hermite_nodal sample --N 20 --seed 7 --out field.bin
    python -m hermite_nodal mc --N 20 --center 0.8,0 --radius 0.3 --samples 2000
    python -m hermite_nodal compare --N 20 --centers "0.8,0;1.7,0"
    python -m hermite_nodal sweep --levels 20,40,80 --radii 0.8:0.8:1

Every output starts with provenance: a ``# hermite_nodal <version> config-sha256=<hash>``
line for CSV, a ``provenance`` object for JSON.

density columns: x_1..x_d, region, F_exact, F_leading, ratio
kernel columns:  x_1..x_d, [y_1..y_d,] exact, mehler, residual, alias_bound
sweep columns:   N, h, r, region, F_exact, F_leading, ratio, slope
compare columns: center_1..center_d, radius, mc_mean, mc_stderr, kacrice_exact, asymptotic, z_score

Exit codes: 0 success, 2 domain error, 3 accuracy or range error, 4 capacity error.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Literal

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import config
from .asymptotics import RegionTag, classify_region, density_leading
from .ensemble import evaluate_grid_2d, sample_eigenfunction, write_coefficients
from .errors import DomainError, HermiteNodalError
from .hermite_core import ModelParams
from .kacrice import Ball, density
from .nodal_mc import ZeroCountSummary, compare_report
from .projector import kernel_jet_exact, kernel_mehler_quadrature, kernel_offdiag_exact

logger = logging.getLogger(__name__)

COMMANDS = ("density", "kernel", "sample", "mc", "sweep", "compare")


class ExperimentConfig(BaseModel):
    """
    Everything a command needs. Stored as KEY=value lines (.env syntax);
    unknown keys are rejected and dump() writes every field, defaults included.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(default=2, ge=1)
    E: float = Field(default=1.0, gt=0)
    N: int = Field(default=20, ge=0)
    seed: int = Field(default=config.MC_SEED, ge=0)
    samples: int = Field(default=2000, ge=1)
    grid_spacing: float | None = None
    radii: str | None = None
    points: str | None = None
    partners: str | None = None
    center: str | None = None
    centers: str | None = None
    radius: float = Field(default=0.3, gt=0)
    levels: str = "20,40,80"
    method: Literal["exact", "mehler", "both"] = "both"
    quad_order: int = Field(default=16, ge=2)
    extent: float | None = None
    workers: int | None = None
    format: Literal["csv", "json"] = "csv"
    out: str | None = None

    @field_validator("*", mode="before")
    @classmethod
    def _empty_is_none(cls, v):
        return None if v == "" else v

    @property
    def params(self) -> ModelParams:
        return ModelParams(d=self.d, E=self.E, N=self.N)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        raw = dotenv_values(path)
        return cls.model_validate({key.lower() if key not in ("E", "N") else key: value
                                   for key, value in raw.items()})

    def dump(self) -> str:
        lines = []
        for name, value in self.model_dump().items():
            key = name if name in ("E", "N") else name.upper()
            lines.append(f"{key}={'' if value is None else repr(value) if isinstance(value, float) else value}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


class Table(BaseModel):
    columns: list[str]
    rows: list[list]
    extras: dict = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------

def parse_radii(spec: str) -> np.ndarray:
    """'a:b:step' -> a, a+step, ..., b (inclusive)."""
    try:
        a, b, step = (float(part) for part in spec.split(":"))
    except ValueError:
        raise DomainError(f"radii must look like a:b:step, got {spec!r}")
    if step <= 0 or b < a:
        raise DomainError(f"radii need step > 0 and b >= a, got {spec!r}")
    count = int(round((b - a) / step)) + 1
    return a + step * np.arange(count)


def parse_points(spec: str, d: int) -> np.ndarray:
    """'x1,x2;y1,y2' -> array (k, d)."""
    try:
        pts = np.array([[float(c) for c in chunk.split(",")] for chunk in spec.split(";") if chunk.strip()])
    except ValueError:
        raise DomainError(f"could not parse points {spec!r}")
    if pts.ndim != 2 or pts.shape[1] != d:
        raise DomainError(f"points must have {d} coordinates each, got {spec!r}")
    return pts


def parse_levels(spec: str) -> list[int]:
    try:
        return [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise DomainError(f"levels must be comma-separated integers, got {spec!r}")


def _axis_points(radii: np.ndarray, d: int) -> np.ndarray:
    pts = np.zeros((radii.size, d))
    pts[:, 0] = radii
    return pts


def _query_points(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.points:
        return parse_points(cfg.points, cfg.d)
    if cfg.radii:
        return _axis_points(parse_radii(cfg.radii), cfg.d)
    raise DomainError("give --points or --radii")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _density_row(params: ModelParams, x: np.ndarray) -> list:
    region = classify_region(params, x)
    if region is RegionTag.ORIGIN:
        raise DomainError(
            f"x={x.tolist()} lies in the origin exclusion |x| < {config.ORIGIN_FACTOR * params.h:.4g}"
        )
    exact = density(params, x)
    leading = float(density_leading(params, x)[0])
    ratio = exact / leading if leading > 0 else math.nan
    return [*x.tolist(), region.value, exact, leading, ratio]


def cmd_density(cfg: ExperimentConfig) -> Table:
    params = cfg.params
    columns = [f"x_{j + 1}" for j in range(cfg.d)] + ["region", "F_exact", "F_leading", "ratio"]
    return Table(columns=columns, rows=[_density_row(params, x) for x in _query_points(cfg)])


def cmd_kernel(cfg: ExperimentConfig) -> Table:
    params = cfg.params
    xs = _query_points(cfg)
    ys = parse_points(cfg.partners, cfg.d) if cfg.partners else None
    if ys is not None and ys.shape != xs.shape:
        raise DomainError("partners must pair one-to-one with points")

    columns = [f"x_{j + 1}" for j in range(cfg.d)]
    if ys is not None:
        columns += [f"y_{j + 1}" for j in range(cfg.d)]
    columns += ["exact", "mehler", "residual", "alias_bound"]

    rows = []
    for i, x in enumerate(xs):
        exact = mehler = bound = math.nan
        if ys is None:
            if cfg.method in ("exact", "both"):
                exact = kernel_jet_exact(params, x).pi
            if cfg.method in ("mehler", "both"):
                result = kernel_mehler_quadrature(params, x, x)
                mehler, bound = result.value, result.alias_bound
        else:
            if cfg.method in ("exact", "both"):
                exact = kernel_offdiag_exact(params, x, ys[i])
            if cfg.method in ("mehler", "both"):
                result = kernel_mehler_quadrature(params, x, ys[i])
                mehler, bound = result.value, result.alias_bound
        residual = abs(exact - mehler) / abs(exact) if cfg.method == "both" and exact != 0 else math.nan
        rows.append([*x.tolist(), *(ys[i].tolist() if ys is not None else []), exact, mehler, residual, bound])
    return Table(columns=columns, rows=rows)


def cmd_sample(cfg: ExperimentConfig) -> Table:
    """Write the coefficient dump to --out; for d=2 return the lattice values as a table."""
    params = cfg.params
    f = sample_eigenfunction(params, cfg.seed)
    if cfg.out:
        write_coefficients(f, Path(cfg.out).with_suffix(".bin"))
    if cfg.d != 2:
        return Table(columns=["index", "coefficient"], rows=[[i, c] for i, c in enumerate(f.coeffs.tolist())])

    spacing = cfg.grid_spacing if cfg.grid_spacing is not None else params.h / 2
    extent = cfg.extent if cfg.extent is not None else math.sqrt(2 * params.E) + 1.0
    axis = np.arange(-extent, extent + 0.5 * spacing, spacing)
    values = evaluate_grid_2d(f, axis, axis)
    rows = [[float(x), float(y), float(values[i, j])] for i, x in enumerate(axis) for j, y in enumerate(axis)]
    return Table(columns=["x_1", "x_2", "value"], rows=rows)


def _balls(cfg: ExperimentConfig, many: bool) -> list[Ball]:
    spec = cfg.centers if many and cfg.centers else cfg.center
    if not spec:
        raise DomainError("give --center (or --centers for compare)")
    return [Ball(center=tuple(float(v) for v in c), radius=cfg.radius) for c in parse_points(spec, cfg.d)]


def cmd_mc(cfg: ExperimentConfig) -> dict:
    report = compare_report(cfg.params, _balls(cfg, many=False)[0], cfg.samples, cfg.seed,
                            cfg.grid_spacing, cfg.quad_order, cfg.workers)
    return json.loads(report.model_dump_json())


def cmd_compare(cfg: ExperimentConfig) -> Table:
    columns = [f"center_{j + 1}" for j in range(cfg.d)] + [
        "radius", "mc_mean", "mc_stderr", "kacrice_exact", "asymptotic", "z_score"]
    rows = []
    for ball in _balls(cfg, many=True):
        report = compare_report(cfg.params, ball, cfg.samples, cfg.seed, cfg.grid_spacing, cfg.quad_order, cfg.workers)
        if isinstance(report, ZeroCountSummary):
            rows.append([*ball.center, ball.radius, float(report.count), 0.0, report.weyl_count, report.weyl_count, math.nan])
            continue
        rows.append([*ball.center, ball.radius, report.mc.mean, report.mc.stderr,
                     report.kacrice_exact, report.asymptotic, report.z_score])
    return Table(columns=columns, rows=rows)


def fit_exponent(hs, values) -> float:
    """Least-squares slope of log(values) against log(h)."""
    slope, _ = np.polyfit(np.log(np.asarray(hs, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)
    return float(slope)


def cmd_sweep(cfg: ExperimentConfig) -> Table:
    levels = parse_levels(cfg.levels)
    points = _query_points(cfg)
    columns = ["N", "h", "r", "region", "F_exact", "F_leading", "ratio", "slope"]
    rows, fits = [], {}
    for x in points:
        block = []
        for N in levels:
            params = cfg.params.with_level(N)
            _, region, exact, leading, ratio = _density_row(params, x)[-5:]
            block.append([N, params.h, float(np.linalg.norm(x)), region, exact, leading, ratio])
        slope = fit_exponent([row[1] for row in block], [row[4] for row in block]) if len(block) > 1 else math.nan
        fits[f"{np.linalg.norm(x):.17g}"] = slope
        rows.extend(row + [slope] for row in block)
    return Table(columns=columns, rows=rows, extras={"fits": fits})


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def provenance_line(cfg: ExperimentConfig) -> str:
    return f"# hermite_nodal {config.__version__} config-sha256={cfg.sha256()}"


def render(cfg: ExperimentConfig, payload: Table | dict) -> str:
    if cfg.format == "json" or isinstance(payload, dict):
        body = payload if isinstance(payload, dict) else {
            "columns": payload.columns,
            "rows": [dict(zip(payload.columns, row)) for row in payload.rows],
            **payload.extras,
        }
        document = {"provenance": {"version": config.__version__, "config_sha256": cfg.sha256()}, "data": body}
        return json.dumps(document, indent=2, allow_nan=True) + "\n"

    lines = [provenance_line(cfg), ",".join(payload.columns)]
    lines.extend(",".join(_cell(v) for v in row) for row in payload.rows)
    return "\n".join(lines) + "\n"


def run_command(command: str, cfg: ExperimentConfig) -> str:
    if command == "density":
        payload = cmd_density(cfg)
    elif command == "kernel":
        payload = cmd_kernel(cfg)
    elif command == "sample":
        payload = cmd_sample(cfg)
    elif command == "mc":
        payload = cmd_mc(cfg)
    elif command == "compare":
        payload = cmd_compare(cfg)
    elif command == "sweep":
        payload = cmd_sweep(cfg)
    else:
        raise DomainError(f"unknown command {command!r}")
    return render(cfg, payload)


# ---------------------------------------------------------------------------
# argparse
# ---------------------------------------------------------------------------

_FLAG_FIELDS = {
    "d": int, "E": float, "N": int, "seed": int, "samples": int, "grid_spacing": float,
    "radii": str, "points": str, "partners": str, "center": str, "centers": str,
    "radius": float, "levels": str, "method": str, "quad_order": int, "extent": float,
    "workers": int, "format": str, "out": str,
}


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(
        prog="hermite_nodal",
        description="Nodal-set density of random Hermite eigenfunctions: exact Kac-Rice, "
                    "semiclassical asymptotics and Monte-Carlo.",
        epilog=__doc__.split("\n\n", 2)[-1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"hermite_nodal {config.__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=str, help="KEY=value experiment file; flags override it")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    for name, kind in _FLAG_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        kwargs = {"dest": name, "type": kind, "default": None}
        if name == "format":
            kwargs["choices"] = ("csv", "json")
        if name == "method":
            kwargs["choices"] = ("exact", "mehler", "both")
        parser.add_argument(flag, **kwargs)
    return parser.parse_args(argv)


def build_config(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {name: getattr(args, name) for name in _FLAG_FIELDS if getattr(args, name) is not None}
    return ExperimentConfig.model_validate({**base.model_dump(), **overrides})


def main(argv=None) -> int:
    args = parse_arguments(argv)
    level = {0: None, 1: "INFO"}.get(args.verbose, "DEBUG")
    config.setup_logging(level)

    try:
        cfg = build_config(args)
        text = run_command(args.command, cfg)
    except ValidationError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return DomainError.exit_code
    except HermiteNodalError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    if cfg.out and args.command != "sample":
        Path(cfg.out).write_text(text, encoding="utf-8")
    elif cfg.out and args.command == "sample" and cfg.d == 2:
        Path(cfg.out).with_suffix(".grid.csv").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
