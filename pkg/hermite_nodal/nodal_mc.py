"""
Measured nodal sets: zero counting in d=1, marching-squares nodal length in d=2,
the Monte-Carlo driver and the three-way comparison report.
"""

import logging
import math
import queue
import threading
from typing import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize

from . import config
from .asymptotics import density_leading, weyl_zero_count
from .ensemble import (enumerate_level, evaluate_grid_2d, grid_tables_2d,
                       sample_eigenfunction, substream_seed)
from .errors import AccuracyError, DomainError, numerics_error_handler
from .hermite_core import ModelParams, hermite_table
from .kacrice import Ball, check_ball_admissible, density_integral_ball, integrate_over_ball

logger = logging.getLogger(__name__)

BISECTION_WIDTH = 1e-12
# default and maximal lattice spacing as fractions of h
DEFAULT_SPACING_FRACTION = 1.0 / 6.0
MAX_SPACING_FRACTION = 1.0 / 5.0
# cells of margin between the ball and the lattice edge
_GRID_MARGIN = 3


class GridField(BaseModel):
    """values[i, j] = f(xs[i], ys[j]) on a uniform lattice."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray


class NodalEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    ball: Ball
    n_samples: int
    mean: float
    stderr: float
    grid_spacing: float
    base_seed: int


class ComparisonReport(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    params: ModelParams
    ball: Ball
    mc: NodalEstimate
    kacrice_exact: float
    kacrice_error: float
    asymptotic: float
    z_score: float
    relative_gaps: tuple[float, float]  # (mc vs exact, exact vs asymptotic)
    caustic_band: bool = False


class ZeroCountSummary(BaseModel):
    """What compare_report returns in d=1, where the nodal set is deterministic."""
    model_config = ConfigDict(frozen=True)

    params: ModelParams
    interval: tuple[float, float]
    count: int
    weyl_count: float


# ---------------------------------------------------------------------------
# d = 1
# ---------------------------------------------------------------------------

def _phi_1d(params: ModelParams, xs) -> np.ndarray:
    sqrt_h = math.sqrt(params.h)
    return hermite_table(np.asarray(xs, dtype=float) / sqrt_h, params.N).values[params.N] * params.h ** -0.25


def _refine_zero(params: ModelParams, a: float, b: float) -> float:
    # brentq adds a relative term to xtol, so brackets far from the origin
    # still terminate where float spacing exceeds BISECTION_WIDTH
    return float(optimize.brentq(lambda t: float(_phi_1d(params, t)), a, b, xtol=BISECTION_WIDTH))


def max_zero_spacing(params: ModelParams) -> float:
    """Sampling step that keeps at most one zero per step: pi h / (8 sqrt(E))."""
    return math.pi * params.h / (8.0 * math.sqrt(params.E))


@numerics_error_handler
def zeros_1d(params: ModelParams, interval: tuple[float, float], resolution: int | None = None) -> np.ndarray:
    """
    Zeros of phi_N on [a, b], each bracketed by a sign change of the samples
    and refined with Brent's method to width 1e-12 (relative width near
    machine precision far from the origin).

    A sample that is exactly zero is skipped over; if the signs on either side
    of a run of zero samples differ, the run is one zero.

    Raises
    ------
    DomainError
        If d != 1 or the interval is empty.
    AccuracyError
        If the sample spacing exceeds pi h / (8 sqrt(E)).
    """
    if params.d != 1:
        raise DomainError(f"zero counting is for d=1, got d={params.d}")
    a, b = float(interval[0]), float(interval[1])
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise DomainError(f"invalid interval [{a}, {b}]")

    limit = max_zero_spacing(params)
    if resolution is None:
        resolution = int(math.ceil((b - a) / (0.5 * limit))) + 1
    if resolution < 2 or (b - a) / (resolution - 1) > limit:
        raise AccuracyError(f"{resolution} samples on [{a}, {b}] are coarser than spacing {limit:.3e}", bound=limit)

    xs = np.linspace(a, b, resolution)
    values = _phi_1d(params, xs)
    nonzero = np.flatnonzero(values != 0.0)

    zeros = []
    for i, j in zip(nonzero[:-1], nonzero[1:]):
        if (values[i] > 0) == (values[j] > 0):
            continue
        if j > i + 1:
            zeros.append(float(xs[(i + j) // 2]))
        else:
            zeros.append(_refine_zero(params, float(xs[i]), float(xs[j])))
    return np.array(zeros)


def count_zeros_1d(params: ModelParams, interval: tuple[float, float], resolution: int | None = None) -> int:
    return int(zeros_1d(params, interval, resolution).size)


# ---------------------------------------------------------------------------
# d = 2: marching squares
# ---------------------------------------------------------------------------

# Corner order (00, 10, 11, 01); edges 0 bottom, 1 right, 2 top, 3 left.
# Unambiguous cases -> edge pairs; saddles 5 and 10 are resolved below.
_EDGE_PAIRS = ((3, 0), (0, 1), (1, 2), (2, 3), (3, 1), (0, 2))
_PAIR_CASES = {
    (3, 0): (1, 14),
    (0, 1): (2, 13),
    (1, 2): (4, 11),
    (2, 3): (8, 7),
    (3, 1): (3, 12),
    (0, 2): (6, 9),
}


def _uniform_step(axis: np.ndarray, name: str) -> float:
    if axis.ndim != 1 or axis.size < 2:
        raise DomainError(f"{name} must be a 1D axis with at least two points")
    steps = np.diff(axis)
    step = float(steps.mean())
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-9 * step:
        raise DomainError(f"{name} is not a uniform increasing lattice axis")
    return step


def _clipped_lengths(p: np.ndarray, q: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Length of each segment p->q inside the disk."""
    d = q - p
    rel = p - center
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", d, rel)
    c = np.einsum("ij,ij->i", rel, rel) - radius * radius
    disc = b * b - 4.0 * a * c

    out = np.zeros(a.shape)
    ok = (a > 0) & (disc > 0)
    root = np.sqrt(disc[ok])
    lo = np.maximum((-b[ok] - root) / (2.0 * a[ok]), 0.0)
    hi = np.minimum((-b[ok] + root) / (2.0 * a[ok]), 1.0)
    out[ok] = np.maximum(hi - lo, 0.0) * np.sqrt(a[ok])
    return out


@numerics_error_handler
def nodal_length_2d(field: GridField, ball: Ball) -> float:
    """
    Length of the zero set of the bilinear-interpolated lattice field inside a disk.

    Values >= 0 count as positive. Saddle cells take the sign of the cell-centre
    mean, and their segments cut off the corners whose sign differs from it.

    Raises
    ------
    DomainError
        If the lattice does not cover the ball with two cells of margin, or
        holds non-finite values.
    """
    xs = np.asarray(field.xs, dtype=float)
    ys = np.asarray(field.ys, dtype=float)
    values = np.asarray(field.values, dtype=float)
    if ball.d != 2:
        raise DomainError("nodal_length_2d needs a disk")
    if values.shape != (xs.size, ys.size):
        raise DomainError(f"values shape {values.shape} does not match axes ({xs.size}, {ys.size})")
    dx, dy = _uniform_step(xs, "xs"), _uniform_step(ys, "ys")
    (cx, cy), r = ball.center, ball.radius
    if (xs[0] > cx - r - 2 * dx or xs[-1] < cx + r + 2 * dx
            or ys[0] > cy - r - 2 * dy or ys[-1] < cy + r + 2 * dy):
        raise DomainError("lattice does not cover the ball with a margin of two cells")

    # restrict to cells meeting the ball's bounding box
    i0 = int(np.searchsorted(xs, cx - r, side="right")) - 1
    i1 = int(np.searchsorted(xs, cx + r, side="left"))
    j0 = int(np.searchsorted(ys, cy - r, side="right")) - 1
    j1 = int(np.searchsorted(ys, cy + r, side="left"))
    v = values[i0:i1 + 1, j0:j1 + 1]
    if not np.all(np.isfinite(v)):
        raise DomainError("field values must be finite")
    x = xs[i0:i1 + 1]
    y = ys[j0:j1 + 1]

    v00, v10, v11, v01 = v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]
    case = ((v00 >= 0).astype(np.int8) | (v10 >= 0) << 1 | (v11 >= 0) << 2 | (v01 >= 0) << 3)
    centre_pos = (v00 + v10 + v11 + v01) >= 0

    xl, yb = np.meshgrid(x[:-1], y[:-1], indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        edges = (
            (xl + dx * v00 / (v00 - v10), yb),
            (xl + dx, yb + dy * v10 / (v10 - v11)),
            (xl + dx * v01 / (v01 - v11), yb + dy),
            (xl, yb + dy * v00 / (v00 - v01)),
        )

    saddle5 = case == 5
    saddle10 = case == 10
    saddle_masks = {
        (3, 0): (saddle5 & ~centre_pos) | (saddle10 & centre_pos),
        (1, 2): (saddle5 & ~centre_pos) | (saddle10 & centre_pos),
        (0, 1): (saddle5 & centre_pos) | (saddle10 & ~centre_pos),
        (2, 3): (saddle5 & centre_pos) | (saddle10 & ~centre_pos),
    }

    center = np.array([cx, cy])
    total = 0.0
    for pair in _EDGE_PAIRS:
        mask = np.isin(case, _PAIR_CASES[pair])
        if pair in saddle_masks:
            mask = mask | saddle_masks[pair]
        if not np.any(mask):
            continue
        ea, eb = edges[pair[0]], edges[pair[1]]
        p = np.stack([ea[0][mask], ea[1][mask]], axis=1)
        q = np.stack([eb[0][mask], eb[1][mask]], axis=1)
        total += math.fsum(_clipped_lengths(p, q, center, r))
    return total


# ---------------------------------------------------------------------------
# Monte-Carlo
# ---------------------------------------------------------------------------

def _pairwise_sum(values: np.ndarray) -> float:
    """Fixed-shape tree reduction; the result depends only on the order of values."""
    if values.size == 0:
        return 0.0
    if values.size == 1:
        return float(values[0])
    mid = values.size // 2
    return _pairwise_sum(values[:mid]) + _pairwise_sum(values[mid:])


def mc_lattice(params: ModelParams, ball: Ball, grid_spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform axes covering the ball with a margin of _GRID_MARGIN cells."""
    (cx, cy), r = ball.center, ball.radius
    count = int(math.ceil((2 * r) / grid_spacing)) + 2 * _GRID_MARGIN + 1
    xs = cx - r - _GRID_MARGIN * grid_spacing + grid_spacing * np.arange(count)
    ys = cy - r - _GRID_MARGIN * grid_spacing + grid_spacing * np.arange(count)
    return xs, ys


def _resolve_spacing(params: ModelParams, grid_spacing: float | None) -> float:
    if grid_spacing is None:
        return DEFAULT_SPACING_FRACTION * params.h
    if not grid_spacing > 0:
        raise DomainError(f"grid spacing must be positive, got {grid_spacing}")
    if grid_spacing > MAX_SPACING_FRACTION * params.h * (1 + 1e-12):
        raise AccuracyError(
            f"grid spacing {grid_spacing:.4g} exceeds h/5 = {params.h / 5:.4g}", bound=grid_spacing
        )
    return grid_spacing


def run_mc_events(params: ModelParams, ball: Ball, n_samples: int, base_seed: int,
                  grid_spacing: float | None = None, workers: int | None = None) -> Iterator[dict]:
    """
    Generator that measures nodal lengths on worker threads and yields events.

    Events: ``sample`` (index, seed, length), ``progress`` (completed, total),
    ``worker-error`` (message, error) and a final ``end``.
    Sample i uses the substream seed (base_seed, i) whichever thread runs it.
    """
    if params.d != 2:
        raise DomainError(f"Monte-Carlo nodal length is implemented for d=2, got d={params.d}")
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    spacing = _resolve_spacing(params, grid_spacing)
    workers = max(1, min(workers if workers is not None else config.WORKERS, n_samples))

    basis = enumerate_level(params.d, params.N)
    xs, ys = mc_lattice(params, ball, spacing)
    tables = grid_tables_2d(xs, ys, params)
    event_queue = queue.Queue()

    def run_worker(offset: int):
        try:
            for index in range(offset, n_samples, workers):
                seed = substream_seed(base_seed, index)
                f = sample_eigenfunction(params, seed, basis)
                grid = GridField(xs=xs, ys=ys, values=evaluate_grid_2d(f, xs, ys, tables))
                event_queue.put({"event_type": "sample", "index": index, "seed": seed,
                                 "length": nodal_length_2d(grid, ball)})
        except Exception as e:
            event_queue.put({"event_type": "worker-error", "message": str(e), "error": e})
        finally:
            event_queue.put({"event_type": "worker-done"})

    for offset in range(workers):
        threading.Thread(target=run_worker, args=(offset,), daemon=True).start()

    done = 0
    completed = 0
    report_every = max(1, n_samples // 10)
    while done < workers:
        event = event_queue.get()  # Blocking call.
        if event["event_type"] == "worker-done":
            done += 1
            continue
        if event["event_type"] == "sample":
            completed += 1
            yield event
            if completed % report_every == 0 or completed == n_samples:
                yield {"event_type": "progress", "completed": completed, "total": n_samples}
            continue
        yield event
    yield {"event_type": "end"}


@numerics_error_handler
def mc_expected_measure(params: ModelParams, ball: Ball, n_samples: int, base_seed: int,
                        grid_spacing: float | None = None, workers: int | None = None) -> NodalEstimate:
    """
    Mean and standard error of the nodal length in a disk over n_samples
    independent realizations. Bitwise reproducible for any thread count.

    Raises
    ------
    AccuracyError
        If grid_spacing exceeds h/5.
    DomainError
        If d != 2.
    """
    spacing = _resolve_spacing(params, grid_spacing)
    lengths = np.full(n_samples, np.nan)
    for event in run_mc_events(params, ball, n_samples, base_seed, spacing, workers):
        if event["event_type"] == "sample":
            lengths[event["index"]] = event["length"]
        elif event["event_type"] == "progress":
            logger.info("Monte-Carlo %d/%d samples", event["completed"], event["total"])
        elif event["event_type"] == "worker-error":
            raise event["error"]

    mean = _pairwise_sum(lengths) / n_samples
    if n_samples > 1:
        var = _pairwise_sum((lengths - mean) ** 2) / (n_samples - 1)
        stderr = math.sqrt(var / n_samples)
    else:
        stderr = 0.0
    return NodalEstimate(ball=ball, n_samples=n_samples, mean=mean, stderr=stderr,
                         grid_spacing=spacing, base_seed=base_seed)


@numerics_error_handler
def compare_report(params: ModelParams, ball: Ball, n_samples: int, base_seed: int,
                   grid_spacing: float | None = None, quad_order: int = 16,
                   workers: int | None = None) -> ComparisonReport | ZeroCountSummary:
    """
    Monte-Carlo nodal length, exact Kac-Rice integral and leading-order integral for one ball.

    In d=1 the nodal set is deterministic: the interval [c - r, c + r] is
    summarized by its zero count and the total Weyl count instead.
    """
    if params.d == 1:
        interval = (ball.center[0] - ball.radius, ball.center[0] + ball.radius)
        logger.info("d=1 request routed to zero counting on %s", interval)
        return ZeroCountSummary(params=params, interval=interval,
                                count=count_zeros_1d(params, interval),
                                weyl_count=weyl_zero_count(params))

    caustic = check_ball_admissible(params, ball, allow_caustic=True)
    mc = mc_expected_measure(params, ball, n_samples, base_seed, grid_spacing, workers)
    exact = density_integral_ball(params, ball, quad_order, allow_caustic=True)
    asymptotic = integrate_over_ball(lambda pts: density_leading(params, pts), ball, quad_order).value

    z_score = (mc.mean - exact.value) / mc.stderr if mc.stderr > 0 else math.copysign(math.inf, mc.mean - exact.value)
    gaps = ((mc.mean - exact.value) / exact.value, (exact.value - asymptotic) / exact.value)
    return ComparisonReport(params=params, ball=ball, mc=mc, kacrice_exact=exact.value,
                            kacrice_error=exact.error_estimate, asymptotic=asymptotic,
                            z_score=z_score, relative_gaps=gaps, caustic_band=caustic)
