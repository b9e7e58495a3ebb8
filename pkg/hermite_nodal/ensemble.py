"""
The eigenspace V_N, Gaussian random eigenfunctions on it, and their evaluation.

Coefficients are drawn from a counter-based generator (Philox): coefficient i
of seed s is a function of (s, i) alone, so any subset of coefficients, in any
order, on any thread, reproduces the same numbers.
"""

import io
import logging
import math
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict

from . import config
from .errors import CapacityError, DomainError, numerics_error_handler
from .hermite_core import ModelParams, hermite_table

logger = logging.getLogger(__name__)

# points per block when materializing the basis matrix
_POINT_BLOCK = 4096
_TWO_POW_M53 = 2.0 ** -53


class MultiIndexSet(BaseModel):
    """All alpha with |alpha| = N, in descending lexicographic order."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int
    N: int
    indices: np.ndarray  # (size, d) int64

    @property
    def size(self) -> int:
        return self.indices.shape[0]


class RandomEigenfunction(BaseModel):
    """One realization Phi_N = sum_alpha a_alpha phi_alpha."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ModelParams
    coeffs: np.ndarray
    seed: int
    basis: MultiIndexSet


def level_dimension(d: int, N: int) -> int:
    return math.comb(N + d - 1, d - 1)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@numerics_error_handler
def enumerate_level(d: int, N: int, capacity: int | None = None) -> MultiIndexSet:
    """
    Enumerate the multi-indices of level N in dimension d.

    Raises
    ------
    DomainError
        If d < 1 or N < 0.
    CapacityError
        If binomial(N+d-1, d-1) exceeds the configured cap.
    """
    if d < 1 or N < 0:
        raise DomainError(f"need d >= 1 and N >= 0, got d={d}, N={N}")
    capacity = config.CAPACITY if capacity is None else capacity
    size = level_dimension(d, N)
    if size > capacity:
        raise CapacityError(f"dim V_N = {size} exceeds capacity {capacity} (d={d}, N={N})")

    indices = np.fromiter(
        (a for alpha in _compositions(N, d) for a in alpha),
        dtype=np.int64,
        count=size * d,
    ).reshape(size, d)
    return MultiIndexSet(d=d, N=N, indices=indices)


def standard_normals(seed: int, count: int) -> np.ndarray:
    """
    Draw `count` standard normals; entry i depends only on (seed, i).

    Each entry consumes the two Philox words at counter positions 2i and 2i+1
    (Box-Muller, cosine branch).
    """
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    words = np.random.Philox(key=seed).random_raw(2 * count).reshape(count, 2)
    u1 = ((words[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53
    u2 = (words[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def substream_seed(base_seed: int, index: int) -> int:
    """Seed for the index-th sample of a run keyed by base_seed."""
    state = np.random.SeedSequence([base_seed, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


@numerics_error_handler
def sample_eigenfunction(params: ModelParams, seed: int, basis: MultiIndexSet | None = None) -> RandomEigenfunction:
    """Draw a_alpha ~ N(0,1) i.i.d., keyed by (seed, position in the enumeration)."""
    basis = basis if basis is not None else enumerate_level(params.d, params.N)
    coeffs = standard_normals(seed, basis.size)
    coeffs.setflags(write=False)
    return RandomEigenfunction(params=params, coeffs=coeffs, seed=seed, basis=basis)


def with_coefficients(params: ModelParams, coeffs, seed: int = 0) -> RandomEigenfunction:
    """Wrap a caller-supplied coefficient vector (aligned with enumerate_level order)."""
    basis = enumerate_level(params.d, params.N)
    coeffs = np.array(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise DomainError(f"expected {basis.size} coefficients, got shape {coeffs.shape}")
    coeffs.setflags(write=False)
    return RandomEigenfunction(params=params, coeffs=coeffs, seed=seed, basis=basis)


def axis_tables(points: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-axis Hermite tables at u = x_j / sqrt(h).

    Returns values and x-derivatives, each of shape (d, N+1, n_points).
    """
    sqrt_h = math.sqrt(params.h)
    values = np.empty((params.d, params.N + 1, points.shape[0]))
    derivs = np.empty_like(values)
    for j in range(params.d):
        table = hermite_table(points[:, j] / sqrt_h, params.N)
        values[j] = table.values
        derivs[j] = table.derivs / sqrt_h
    return values, derivs


def basis_matrices(points: np.ndarray, params: ModelParams, basis: MultiIndexSet,
                   with_gradient: bool = False) -> tuple[np.ndarray, np.ndarray | None]:
    """
    phi_alpha at every point, shape (n_points, dim V_N); optionally the
    gradients, shape (d, n_points, dim V_N).
    """
    values, derivs = axis_tables(points, params)
    scale = params.h ** (-params.d / 4)
    alpha = basis.indices

    # factors[j] : (n_points, dimV)
    factors = np.stack([values[j][alpha[:, j]].T for j in range(params.d)])
    phi = scale * np.prod(factors, axis=0)
    if not with_gradient:
        return phi, None

    grads = np.empty((params.d,) + phi.shape)
    for j in range(params.d):
        others = np.prod(np.delete(factors, j, axis=0), axis=0) if params.d > 1 else 1.0
        grads[j] = scale * derivs[j][alpha[:, j]].T * others
    return phi, grads


def _as_points(points, d: int) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != d:
        raise DomainError(f"points must have {d} coordinates, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DomainError("points must be finite")
    return points


@numerics_error_handler
def evaluate_field(f: RandomEigenfunction, points, with_gradient: bool = False):
    """
    Evaluate Phi_N (and optionally its gradient) at a list of points.

    Parameters
    ----------
    f : RandomEigenfunction
    points : array_like, shape (n, d)
    with_gradient : bool

    Returns
    -------
    numpy.ndarray or tuple
        Values of shape (n,), and with ``with_gradient`` also gradients (n, d).
    """
    points = _as_points(points, f.params.d)
    n = points.shape[0]
    values = np.empty(n)
    grads = np.empty((n, f.params.d)) if with_gradient else None

    for start in range(0, n, _POINT_BLOCK):
        block = points[start:start + _POINT_BLOCK]
        phi, dphi = basis_matrices(block, f.params, f.basis, with_gradient)
        values[start:start + len(block)] = phi @ f.coeffs
        if with_gradient:
            grads[start:start + len(block)] = (dphi @ f.coeffs).T

    if with_gradient:
        return values, grads
    return values


def grid_tables_2d(xs, ys, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Tables psi_k(x_i/sqrt h) for k <= N over both grid axes; reusable across realizations."""
    sqrt_h = math.sqrt(params.h)
    tx = hermite_table(np.asarray(xs, dtype=float) / sqrt_h, params.N).values
    ty = hermite_table(np.asarray(ys, dtype=float) / sqrt_h, params.N).values
    return tx, ty


def evaluate_grid_2d(f: RandomEigenfunction, xs, ys, tables: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Phi_N on the lattice xs x ys (d=2), shape (len(xs), len(ys)); O(N) per point."""
    if f.params.d != 2:
        raise DomainError("grid evaluation is for d=2")
    tx, ty = tables if tables is not None else grid_tables_2d(xs, ys, f.params)
    alpha = f.basis.indices
    weighted = tx[alpha[:, 0]].T * f.coeffs  # (nx, dimV)
    return (weighted @ ty[alpha[:, 1]]) / f.params.h ** 0.5


# Binary coefficient dump: little-endian int64 (d, N, seed) then float64 coeffs

_HEADER = np.dtype("<i8")
_BODY = np.dtype("<f8")


def write_coefficients(f: RandomEigenfunction, target: str | Path | BinaryIO) -> None:
    if f.seed >= 2**63:
        raise DomainError("seed does not fit the signed 64-bit dump header")
    payload = (np.array([f.params.d, f.params.N, f.seed], dtype=_HEADER).tobytes()
               + np.asarray(f.coeffs, dtype=_BODY).tobytes())
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(payload)
    else:
        target.write(payload)


def read_coefficients(source: str | Path | BinaryIO, E: float) -> RandomEigenfunction:
    """Read a dump; E is not stored and must be supplied."""
    raw = Path(source).read_bytes() if isinstance(source, (str, Path)) else source.read()
    stream = io.BytesIO(raw)
    d, N, seed = np.frombuffer(stream.read(3 * _HEADER.itemsize), dtype=_HEADER)
    coeffs = np.frombuffer(stream.read(), dtype=_BODY)
    params = ModelParams(d=int(d), E=E, N=int(N))
    return with_coefficients(params, coeffs, seed=int(seed))
