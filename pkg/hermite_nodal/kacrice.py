"""
Kac-Rice: kernel jets -> Omega matrix -> expected nodal density, and its integral over balls.

    Omega_x = d_x d_y log Pi(x,y)|_{y=x} = (Pi hess - grad grad^T) / Pi^2
    F(x)    = (2 pi)^(-1/2) E|Omega_x^(1/2) xi|,   xi ~ N(0, I_d)
"""

import logging
import math
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import integrate, special

from . import config
from .ensemble import enumerate_level, standard_normals, substream_seed
from .errors import DegenerateKernel, DomainError, numerics_error_handler
from .hermite_core import ModelParams
from .projector import KernelJet, kernel_jet_exact, kernel_jets_exact

logger = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# eigenvalues of the cancellation pi*hess - grad grad^T below this many ulps of
# the individual terms are roundoff
_CANCELLATION_ULPS = 64
# relative spread under which the nonzero eigenvalues count as equal
_ISOTROPY_RTOL = 1e-13
GAUSS_HERMITE_ORDER = 40


class OmegaMatrix(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    omega: np.ndarray
    kernel_pi: float
    clipped: float = 0.0  # largest |eigenvalue| removed by PSD clipping


class Ball(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: tuple[float, ...]
    radius: float = Field(gt=0)

    @field_validator("center")
    @classmethod
    def _finite_center(cls, v):
        if not v or not all(math.isfinite(c) for c in v):
            raise ValueError("center must be a non-empty finite point")
        return v

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def volume(self) -> float:
        d = self.d
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d


class BallIntegral(BaseModel):
    """Integral over a ball, summed from four azimuthal quadrant sectors."""
    model_config = ConfigDict(frozen=True)

    value: float
    error_estimate: float
    quad_order: int
    sectors: tuple[float, float, float, float]


# ---------------------------------------------------------------------------
# Omega
# ---------------------------------------------------------------------------

def _clip_psd(matrix: np.ndarray, roundoff_floor: float = 0.0) -> tuple[np.ndarray, float]:
    """
    Symmetrize, then zero eigenvalues in [-PSD_TOL ||M||, roundoff_floor].

    Raises DomainError for eigenvalues more negative than the tolerance.
    """
    sym = 0.5 * (matrix + matrix.T)
    evals, evecs = np.linalg.eigh(sym)
    norm = float(np.max(np.abs(evals))) if evals.size else 0.0
    tol = config.PSD_TOL * norm
    floor = max(roundoff_floor, 0.0)

    if evals.size and evals[0] < -max(tol, floor):
        raise DomainError(f"matrix is not positive semidefinite: eigenvalue {evals[0]:.3e}, norm {norm:.3e}")

    small = evals <= floor
    if not np.any(small):
        return sym, 0.0

    clipped = float(np.max(np.abs(evals[small])))
    if clipped > 0:
        logger.debug("PSD clipping removed eigenvalues up to %.3e (norm %.3e)", clipped, norm)
    kept = np.where(small, 0.0, evals)
    return (evecs * kept) @ evecs.T, clipped


@numerics_error_handler
def omega_matrix(jet: KernelJet) -> OmegaMatrix:
    """
    The normalized derivative covariance of the field at jet.x.

    Raises
    ------
    DegenerateKernel
        If Pi(x,x) is below the degenerate threshold (odd level at the origin,
        or underflow deep in the forbidden region).
    """
    if not jet.pi > config.DEGENERATE_PI:
        raise DegenerateKernel(
            f"Pi(x,x) = {jet.pi:.3e} below threshold {config.DEGENERATE_PI:.1e} at x={jet.x.tolist()}"
        )
    g = jet.grad / jet.pi
    terms = jet.hess / jet.pi
    omega = terms - np.outer(g, g)
    floor = _CANCELLATION_ULPS * np.finfo(float).eps * float(np.max(np.abs(terms)))
    omega, clipped = _clip_psd(omega, roundoff_floor=floor)
    return OmegaMatrix(x=jet.x, omega=omega, kernel_pi=jet.pi, clipped=clipped)


# ---------------------------------------------------------------------------
# E|cov^(1/2) xi|
# ---------------------------------------------------------------------------

def _isotropic_mean(variance: float, k: int) -> float:
    """E|xi| for xi ~ N(0, variance I_k)."""
    return math.sqrt(variance) * math.sqrt(2.0) * math.exp(math.lgamma((k + 1) / 2) - math.lgamma(k / 2))


def _laplace_mean(lam: np.ndarray) -> float:
    """
    E sqrt(sum lam_i xi_i^2) via sqrt(a) = (2 sqrt(pi))^-1 int_0^inf (1 - e^{-ta}) t^{-3/2} dt
    and E e^{-t Q} = prod (1 + 2 t lam_i)^{-1/2}; substituted t = s^2.
    """
    scale = float(lam.max())
    lam = lam / scale

    def integrand(s):
        t = s * s
        return 2.0 * -math.expm1(-0.5 * float(np.sum(np.log1p(2.0 * t * lam)))) / t if t > 0 else 2.0 * float(lam.sum())

    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(integrand, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return math.sqrt(scale) * (head + tail) / (2.0 * math.sqrt(math.pi))


def _hermite_mean(lam: np.ndarray) -> float:
    if lam.size > 3:
        raise DomainError("tensor Gauss-Hermite rule is limited to d <= 3")
    nodes, weights = np.polynomial.hermite_e.hermegauss(GAUSS_HERMITE_ORDER)
    weights = weights / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([nodes] * lam.size), indexing="ij")
    wgrids = np.meshgrid(*([weights] * lam.size), indexing="ij")
    q = sum(l * g * g for l, g in zip(lam, grids))
    w = np.prod(np.stack(wgrids), axis=0)
    return float(np.sum(w * np.sqrt(q)))


def _psd_spectrum(cov) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.all(np.isfinite(cov)):
        raise DomainError(f"covariance must be a finite square matrix, got shape {cov.shape}")
    evals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    norm = float(np.max(np.abs(evals)))
    if evals[0] < -config.PSD_TOL * norm:
        raise DomainError(f"covariance is not positive semidefinite: eigenvalue {evals[0]:.3e}, norm {norm:.3e}")
    return np.sort(evals[evals > _CANCELLATION_ULPS * np.finfo(float).eps * norm])[::-1]


@numerics_error_handler
def gaussian_norm_mean(cov, method: str = "auto") -> float:
    """
    E||cov^(1/2) xi|| for a standard Gaussian xi.

    Parameters
    ----------
    cov : array_like
        Positive semidefinite d x d matrix (clipped within tolerance).
    method : {"auto", "hermite"}
        ``auto`` uses closed forms by the number k of positive eigenvalues:
        equal eigenvalues -> chi mean; k=2 -> complete elliptic integral E(m);
        k=3 -> Carlson R_G; k>3 -> a one-dimensional Laplace-type integral.
        ``hermite`` is the order-40 tensor Gauss-Hermite rule (d <= 3).
    """
    lam = _psd_spectrum(cov)
    if lam.size == 0:
        return 0.0
    if method == "hermite":
        return _hermite_mean(lam)
    if method != "auto":
        raise DomainError(f"unknown method {method!r}")

    k = lam.size
    if lam[0] - lam[-1] <= _ISOTROPY_RTOL * lam[0]:
        return _isotropic_mean(float(lam.mean()), k)
    if k == 2:
        return math.sqrt(2.0 / math.pi) * math.sqrt(lam[0]) * float(special.ellipe(1.0 - lam[1] / lam[0]))
    if k == 3:
        return 2.0 * math.sqrt(2.0 / math.pi) * float(special.elliprg(*lam))
    return _laplace_mean(lam)


def gaussian_norm_mean_mc(cov, n_samples: int = 1_000_000, seed: int | None = None,
                          chunk: int = 1 << 17) -> tuple[float, float]:
    """Monte-Carlo E||cov^(1/2) xi|| with counter-based normals; returns (mean, stderr)."""
    lam = _psd_spectrum(cov)
    if lam.size == 0:
        return 0.0, 0.0
    seed = config.MC_SEED if seed is None else seed
    sqrt_lam = np.sqrt(lam)

    total = 0.0
    total_sq = 0.0
    for index, start in enumerate(range(0, n_samples, chunk)):
        m = min(chunk, n_samples - start)
        xi = standard_normals(substream_seed(seed, index), m * lam.size).reshape(m, lam.size)
        norms = np.linalg.norm(xi * sqrt_lam, axis=1)
        total += float(norms.sum())
        total_sq += float((norms * norms).sum())

    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / max(n_samples - 1, 1)
    return mean, math.sqrt(var / n_samples)


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------

def density_from_jet(jet: KernelJet) -> float:
    """Kac-Rice density from any kernel jet (exact or Mehler-derived)."""
    return _INV_SQRT_2PI * gaussian_norm_mean(omega_matrix(jet).omega)


@numerics_error_handler
def density(params: ModelParams, x) -> float:
    """
    Expected nodal density F_N(x) of the random eigenfunction.

    Returns 0 for d=1, where V_N is one-dimensional and Omega vanishes.
    """
    return density_from_jet(kernel_jet_exact(params, x))


def densities(params: ModelParams, points) -> np.ndarray:
    """density at many points, sharing the basis tables."""
    basis = enumerate_level(params.d, params.N)
    out = np.empty(len(points))
    start = 0
    for block_start in range(0, len(points), 2048):
        block = points[block_start:block_start + 2048]
        for jet in kernel_jets_exact(params, block, basis=basis):
            out[start] = density_from_jet(jet)
            start += 1
    return out


# ---------------------------------------------------------------------------
# integration over balls
# ---------------------------------------------------------------------------

def _gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def _sector_rules(ball: Ball, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(points, weights) of the product rule on each of the four azimuthal quadrants."""
    c, R, d = ball.center_array, ball.radius, ball.d
    r, wr = _gauss_legendre(n, 0.0, R)
    rules = []
    for k in range(4):
        phi, wphi = _gauss_legendre(n, 0.5 * math.pi * k, 0.5 * math.pi * (k + 1))
        if d == 2:
            rr, pp = np.meshgrid(r, phi, indexing="ij")
            pts = np.stack([rr * np.cos(pp), rr * np.sin(pp)], axis=-1).reshape(-1, 2)
            w = (np.outer(wr * r, wphi)).reshape(-1)
        else:
            theta, wtheta = _gauss_legendre(n, 0.0, math.pi)
            rr, tt, pp = np.meshgrid(r, theta, phi, indexing="ij")
            st = np.sin(tt)
            pts = np.stack([rr * st * np.cos(pp), rr * st * np.sin(pp), rr * np.cos(tt)], axis=-1).reshape(-1, 3)
            w = (wr[:, None, None] * r[:, None, None] ** 2
                 * (wtheta * np.sin(theta))[None, :, None] * wphi[None, None, :]).reshape(-1)
        rules.append((pts + c, w))
    return rules


def integrate_over_ball(func: Callable[[np.ndarray], np.ndarray], ball: Ball, quad_order: int = 16) -> BallIntegral:
    """
    Integrate a vectorized function over a ball in d=2 or d=3.

    Gauss-Legendre in (r, angles) centred on the ball, four azimuthal sectors;
    the error estimate is |I(2n) - I(n)| and the value is I(2n).
    """
    if ball.d not in (2, 3):
        raise DomainError(f"ball integration supports d=2 and d=3, got d={ball.d}")
    if quad_order < 2:
        raise DomainError("quad_order must be at least 2")

    def sectors(n):
        return [math.fsum(w * func(pts)) for pts, w in _sector_rules(ball, n)]

    coarse = math.fsum(sectors(quad_order))
    fine_sectors = sectors(2 * quad_order)
    fine = math.fsum(fine_sectors)
    return BallIntegral(value=fine, error_estimate=abs(fine - coarse),
                        quad_order=2 * quad_order, sectors=tuple(fine_sectors))


def ball_radial_range(ball: Ball) -> tuple[float, float]:
    """min and max of |x| over the closed ball."""
    dist = float(np.linalg.norm(ball.center_array))
    return max(dist - ball.radius, 0.0), dist + ball.radius


def check_ball_admissible(params: ModelParams, ball: Ball, allow_caustic: bool = False) -> bool:
    """
    Raise DomainError if the ball meets the origin disk; for the caustic band,
    raise unless allow_caustic. Returns True when the ball meets the band.
    """
    if ball.d != params.d:
        raise DomainError(f"ball dimension {ball.d} does not match d={params.d}")
    r_min, r_max = ball_radial_range(ball)
    origin_radius = config.ORIGIN_FACTOR * params.h
    if r_min < origin_radius:
        raise DomainError(f"ball meets the origin exclusion |x| < {origin_radius:.4g}")

    width = config.CAUSTIC_KAPPA * params.h ** (2.0 / 3.0)
    band_lo = math.sqrt(max(2.0 * params.E - width, 0.0))
    band_hi = math.sqrt(2.0 * params.E + width)
    meets_band = r_min < band_hi and r_max > band_lo
    if meets_band and not allow_caustic:
        raise DomainError(
            f"ball meets the caustic band {band_lo:.4g} < |x| < {band_hi:.4g}; pass allow_caustic=True to integrate anyway"
        )
    if meets_band:
        logger.warning("Integrating across the caustic band %.4g < |x| < %.4g", band_lo, band_hi)
    return meets_band


@numerics_error_handler
def density_integral_ball(params: ModelParams, ball: Ball, quad_order: int = 16,
                          allow_caustic: bool = False) -> BallIntegral:
    """
    Expected nodal measure in a ball, int_B F_N.

    Raises
    ------
    DomainError
        For d=1 (rank-one eigenspace; use nodal_mc.count_zeros_1d), d > 3, or a
        ball meeting the origin disk or (unless allow_caustic) the caustic band.
    """
    if params.d == 1:
        raise DomainError("d=1 has a one-dimensional eigenspace; Kac-Rice degenerates, use count_zeros_1d")
    check_ball_admissible(params, ball, allow_caustic)
    result = integrate_over_ball(lambda pts: densities(params, pts), ball, quad_order)
    logger.info("int_B F over B(%.3g, %s): %.10g (+/- %.2e)",
                ball.radius, ball.center, result.value, result.error_estimate)
    return result
