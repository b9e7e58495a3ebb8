"""
The covariance kernel Pi_{h,E}(x,y) = E[Phi_N(x) Phi_N(y)] and its diagonal jet.

Two independent routes:

* exact: sum over the eigenspace basis, accumulated with math.fsum;
* Mehler: the level-N Fourier coefficient of the oscillator propagator,

      Pi(x,y) = int_{-pi}^{pi} U_h(t - i eps, x, y) exp(i (t - i eps) E / h) dt / 2pi,

  approximated by the M-node periodic trapezoid rule on the shifted contour.
  The trapezoid rule returns the target level plus the levels N + qM (q >= 1),
  each damped by exp(-eps q M); the alias bound below sums those exactly.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import config
from .ensemble import MultiIndexSet, basis_matrices, enumerate_level
from .errors import AccuracyError, DomainError, RangeError, numerics_error_handler
from .hermite_core import ModelParams

logger = logging.getLogger(__name__)

# sup_u |psi_k(u)| <= CRAMER * pi^(-1/4) for every k
CRAMER = 1.086435
# largest safe argument of exp
_EXP_MAX = 700.0
# cap on eps * E / h for the default contour shift
_DEFAULT_SHIFT_BUDGET = 12.0
# cap on eps * E / h for the saddle shift at forbidden points
_SADDLE_SHIFT_BUDGET = 600.0
# points per basis-matrix block in the exact sums
_JET_BLOCK = 256


class KernelJet(BaseModel):
    """Pi(x,x), d_x Pi|_{y=x} and d_x d_y Pi|_{y=x} at one point."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    pi: float
    grad: np.ndarray
    hess: np.ndarray

    def scaled(self, c2: float) -> "KernelJet":
        """The jet of the kernel c2 * Pi."""
        return KernelJet(x=self.x, pi=c2 * self.pi, grad=c2 * self.grad, hess=c2 * self.hess)


class MehlerQuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    M: int = Field(ge=4)

    @classmethod
    def default(cls, params: ModelParams) -> "MehlerQuadratureSpec":
        epsilon = min(1.0, _DEFAULT_SHIFT_BUDGET / params.energy_ratio)
        return cls(epsilon=epsilon, M=max(256, 16 * params.N))

    @classmethod
    def for_points(cls, params: ModelParams, x, y) -> "MehlerQuadratureSpec":
        """
        The default rule, except that the shift moves to the saddle
        eps = 2 arccosh(r / sqrt(2E)) when the mean radius
        r = sqrt((|x|^2 + |y|^2) / 2) is classically forbidden. On the default
        contour the integrand there is exponentially larger than the kernel and the
        trapezoid sum cancels to roundoff.
        """
        base = cls.default(params)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r2 = 0.5 * float(x @ x + y @ y)
        if r2 <= 2.0 * params.E:
            return base
        saddle = 2.0 * math.acosh(math.sqrt(r2 / (2.0 * params.E)))
        cap = _SADDLE_SHIFT_BUDGET / params.energy_ratio
        return cls(epsilon=max(base.epsilon, min(saddle, cap)), M=base.M)


class MehlerResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    imag: float
    alias_bound: float
    roundoff_estimate: float
    spec: MehlerQuadratureSpec

    @model_validator(mode="after")
    def _finite(self):
        if not math.isfinite(self.value):
            raise RangeError("Mehler quadrature produced a non-finite value")
        return self


def _as_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (d,):
        raise DomainError(f"point must have {d} coordinates, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("point must be finite")
    return x


# ---------------------------------------------------------------------------
# exact sums
# ---------------------------------------------------------------------------

def _jet_from_basis(x: np.ndarray, phi: np.ndarray, dphi: np.ndarray) -> KernelJet:
    d = x.shape[0]
    pi = math.fsum(phi * phi)
    grad = np.array([math.fsum(dphi[j] * phi) for j in range(d)])
    hess = np.empty((d, d))
    for j in range(d):
        for k in range(j, d):
            hess[j, k] = hess[k, j] = math.fsum(dphi[j] * dphi[k])
    return KernelJet(x=x, pi=pi, grad=grad, hess=hess)


@numerics_error_handler
def kernel_jets_exact(params: ModelParams, points, basis: MultiIndexSet | None = None) -> list[KernelJet]:
    """kernel_jet_exact at many points, sharing the per-axis tables."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != params.d or not np.all(np.isfinite(points)):
        raise DomainError(f"points must be finite with {params.d} coordinates")
    basis = basis if basis is not None else enumerate_level(params.d, params.N)
    jets = []
    for start in range(0, points.shape[0], _JET_BLOCK):
        block = points[start:start + _JET_BLOCK]
        phi, dphi = basis_matrices(block, params, basis, with_gradient=True)
        jets.extend(_jet_from_basis(block[i], phi[i], dphi[:, i]) for i in range(block.shape[0]))
    return jets


def kernel_jet_exact(params: ModelParams, x) -> KernelJet:
    """
    Diagonal jet of the projector kernel by direct summation over |alpha| = N.

    Raises
    ------
    CapacityError
        If the eigenspace exceeds the configured cap.
    """
    x = _as_point(x, params.d)
    return kernel_jets_exact(params, x[None, :])[0]


@numerics_error_handler
def kernel_offdiag_exact(params: ModelParams, x, y) -> float:
    """sum_alpha phi_alpha(x) phi_alpha(y); exactly symmetric in (x, y)."""
    x = _as_point(x, params.d)
    y = _as_point(y, params.d)
    basis = enumerate_level(params.d, params.N)
    phi, _ = basis_matrices(np.stack([x, y]), params, basis)
    return math.fsum(phi[0] * phi[1])


def kernel_diag(params: ModelParams, points, basis: MultiIndexSet | None = None) -> np.ndarray:
    """Pi(x,x) at many points (pairwise summation); for integrals over regions."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    basis = basis if basis is not None else enumerate_level(params.d, params.N)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], _JET_BLOCK):
        phi, _ = basis_matrices(points[start:start + _JET_BLOCK], params, basis)
        out[start:start + _JET_BLOCK] = np.sum(phi * phi, axis=1)
    return out


# ---------------------------------------------------------------------------
# Mehler contour quadrature
# ---------------------------------------------------------------------------

def alias_bound(params: ModelParams, spec: MehlerQuadratureSpec, derivative_order: int = 0) -> float:
    """
    Rigorous bound on sum_{q>=1} exp(-eps q M) |D Pi_{N+qM}(x,y)|.

    Uses |phi_alpha| <= h^(-d/4) (CRAMER pi^(-1/4))^d, dim V_n <= (n+1)^(d-1),
    and for each pair of derivatives a factor 2(n+1)/h. With q^p <= e^(p(q-1))
    the tail is a geometric series.
    """
    d, h, N, M, eps = params.d, params.h, params.N, spec.M, spec.epsilon
    if M <= N:
        # levels N - M, N - 2M, ... would alias with growing weights
        return math.inf
    power = (d - 1) + derivative_order
    ratio_exponent = eps * M - power
    if ratio_exponent <= 0:
        return math.inf
    log_amp = (-0.5 * d * math.log(h) + 2 * d * math.log(CRAMER) - 0.5 * d * math.log(math.pi)
               + power * math.log(N + M + 1)
               + derivative_order * math.log(2.0 / h))
    log_first = log_amp - eps * M
    return math.exp(log_first) / (-math.expm1(-ratio_exponent)) if log_first > -_EXP_MAX else 0.0


def _contour(params: ModelParams, spec: MehlerQuadratureSpec) -> np.ndarray:
    if spec.epsilon * params.energy_ratio > _EXP_MAX:
        raise RangeError(
            f"exp(eps E / h) overflows: eps={spec.epsilon}, E/h={params.energy_ratio:.6g}"
        )
    t = -math.pi + 2.0 * math.pi * np.arange(spec.M) / spec.M
    return t - 1j * spec.epsilon


def _log_prefactor(tau: np.ndarray, params: ModelParams) -> np.ndarray:
    """
    log (2 pi i h sin tau)^(-d/2) on the continuous branch.

    i sin tau = e^{i tau} (1 - w^2) / 2 with w = e^{-i tau}, |w| = e^{-eps} < 1,
    so Log(1 - w^2) stays on the principal branch along the whole contour and
    equals log sinh(eps) at t = 0.
    """
    w2 = np.exp(-2j * tau)
    log_isin = 1j * tau + np.log1p(-w2) - math.log(2.0)
    return -0.5 * params.d * (math.log(2.0 * math.pi * params.h) + log_isin)


def _mehler_samples(params: ModelParams, x: np.ndarray, y: np.ndarray, spec: MehlerQuadratureSpec):
    tau = _contour(params, spec)
    sin_tau = np.sin(tau)
    cot_tau = np.cos(tau) / sin_tau
    phase = 0.5 * (x @ x + y @ y) * cot_tau - (x @ y) / sin_tau + tau * params.E
    exponent = _log_prefactor(tau, params) + 1j * phase / params.h
    return tau, exponent, np.exp(exponent)


def _roundoff(exponent: np.ndarray, samples: np.ndarray, M: int) -> float:
    # exp(z) carries a relative error of about eps |z|
    return float(np.finfo(float).eps * np.sum((1.0 + np.abs(exponent)) * np.abs(samples)) / M)


def _quadrature(params: ModelParams, x: np.ndarray, y: np.ndarray, spec: MehlerQuadratureSpec):
    _, exponent, samples = _mehler_samples(params, x, y, spec)
    total = np.sum(samples) / spec.M
    return float(total.real), float(total.imag), _roundoff(exponent, samples, spec.M)


def _check_alias(bound: float, value: float, rtol: float) -> None:
    scale = max(abs(value), config.DEGENERATE_PI)
    if bound > rtol * scale:
        raise AccuracyError(
            f"alias bound {bound:.3e} exceeds tolerance {rtol:.1e} x {scale:.3e}; increase M or epsilon",
            bound=bound,
        )


def _check_roundoff(roundoff: float, scale: float) -> None:
    scale = max(scale, config.DEGENERATE_PI)
    if roundoff > config.ROUNDOFF_RTOL * scale:
        raise AccuracyError(
            f"quadrature roundoff {roundoff:.3e} exceeds {config.ROUNDOFF_RTOL:.1e} x {scale:.3e}; "
            "move epsilon towards the saddle",
            bound=roundoff,
        )


def _check_imag(imag: float, scale: float) -> None:
    if abs(imag) > config.ROUNDOFF_RTOL * max(scale, config.DEGENERATE_PI):
        raise AccuracyError(f"imaginary residue {imag:.3e} too large relative to {scale:.3e}", bound=abs(imag))


def _diagonal_scale(params: ModelParams, x: np.ndarray) -> float:
    value, _, roundoff = _quadrature(params, x, x, MehlerQuadratureSpec.for_points(params, x, x))
    _check_roundoff(roundoff, abs(value))
    return abs(value)


@numerics_error_handler
def kernel_mehler_quadrature(params: ModelParams, x, y, spec: MehlerQuadratureSpec | None = None,
                             rtol: float = 1e-12) -> MehlerResult:
    """
    Pi(x,y) from the shifted-contour Mehler integral.

    Parameters
    ----------
    params : ModelParams
    x, y : array_like
        Points in R^d.
    spec : MehlerQuadratureSpec, optional
        Contour shift and node count; defaults to ``MehlerQuadratureSpec.for_points(params, x, y)``.
    rtol : float
        Required relative size of the alias bound.

    Returns
    -------
    MehlerResult
        Real part, the imaginary residue, the alias bound and a roundoff estimate.

    Raises
    ------
    AccuracyError
        If the alias bound exceeds ``rtol`` relative to the value, or the
        roundoff or imaginary residue exceeds ``ROUNDOFF_RTOL`` relative to
        the kernel scale: |Pi(x,x)| on the diagonal, sqrt(Pi(x,x) Pi(y,y)) off it.
    RangeError
        If exp(eps E / h) overflows.
    """
    x = _as_point(x, params.d)
    y = _as_point(y, params.d)
    spec = spec if spec is not None else MehlerQuadratureSpec.for_points(params, x, y)

    value, imag, roundoff = _quadrature(params, x, y, spec)
    scale = abs(value)
    if not np.array_equal(x, y):
        # Pi(x,y) may vanish off the diagonal
        scale = max(scale, math.sqrt(_diagonal_scale(params, x) * _diagonal_scale(params, y)))

    bound = alias_bound(params, spec)
    logger.debug("Mehler quadrature eps=%.3g M=%d alias<=%.2e roundoff~%.2e", spec.epsilon, spec.M, bound, roundoff)

    _check_alias(bound, value, rtol)
    _check_roundoff(roundoff, scale)
    _check_imag(imag, scale)
    return MehlerResult(value=value, imag=imag, alias_bound=bound, roundoff_estimate=roundoff, spec=spec)


@numerics_error_handler
def kernel_jet_mehler(params: ModelParams, x, spec: MehlerQuadratureSpec | None = None,
                      rtol: float = 1e-10) -> KernelJet:
    """
    Diagonal jet from the Mehler integral, differentiating the phase under the integral:

        d_{x_j} S |_{y=x} = d_{y_j} S |_{y=x} = -x_j tan(tau/2),   d_{x_j} d_{y_k} S = -delta_jk / sin(tau).
    """
    x = _as_point(x, params.d)
    spec = spec if spec is not None else MehlerQuadratureSpec.for_points(params, x, x)
    h = params.h

    tau, exponent, samples = _mehler_samples(params, x, x, spec)
    half_tan = np.tan(0.5 * tau)
    inv_sin = 1.0 / np.sin(tau)

    pi = float((np.sum(samples) / spec.M).real)
    grad_weight = float((np.sum(1j / h * (-half_tan) * samples) / spec.M).real)
    grad = grad_weight * x
    diag_weight = float((np.sum(-1j / h * inv_sin * samples) / spec.M).real)
    outer_weight = float((np.sum(-(half_tan ** 2) / h ** 2 * samples) / spec.M).real)
    hess = diag_weight * np.eye(params.d) + outer_weight * np.outer(x, x)

    _check_alias(alias_bound(params, spec, derivative_order=2), pi, rtol)
    _check_roundoff(_roundoff(exponent, samples, spec.M), abs(pi))
    return KernelJet(x=x, pi=pi, grad=grad, hess=hess)
