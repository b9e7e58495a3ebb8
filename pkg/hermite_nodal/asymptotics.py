"""
Closed-form semiclassical predictions.

Allowed region A_E = {|x|^2 < 2E}: density ~ h^-1, Omega isotropic.
Forbidden region F_E = {|x|^2 > 2E}: density ~ h^-1/2, Omega of rank d-1 with null vector x/|x|.

The forbidden-region results come from stationary phase of the diagonal Mehler
integrand at the imaginary saddle t0 = -i beta, cosh(beta/2) = |x| / sqrt(2E).
"""

import logging
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from . import config
from .errors import DegeneratePhase, DomainError
from .hermite_core import ModelParams

logger = logging.getLogger(__name__)

OMEGA_ALLOWED_PROVENANCE = "isotropic trace (2E-|x|^2)/d"


class RegionTag(str, Enum):
    ALLOWED = "Allowed"
    FORBIDDEN = "Forbidden"
    CAUSTIC_BAND = "CausticBand"
    ORIGIN = "Origin"


class PhaseJet1D(BaseModel):
    """Amplitude and phase derivatives at a non-degenerate critical point t0."""
    model_config = ConfigDict(frozen=True)

    t0: complex
    a0: complex
    a1: complex
    a2: complex
    s2: complex
    s3: complex
    s4: complex

    @model_validator(mode="after")
    def _non_degenerate(self):
        if self.s2 == 0:
            raise DegeneratePhase("S''(t0) = 0: critical point is degenerate")
        return self


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^(k+1); sphere_area(0) = 2."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def allowed_constant(d: int) -> float:
    """c_d = Gamma((d+1)/2) / (sqrt(d pi) Gamma(d/2))."""
    return math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2)) / math.sqrt(d * math.pi)


def forbidden_constant(d: int) -> float:
    """C_d = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)); zero for d=1 where Gamma((d-1)/2) has a pole."""
    if d == 1:
        return 0.0
    return math.exp(math.lgamma(d / 2) - math.lgamma((d - 1) / 2)) / math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

def _radius(params: ModelParams, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (params.d,) or not np.all(np.isfinite(x)):
        raise DomainError(f"point must be finite with {params.d} coordinates")
    return float(np.linalg.norm(x))


def classify_region(params: ModelParams, x) -> RegionTag:
    r = _radius(params, x)
    if r < config.ORIGIN_FACTOR * params.h:
        return RegionTag.ORIGIN
    gap = r * r - 2.0 * params.E
    if abs(gap) < config.CAUSTIC_KAPPA * params.h ** (2.0 / 3.0):
        return RegionTag.CAUSTIC_BAND
    return RegionTag.ALLOWED if gap < 0 else RegionTag.FORBIDDEN


def _require_allowed(params: ModelParams, x, op: str) -> float:
    r = _radius(params, x)
    if r * r >= 2.0 * params.E:
        raise DomainError(f"{op}: |x| = {r:.6g} is not in the allowed region |x|^2 < {2 * params.E:.6g}")
    if r < config.ORIGIN_FACTOR * params.h:
        raise DomainError(f"{op}: |x| = {r:.6g} lies in the origin exclusion |x| < {config.ORIGIN_FACTOR * params.h:.4g}")
    return r


def _require_forbidden(params: ModelParams, x, op: str) -> float:
    r = _radius(params, x)
    if r * r <= 2.0 * params.E:
        raise DomainError(f"{op}: |x| = {r:.6g} is not in the forbidden region |x|^2 > {2 * params.E:.6g}")
    return r


# ---------------------------------------------------------------------------
# forbidden saddle
# ---------------------------------------------------------------------------

def saddle_beta(params: ModelParams, x) -> float:
    """beta = 2 arccosh(|x| / sqrt(2E)) > 0."""
    r = _require_forbidden(params, x, "saddle_beta")
    return 2.0 * math.acosh(r / math.sqrt(2.0 * params.E))


def forbidden_exponent(params: ModelParams, x) -> float:
    """g(x) = E beta - |x| sqrt(|x|^2 - 2E) < 0; Pi(x,x) ~ exp(g/h)."""
    r = _require_forbidden(params, x, "forbidden_exponent")
    return params.E * saddle_beta(params, x) - r * math.sqrt(r * r - 2.0 * params.E)


# ---------------------------------------------------------------------------
# leading densities
# ---------------------------------------------------------------------------

def density_allowed_leading(params: ModelParams, x) -> float:
    r = _require_allowed(params, x, "density_allowed_leading")
    return allowed_constant(params.d) * math.sqrt(2.0 * params.E - r * r) / params.h


def density_forbidden_leading(params: ModelParams, x) -> float:
    r = _require_forbidden(params, x, "density_forbidden_leading")
    E = params.E
    return (forbidden_constant(params.d) * math.sqrt(E)
            / (math.sqrt(r) * (r * r - 2.0 * E) ** 0.25 * math.sqrt(params.h)))


def density_leading(params: ModelParams, points) -> np.ndarray:
    """
    Piecewise leading density at many points: the allowed formula inside the
    caustic, the forbidden formula outside, 0 on it. No exclusion checks.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    E, h, d = params.E, params.h, params.d
    r2 = np.sum(pts * pts, axis=1)
    gap = r2 - 2.0 * E
    out = np.zeros(r2.shape)
    inside = gap < 0
    outside = gap > 0
    out[inside] = allowed_constant(d) * np.sqrt(-gap[inside]) / h
    if d > 1:
        out[outside] = (forbidden_constant(d) * math.sqrt(E)
                        / (np.sqrt(np.sqrt(r2[outside])) * gap[outside] ** 0.25 * math.sqrt(h)))
    return out


def weyl_zero_count(params: ModelParams) -> float:
    """int over the allowed interval of h^-1 c_1 sqrt(2E - x^2) dx = E/h, for d=1."""
    if params.d != 1:
        raise DomainError("weyl_zero_count is defined for d=1")
    return allowed_constant(1) * math.pi * params.E / params.h


# ---------------------------------------------------------------------------
# leading Omega matrices
# ---------------------------------------------------------------------------

def omega_forbidden_leading(params: ModelParams, x) -> np.ndarray:
    r = _require_forbidden(params, x, "omega_forbidden_leading")
    xhat = np.asarray(x, dtype=float).reshape(-1) / r
    scale = params.E / (r * math.sqrt(r * r - 2.0 * params.E) * params.h)
    projector = np.eye(params.d) - np.outer(xhat, xhat)
    return scale * projector


def omega_allowed_leading(params: ModelParams, x) -> tuple[np.ndarray, str]:
    """
    h^-2 (2E - |x|^2)/d times the identity, with the tag naming this constant.

    The trace constant 1/d is the one that reproduces c_d through the
    Gaussian-norm identity; omega_allowed_alternative carries the other candidate.
    """
    r = _require_allowed(params, x, "omega_allowed_leading")
    value = (2.0 * params.E - r * r) / (params.d * params.h ** 2)
    return value * np.eye(params.d), OMEGA_ALLOWED_PROVENANCE


def omega_allowed_alternative(params: ModelParams, x) -> np.ndarray:
    """Alternative allowed constant omega_{d-2} / (d omega_{d-1}) in place of 1/d."""
    if params.d < 2:
        raise DomainError("omega_allowed_alternative needs d >= 2")
    r = _require_allowed(params, x, "omega_allowed_alternative")
    const = sphere_area(params.d - 2) / (params.d * sphere_area(params.d - 1))
    return const * (2.0 * params.E - r * r) / params.h ** 2 * np.eye(params.d)


# ---------------------------------------------------------------------------
# leading Pi(x,x)
# ---------------------------------------------------------------------------

def pi_diag_allowed_leading(params: ModelParams, x) -> float:
    """(2 pi)^-d h^-(d-1) (2E - |x|^2)^(d/2 - 1) omega_{d-1}; 1/(2 pi h) for d=2."""
    r = _require_allowed(params, x, "pi_diag_allowed_leading")
    d, h = params.d, params.h
    return ((2.0 * math.pi) ** (-d) * h ** (-(d - 1))
            * (2.0 * params.E - r * r) ** (d / 2 - 1) * sphere_area(d - 1))


def pi_diag_forbidden_leading(params: ModelParams, x) -> tuple[float, float]:
    """
    log|Pi(x,x)| at leading order, and its sign (always +1).

    (2 pi)^-(d+1)/2 h^-(d-1)/2 |x|^1/2 e^(g/h) / (E^1/2 (|x|^2 - 2E)^1/4 sinh(beta)^(d/2))
    """
    r = _require_forbidden(params, x, "pi_diag_forbidden_leading")
    d, h, E = params.d, params.h, params.E
    beta = saddle_beta(params, x)
    log_value = (-(d + 1) / 2 * math.log(2.0 * math.pi)
                 - (d - 1) / 2 * math.log(h)
                 + 0.5 * math.log(r)
                 + forbidden_exponent(params, x) / h
                 - 0.5 * math.log(E)
                 - 0.25 * math.log(r * r - 2.0 * E)
                 - d / 2 * math.log(math.sinh(beta)))
    return log_value, 1.0


# ---------------------------------------------------------------------------
# stationary phase
# ---------------------------------------------------------------------------

def stationary_phase_1d(jet: PhaseJet1D, h: float) -> tuple[complex, complex]:
    """
    int a(t) exp(i S(t)/h) dt near t0, without the factor exp(i S(t0)/h).

    Returns (leading, with_subleading) where

        C = sqrt(2 pi h) (-i S'')^(-1/2)           (principal branch)
        leading = C a
        with_subleading = C (a + (h/i) [-a''/(2S'') + S'''' a/(8S''^2)
                                        + S''' a'/(2S''^2) - 5 S'''^2 a/(24 S''^3)])

    For real S'' the prefactor is exp(i pi/4 sgn S'') sqrt(2 pi h / |S''|).
    """
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    s2, s3, s4 = jet.s2, jet.s3, jet.s4
    a0, a1, a2 = jet.a0, jet.a1, jet.a2

    prefactor = math.sqrt(2.0 * math.pi * h) / complex(np.sqrt(complex(-1j * s2)))
    bracket = (-a2 / (2 * s2)
               + s4 * a0 / (8 * s2 ** 2)
               + s3 * a1 / (2 * s2 ** 2)
               - 5 * s3 ** 2 * a0 / (24 * s2 ** 3))
    leading = prefactor * a0
    return leading, prefactor * (a0 + (h / 1j) * bracket)


def mehler_forbidden_jet(params: ModelParams, x) -> PhaseJet1D:
    """
    Jet of the diagonal Mehler integrand at t0 = -i beta.

    Phase S(t,x,x) + tE = -|x|^2 tan(t/2) + tE; with T = tan(t/2):
        S'   = -|x|^2 (1+T^2)/2 + E
        S''  = -|x|^2 T (1+T^2)/2
        S''' = -|x|^2 (1+T^2)(1+3T^2)/4
        S''''= -|x|^2 T (1+T^2)(2+3T^2)/2
    Amplitude a(t) = (2 pi h)^(-d/2) (i sin t)^(-d/2) / (2 pi).
    """
    r = _require_forbidden(params, x, "mehler_forbidden_jet")
    d, h = params.d, params.h
    beta = saddle_beta(params, x)
    t0 = complex(0.0, -beta)
    T = complex(np.tan(t0 / 2))
    q = r * r
    one_t2 = 1 + T * T

    s2 = -q * T * one_t2 / 2
    s3 = -q * one_t2 * (1 + 3 * T * T) / 4
    s4 = -q * T * one_t2 * (2 + 3 * T * T) / 2

    # i sin(-i beta) = sinh(beta) > 0: the principal power is the continuous one
    a0 = (2 * math.pi * h) ** (-d / 2) * math.sinh(beta) ** (-d / 2) / (2 * math.pi)
    cot = complex(np.cos(t0) / np.sin(t0))
    csc2 = complex(1 / np.sin(t0) ** 2)
    a1 = a0 * (-d / 2) * cot
    a2 = a0 * ((d * d / 4) * cot * cot + (d / 2) * csc2)
    return PhaseJet1D(t0=t0, a0=a0, a1=a1, a2=a2, s2=s2, s3=s3, s4=s4)


def omega_forbidden_from_phase(params: ModelParams, x) -> np.ndarray:
    """
    Leading Omega from the critical value V(x,y) of the Mehler phase:

        Omega ~ (i/h) d_x d_y V = (i/h) [S_xy - S_xt S_yt / S_tt]   at t0 = -i beta,

    with S_xy = -delta/sin t and S_xt = S_yt = -x / (2 cos^2(t/2)) on the diagonal.
    """
    r = _require_forbidden(params, x, "omega_forbidden_from_phase")
    x = np.asarray(x, dtype=float).reshape(-1)
    jet = mehler_forbidden_jet(params, x)
    t0 = jet.t0
    s_xy = -1.0 / complex(np.sin(t0))
    s_xt = -x / (2.0 * complex(np.cos(t0 / 2)) ** 2)
    omega = (1j / params.h) * (s_xy * np.eye(params.d) - np.outer(s_xt, s_xt) / jet.s2)
    logger.debug("phase-derived Omega at |x|=%.4g: imaginary residue %.2e", r, float(np.max(np.abs(omega.imag))))
    return omega.real
