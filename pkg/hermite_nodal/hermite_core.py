"""
Normalized Hermite functions and the h-scaled oscillator eigenfunctions.

The recurrence runs on the Gaussian-weighted, L2-normalized functions

    psi_0(u) = pi^(-1/4) exp(-u^2/2)
    psi_{k+1}(u) = sqrt(2/(k+1)) u psi_k(u) - sqrt(k/(k+1)) psi_{k-1}(u)

never on bare polynomials. The Gaussian factor is carried as a separate
log-scale so that large |u| (where psi_0 itself underflows) still climbs
into the oscillatory range of high degrees without losing digits.
"""

import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from .errors import DomainError

logger = logging.getLogger(__name__)

# values below this are flushed to exact zero
UNDERFLOW_FLUSH = 1e-300
# mantissa rescaling threshold inside the recurrence
_RESCALE_AT = 1e150
_LOG_PI_QUARTER = 0.25 * math.log(math.pi)


class ModelParams(BaseModel):
    """The level (d, E, N); h = E/(N + d/2) is the only semiclassical scale."""
    model_config = ConfigDict(frozen=True)

    d: int = Field(ge=1)
    E: float = Field(gt=0)
    N: int = Field(ge=0)

    @computed_field
    @property
    def h(self) -> float:
        return self.E / (self.N + self.d / 2)

    @property
    def energy_ratio(self) -> float:
        """E/h = N + d/2."""
        return self.N + self.d / 2

    def with_level(self, N: int) -> "ModelParams":
        return ModelParams(d=self.d, E=self.E, N=N)


class HermiteTable(BaseModel):
    """psi_0..psi_K and their derivatives at u (scalar or array); leading axis is the degree."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u: np.ndarray
    K: int
    values: np.ndarray
    derivs: np.ndarray


def _check_finite(u: np.ndarray) -> None:
    if not np.all(np.isfinite(u)):
        raise DomainError("Hermite argument must be finite")


def hermite_table(u, K: int) -> HermiteTable:
    """
    Evaluate psi_k(u) and psi_k'(u) for k = 0..K.

    Parameters
    ----------
    u : float or array_like
        Evaluation point(s). Must be finite.
    K : int
        Maximum degree, K >= 0.

    Returns
    -------
    HermiteTable
        ``values[k]`` and ``derivs[k]`` have the shape of ``u``.

    Raises
    ------
    DomainError
        If ``u`` is not finite or ``K`` is negative.
    """
    if K < 0:
        raise DomainError(f"max degree must be non-negative, got {K}")
    u = np.asarray(u, dtype=float)
    _check_finite(u)

    values = np.empty((K + 1,) + u.shape)
    # mantissas m_k with psi_k = m_k * exp(log_scale)
    log_scale = -0.5 * u * u - _LOG_PI_QUARTER
    m_prev = np.zeros_like(u)
    m_cur = np.ones_like(u)

    with np.errstate(divide="ignore", under="ignore"):
        values[0] = np.exp(log_scale)
        for k in range(K):
            m_next = math.sqrt(2.0 / (k + 1)) * u * m_cur - math.sqrt(k / (k + 1)) * m_prev
            m_prev, m_cur = m_cur, m_next

            big = np.abs(m_cur) > _RESCALE_AT
            if np.any(big):
                shift = np.where(big, np.log(np.abs(m_cur)), 0.0)
                factor = np.exp(-shift)
                m_cur = m_cur * factor
                m_prev = m_prev * factor
                log_scale = log_scale + shift

            values[k + 1] = np.sign(m_cur) * np.exp(np.log(np.abs(m_cur)) + log_scale)

    values[np.abs(values) < UNDERFLOW_FLUSH] = 0.0

    derivs = np.empty_like(values)
    derivs[0] = -u * values[0]
    if K >= 1:
        k = np.arange(1, K + 1).reshape((-1,) + (1,) * u.ndim)
        derivs[1:] = np.sqrt(2.0 * k) * values[:-1] - u * values[1:]

    return HermiteTable(u=u, K=K, values=values, derivs=derivs)


def phi_alpha(x: Sequence[float], alpha: Sequence[int], params: ModelParams) -> float:
    """h^(-d/4) prod_j psi_{alpha_j}(x_j / sqrt(h)); alpha need not lie on level N."""
    x = np.asarray(x, dtype=float)
    alpha = tuple(int(a) for a in alpha)
    if x.shape != (params.d,) or len(alpha) != params.d:
        raise DomainError(f"point and multi-index must have length d={params.d}")
    if min(alpha) < 0:
        raise DomainError(f"multi-index entries must be non-negative, got {alpha}")
    _check_finite(x)

    sqrt_h = math.sqrt(params.h)
    value = params.h ** (-params.d / 4)
    for xj, aj in zip(x, alpha):
        value *= float(hermite_table(xj / sqrt_h, aj).values[aj])
    return value


def phi_alpha_grad(x: Sequence[float], alpha: Sequence[int], params: ModelParams) -> np.ndarray:
    """Gradient of phi_alpha at x."""
    x = np.asarray(x, dtype=float)
    sqrt_h = math.sqrt(params.h)
    tables = [hermite_table(xj / sqrt_h, aj) for xj, aj in zip(x, alpha)]
    vals = np.array([float(t.values[a]) for t, a in zip(tables, alpha)])
    ders = np.array([float(t.derivs[a]) for t, a in zip(tables, alpha)]) / sqrt_h

    grad = np.empty(params.d)
    for j in range(params.d):
        grad[j] = ders[j] * np.prod(np.delete(vals, j))
    return params.h ** (-params.d / 4) * grad
