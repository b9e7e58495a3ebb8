import math

import numpy as np
import pytest
from pydantic import ValidationError

from hermite_nodal.asymptotics import (OMEGA_ALLOWED_PROVENANCE, PhaseJet1D, RegionTag, allowed_constant,
                                       classify_region, density_allowed_leading, density_forbidden_leading,
                                       density_leading, forbidden_constant, forbidden_exponent,
                                       mehler_forbidden_jet, omega_allowed_leading, omega_allowed_alternative,
                                       omega_forbidden_from_phase, omega_forbidden_leading,
                                       pi_diag_allowed_leading, pi_diag_forbidden_leading, saddle_beta,
                                       sphere_area, stationary_phase_1d, weyl_zero_count)
from hermite_nodal.errors import DomainError
from hermite_nodal.hermite_core import ModelParams
from hermite_nodal.kacrice import gaussian_norm_mean

from .conftest import random_direction

INV_SQRT_2PI = 1 / math.sqrt(2 * math.pi)


@pytest.fixture
def params_h002():
    return ModelParams(d=2, E=1.0, N=49)


def test_region_classification(params_h002):
    assert params_h002.h == pytest.approx(0.02)
    assert classify_region(params_h002, [1.0, 0.0]) is RegionTag.ALLOWED
    assert classify_region(params_h002, [math.sqrt(2), 0.0]) is RegionTag.CAUSTIC_BAND
    assert classify_region(params_h002, [0.0, 0.0]) is RegionTag.ORIGIN
    assert classify_region(params_h002, [1.8, 0.0]) is RegionTag.FORBIDDEN
    assert RegionTag.CAUSTIC_BAND.value == "CausticBand"


def test_constants():
    assert allowed_constant(1) == pytest.approx(1 / math.pi, rel=1e-15)
    assert allowed_constant(2) == pytest.approx(1 / (2 * math.sqrt(2)), rel=1e-15)
    assert forbidden_constant(2) == pytest.approx(1 / math.pi, rel=1e-15)
    assert forbidden_constant(1) == 0.0
    assert sphere_area(0) == pytest.approx(2)
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


def test_saddle(params_h002, rng):
    x = [math.sqrt(2) * math.cosh(0.5), 0.0]
    assert saddle_beta(params_h002, x) == pytest.approx(1.0, rel=1e-14)
    assert saddle_beta(params_h002, [math.sqrt(2) * (1 + 1e-10), 0.0]) < 1e-4
    for _ in range(10):
        r = rng.uniform(1.45, 3.0)
        beta = saddle_beta(params_h002, r * random_direction(rng, 2))
        assert abs(math.cosh(beta / 2) - r / math.sqrt(2)) < 1e-14 * r
        assert math.sinh(beta) == pytest.approx(r * math.sqrt(r * r - 2), rel=1e-13)
    with pytest.raises(DomainError):
        saddle_beta(params_h002, [1.0, 0.0])


def test_forbidden_exponent_is_negative(params_h002):
    assert forbidden_exponent(params_h002, [2.0, 0.0]) == pytest.approx(2 * math.acosh(math.sqrt(2)) - 2 * math.sqrt(2))
    assert forbidden_exponent(params_h002, [2.0, 0.0]) == pytest.approx(-1.0657, abs=1e-3)
    for r in np.linspace(1.42, 5.0, 20):
        assert forbidden_exponent(params_h002, [r, 0.0]) < 0


def test_leading_densities_by_region(params_h002):
    with pytest.raises(DomainError):
        density_allowed_leading(params_h002, [1.8, 0.0])
    with pytest.raises(DomainError):
        density_allowed_leading(params_h002, [0.05, 0.0])
    with pytest.raises(DomainError):
        density_forbidden_leading(params_h002, [1.0, 0.0])
    assert density_forbidden_leading(ModelParams(d=1, E=1.0, N=10), [2.0]) == 0.0
    assert density_allowed_leading(params_h002, [math.sqrt(2) - 1e-12, 0.0]) < 1e-3


def test_leading_densities_decrease_with_radius(params_h002):
    allowed = [density_allowed_leading(params_h002, [r, 0.0]) for r in np.linspace(0.3, 1.4, 100)]
    forbidden = [density_forbidden_leading(params_h002, [r, 0.0]) for r in np.linspace(1.45, 4.0, 100)]
    assert np.all(np.diff(allowed) < 0)
    assert np.all(np.diff(forbidden) < 0)


def test_piecewise_density_matches_branches(params_h002):
    points = np.array([[0.8, 0.0], [0.0, 1.8]])
    np.testing.assert_allclose(density_leading(params_h002, points), [
        density_allowed_leading(params_h002, points[0]),
        density_forbidden_leading(params_h002, points[1]),
    ], rtol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_forbidden_pipeline(rng, d):
    params = ModelParams(d=d, E=1.0, N=30)
    for _ in range(10):
        x = rng.uniform(1.6, 3.0) * random_direction(rng, d)
        via_omega = INV_SQRT_2PI * gaussian_norm_mean(omega_forbidden_leading(params, x))
        assert via_omega == pytest.approx(density_forbidden_leading(params, x), rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_allowed_pipeline(rng, d):
    params = ModelParams(d=d, E=1.0, N=100)
    for _ in range(10):
        x = rng.uniform(0.5, 1.3) * random_direction(rng, d)
        omega, provenance = omega_allowed_leading(params, x)
        assert provenance == OMEGA_ALLOWED_PROVENANCE
        assert INV_SQRT_2PI * gaussian_norm_mean(omega) == pytest.approx(density_allowed_leading(params, x), rel=1e-12)


def test_forbidden_omega_structure():
    params = ModelParams(d=2, E=1.0, N=40)
    x = np.array([2.0, 0.0])
    omega = omega_forbidden_leading(params, x)
    np.testing.assert_allclose(omega @ (x / 2.0), 0.0, atol=1e-14 * np.max(np.abs(omega)))
    assert np.trace(omega) == pytest.approx(41 / (2 * math.sqrt(2)), rel=1e-12)
    assert np.max(np.linalg.eigvalsh(omega)) == pytest.approx(14.4957, abs=1e-4)


def test_omega_from_phase_matches_closed_form(rng):
    for d in (2, 3):
        params = ModelParams(d=d, E=1.0, N=40)
        x = rng.uniform(1.6, 2.5) * random_direction(rng, d)
        expected = omega_forbidden_leading(params, x)
        np.testing.assert_allclose(omega_forbidden_from_phase(params, x), expected,
                                   rtol=0, atol=1e-10 * np.max(np.abs(expected)))


def test_allowed_omega_example():
    params = ModelParams(d=2, E=1.0, N=9)
    omega, _ = omega_allowed_leading(params, [1.0, 0.0])
    np.testing.assert_allclose(omega, 50 * np.eye(2), rtol=1e-12)
    # the alternative constant omega_0 / (2 omega_1) = 1/(2 pi) instead of 1/2
    np.testing.assert_allclose(omega_allowed_alternative(params, [1.0, 0.0]), 100 / (2 * math.pi) * np.eye(2),
                               rtol=1e-12)


def test_allowed_pi_diag():
    params = ModelParams(d=2, E=1.0, N=40)
    for r in (0.5, 0.8, 1.2):
        assert pi_diag_allowed_leading(params, [r, 0.0]) == pytest.approx(1 / (2 * math.pi * params.h), rel=1e-14)
    d3 = ModelParams(d=3, E=1.0, N=40)
    assert pi_diag_allowed_leading(d3, [math.sqrt(2) - 1e-9, 0.0, 0.0]) < 1e-3 * pi_diag_allowed_leading(d3, [1.0, 0, 0])


def test_leading_terms_scale_with_h():
    small, large = ModelParams(d=2, E=1.0, N=40), ModelParams(d=2, E=1.0, N=81)
    ratio = large.h / small.h
    a, f = [0.8, 0.3], [1.5, 1.0]
    cases = [
        (density_allowed_leading, a, -1.0),
        (density_forbidden_leading, f, -0.5),
        (lambda p, x: omega_allowed_leading(p, x)[0][0, 0], a, -2.0),
        (lambda p, x: omega_forbidden_leading(p, x)[0, 1], f, -1.0),
        (pi_diag_allowed_leading, a, -1.0),
    ]
    for func, x, power in cases:
        assert func(large, x) / func(small, x) == pytest.approx(ratio ** power, rel=1e-12)
    log_small, _ = pi_diag_forbidden_leading(small, f)
    log_large, _ = pi_diag_forbidden_leading(large, f)
    g = forbidden_exponent(small, f)
    assert (log_large - g / large.h) - (log_small - g / small.h) == pytest.approx(-0.5 * math.log(ratio), abs=1e-12)


def test_weyl_count():
    for N in (20, 50, 100):
        assert weyl_zero_count(ModelParams(d=1, E=1.0, N=N)) == pytest.approx(N + 0.5, rel=1e-14)
    with pytest.raises(DomainError):
        weyl_zero_count(ModelParams(d=2, E=1.0, N=10))


# ---------------------------------------------------------------------------
# stationary phase
# ---------------------------------------------------------------------------

def gaussian_jet(a2=0.0):
    return PhaseJet1D(t0=0, a0=1, a1=0, a2=a2, s2=1, s3=0, s4=0)


def test_pure_gaussian_is_exact():
    h = 0.37
    leading, full = stationary_phase_1d(gaussian_jet(), h)
    expected = math.sqrt(2 * math.pi * h) * complex(math.cos(math.pi / 4), math.sin(math.pi / 4))
    assert abs(full - expected) < 1e-14
    assert abs(leading - expected) < 1e-14


def test_quadratic_amplitude_is_exact():
    # int (1 + t^2) exp(i t^2 / 2h) dt = C (1 + i h)
    h = 0.01
    _, full = stationary_phase_1d(gaussian_jet(a2=2.0), h)
    prefactor = math.sqrt(2 * math.pi * h) * complex(math.cos(math.pi / 4), math.sin(math.pi / 4))
    assert abs(full - prefactor * (1 + 1j * h)) < 1e-14


def test_subleading_error_is_second_order():
    # a = exp(-t^2): the integral is sqrt(pi / (1 - i/(2h))) exactly
    errors = []
    for h in (1e-2, 1e-3):
        _, full = stationary_phase_1d(gaussian_jet(a2=-2.0), h)
        exact = complex(np.sqrt(math.pi / complex(1, -1 / (2 * h))))
        errors.append(abs(full - exact) / abs(exact))
    assert errors[0] < 1e-3
    assert 100 / 3 < errors[0] / errors[1] < 300


def test_degenerate_phase():
    with pytest.raises(ValidationError, match="degenerate"):
        PhaseJet1D(t0=0, a0=1, a1=0, a2=0, s2=0, s3=1, s4=0)
    with pytest.raises(DomainError):
        stationary_phase_1d(gaussian_jet(), 0.0)


@pytest.mark.parametrize("d, r", [(2, 1.8), (2, 2.5), (3, 1.6)])
def test_forbidden_pi_from_stationary_phase(d, r):
    params = ModelParams(d=d, E=1.0, N=40)
    x = np.zeros(d)
    x[0] = r
    leading, _ = stationary_phase_1d(mehler_forbidden_jet(params, x), params.h)
    assert abs(leading.imag) < 1e-12 * abs(leading.real)
    log_value, sign = pi_diag_forbidden_leading(params, x)
    assert sign == 1.0
    assert math.log(leading.real) + forbidden_exponent(params, x) / params.h == pytest.approx(log_value, abs=1e-12)
