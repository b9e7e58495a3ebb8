import io
import logging
import math

import numpy as np
import pytest

from hermite_nodal.ensemble import (enumerate_level, evaluate_field, evaluate_grid_2d, level_dimension,
                                    read_coefficients, sample_eigenfunction, standard_normals,
                                    substream_seed, with_coefficients, write_coefficients)
from hermite_nodal.errors import CapacityError, DomainError
from hermite_nodal.hermite_core import ModelParams, phi_alpha, phi_alpha_grad
from hermite_nodal.projector import kernel_offdiag_exact


@pytest.mark.parametrize("d, N, size", [(1, 7, 1), (2, 9, 10), (3, 2, 6), (3, 80, 3321)])
def test_level_dimension(d, N, size):
    assert level_dimension(d, N) == size
    basis = enumerate_level(d, N)
    assert basis.size == size
    assert np.all(basis.indices.sum(axis=1) == N)
    assert len({tuple(row) for row in basis.indices}) == size


def test_enumeration_is_descending_lexicographic():
    basis = enumerate_level(3, 2)
    expected = [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
    assert [tuple(row) for row in basis.indices] == expected


def test_enumeration_errors(caplog):
    with pytest.raises(CapacityError):
        enumerate_level(3, 10, capacity=10)
    with caplog.at_level(logging.ERROR):
        with pytest.raises(DomainError):
            enumerate_level(0, 3)
    assert "Error in enumerate_level" in caplog.text


def test_normals_depend_only_on_position():
    long = standard_normals(123, 10)
    np.testing.assert_array_equal(standard_normals(123, 5), long[:5])
    assert not np.array_equal(standard_normals(124, 5), long[:5])


def test_normals_moments():
    z = standard_normals(2024, 200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.02


def test_substream_seeds_are_distinct():
    seeds = {substream_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert substream_seed(7, 3) == substream_seed(7, 3)


def test_sample_is_deterministic_and_frozen():
    params = ModelParams(d=2, E=1.0, N=6)
    a = sample_eigenfunction(params, 42)
    b = sample_eigenfunction(params, 42)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    with pytest.raises(ValueError):
        a.coeffs[0] = 1.0


def test_with_coefficients_checks_length():
    params = ModelParams(d=2, E=1.0, N=3)
    with pytest.raises(DomainError):
        with_coefficients(params, np.ones(3))


def test_evaluate_field_matches_direct_sum(rng):
    params = ModelParams(d=2, E=1.0, N=3)
    f = sample_eigenfunction(params, 11)
    points = rng.uniform(-1.5, 1.5, size=(6, 2))
    values, grads = evaluate_field(f, points, with_gradient=True)
    for x, value, grad in zip(points, values, grads):
        direct = sum(c * phi_alpha(x, alpha, params) for c, alpha in zip(f.coeffs, f.basis.indices))
        direct_grad = sum(c * phi_alpha_grad(x, alpha, params) for c, alpha in zip(f.coeffs, f.basis.indices))
        assert value == pytest.approx(direct, rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(grad, direct_grad, rtol=1e-12, atol=1e-13)


def test_unit_coefficients_give_basis_functions():
    params = ModelParams(d=2, E=1.0, N=5)
    basis = enumerate_level(2, 5)
    x = np.array([0.3, -0.7])
    for k, alpha in enumerate(basis.indices):
        f = with_coefficients(params, np.eye(basis.size)[k])
        assert evaluate_field(f, x)[0] == pytest.approx(phi_alpha(x, alpha, params), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("N", [6, 7])
def test_field_parity(N, rng):
    f = sample_eigenfunction(ModelParams(d=2, E=1.0, N=N), 31)
    points = rng.uniform(-1.5, 1.5, size=(10, 2))
    np.testing.assert_allclose(evaluate_field(f, -points), (-1) ** N * evaluate_field(f, points),
                               rtol=1e-12, atol=1e-14)


def test_gradient_matches_finite_differences(rng):
    params = ModelParams(d=2, E=1.0, N=9)
    f = sample_eigenfunction(params, 8)
    step = 1e-5 * params.h ** 0.5
    for x in rng.uniform(-1.2, 1.2, size=(4, 2)):
        _, grad = evaluate_field(f, x, with_gradient=True)
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            fd = (evaluate_field(f, x + e)[0] - evaluate_field(f, x - e)[0]) / (2 * step)
            assert grad[0, j] == pytest.approx(fd, rel=1e-6, abs=1e-7)


def test_grid_evaluation_matches_pointwise():
    params = ModelParams(d=2, E=1.0, N=8)
    f = sample_eigenfunction(params, 5)
    xs = np.linspace(-1.2, 1.2, 5)
    ys = np.linspace(-0.9, 0.6, 4)
    grid = evaluate_grid_2d(f, xs, ys)
    mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    np.testing.assert_allclose(grid, evaluate_field(f, mesh).reshape(5, 4), rtol=1e-12, atol=1e-14)


def test_grid_evaluation_is_2d_only():
    f = sample_eigenfunction(ModelParams(d=3, E=1.0, N=2), 5)
    with pytest.raises(DomainError):
        evaluate_grid_2d(f, [0.0, 0.1], [0.0, 0.1])


def test_coefficient_dump_layout():
    params = ModelParams(d=2, E=1.5, N=4)
    f = sample_eigenfunction(params, 99)
    buffer = io.BytesIO()
    write_coefficients(f, buffer)
    raw = buffer.getvalue()
    assert len(raw) == 3 * 8 + 8 * f.basis.size
    np.testing.assert_array_equal(np.frombuffer(raw[:24], dtype="<i8"), [2, 4, 99])

    back = read_coefficients(io.BytesIO(raw), E=1.5)
    assert back.params == params
    assert back.seed == 99
    np.testing.assert_array_equal(back.coeffs, f.coeffs)


@pytest.mark.slow
@pytest.mark.statistical
def test_field_covariance_is_the_projector_kernel():
    params = ModelParams(d=2, E=1.0, N=8)
    basis = enumerate_level(2, 8)
    n = 100_000
    coeffs = np.stack([sample_eigenfunction(params, substream_seed(2024, i), basis).coeffs for i in range(n)])

    first = coeffs[:, 0]
    assert abs(first.mean()) < 5 / math.sqrt(n)
    assert abs(first.var() - 1.0) < 5 * math.sqrt(2 / n)

    x, y = np.array([0.4, 0.3]), np.array([0.7, -0.2])
    px = np.array([phi_alpha(x, alpha, params) for alpha in basis.indices])
    py = np.array([phi_alpha(y, alpha, params) for alpha in basis.indices])
    products = (coeffs @ px) * (coeffs @ py)
    stderr = products.std() / math.sqrt(n)
    assert abs(products.mean() - kernel_offdiag_exact(params, x, y)) < 5 * stderr
