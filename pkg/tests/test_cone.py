#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.cone import (
    QuadraticForm,
    garding_constant,
    get_quadform,
    kernel_at,
    q_vanishes_on_cone,
    sample_cone,
    sphere_sample_points,
)
from src.errors import ConfigError, HypothesisViolationError, InvalidCovectorError, InvalidParameterError
from src.grid import GridField, TorusGrid
from src.symbols import get_symbol


def projector_onto(basis):
    return basis.T @ basis


def test_divcurl_kernel_at_e1():
    _, p = get_symbol("divcurl6", 3)
    sample = kernel_at(p, np.zeros(3), [1.0, 0.0, 0.0])
    assert sample.dimension == 3
    expected = np.zeros((3, 6))
    expected[0, 1] = expected[1, 2] = expected[2, 3] = 1.0
    np.testing.assert_allclose(projector_onto(sample.real_kernel_basis), projector_onto(expected), atol=1e-12)


def test_elliptic_and_injective_kernels_are_trivial():
    _, lap = get_symbol("laplace", 2)
    assert kernel_at(lap, np.zeros(2), [0.6, 0.8]).dimension == 0
    _, proj = get_symbol("proj_first", 2)
    sample = kernel_at(proj, np.zeros(2), [0.0, 1.0])
    assert sample.dimension == 1
    np.testing.assert_allclose(np.abs(sample.real_kernel_basis[0]), [0.0, 1.0], atol=1e-12)


def test_kernel_at_rejects_zero_covector():
    _, proj = get_symbol("proj_first", 2)
    with pytest.raises(InvalidCovectorError):
        kernel_at(proj, np.zeros(2), [0.0, 0.0])


def test_sample_cone():
    _, lap = get_symbol("laplace", 3)
    assert sample_cone(lap, np.zeros((1, 3)), 64) == []
    _, grad = get_symbol("grad", 2)
    assert sample_cone(grad, np.zeros((1, 2)), 16) == []
    _, divcurl = get_symbol("divcurl6", 3)
    samples = sample_cone(divcurl, np.zeros((1, 3)), 500)
    assert len(samples) == 500
    assert {s.dimension for s in samples} == {3}
    with pytest.raises(InvalidParameterError):
        sample_cone(divcurl, np.zeros((1, 3)), 4)


def test_dot_product_vanishes_on_divcurl_cone():
    _, p = get_symbol("divcurl6", 3)
    samples = sample_cone(p, np.zeros((1, 3)), 64)
    certificate = q_vanishes_on_cone(get_quadform("dot3"), samples)
    assert certificate.certified
    assert certificate.max_residual <= 1e-10


def test_norm_of_first_field_does_not_vanish_on_divcurl_cone():
    _, p = get_symbol("divcurl6", 3)
    samples = [kernel_at(p, np.zeros(3), [1.0, 0.0, 0.0])]
    certificate = q_vanishes_on_cone(get_quadform("vnorm3"), samples)
    assert not certificate.certified
    assert certificate.max_residual >= 1.0 - 1e-12
    _, xi, lam = certificate.witness
    np.testing.assert_allclose(xi, [1.0, 0.0, 0.0])
    assert np.linalg.norm(lam[3:]) < 1e-6


def test_empty_cone_certificate():
    _, lap = get_symbol("laplace", 2)
    certificate = q_vanishes_on_cone(get_quadform("square"), sample_cone(lap, np.zeros((1, 2)), 8))
    assert certificate.cone_empty
    assert certificate.max_residual == 0.0
    assert certificate.to_dict()["certified"]


def test_quadratic_form_fields():
    grid = TorusGrid(1, 8)
    Q = get_quadform("mixed12")
    u = GridField.constant(grid, [2.0, 3.0])
    np.testing.assert_allclose(Q.evaluate_field(u).samples[:, 0], 6.0)
    assert Q.evaluate([0.0], np.array([1.0, 1j])) == pytest.approx(0.0)

    Qv = get_quadform("variable12")
    frozen = Qv.frozen([0.0])
    assert frozen.is_constant
    np.testing.assert_allclose(frozen.matrix_at([1.0]), [[1.5, 0.0], [0.0, 0.0]])


def test_quadform_registry():
    assert get_quadform("identity:3").fiber_rank == 3
    assert get_quadform({"matrix": [[1.0, 0.0], [0.0, -1.0]]}).is_constant
    with pytest.raises(ConfigError):
        get_quadform("nope")


def test_garding_constant_closed_form():
    _, p = get_symbol("proj_first", 2)
    Q = get_quadform("proj_cross")
    K = sphere_sample_points(np.zeros((1, 2)), 2, 16)
    for delta, expected in [(0.1, 0.9), (0.5, 0.5)]:
        report = garding_constant(Q, p, K, delta)
        assert report.constant == pytest.approx(expected, rel=1e-9)
        assert report.passes
    assert garding_constant(Q, p, K, 1.0).constant == 0.0


def test_garding_constant_of_positive_form_is_zero():
    _, p = get_symbol("proj_first", 2)
    K = sphere_sample_points(np.zeros((1, 2)), 2, 8)
    assert garding_constant(get_quadform("identity:2"), p, K, 0.2).constant == 0.0


def test_garding_hypothesis_violation():
    _, p = get_symbol("proj_first", 2)
    negative = QuadraticForm.constant(np.diag([1.0, -1.0]), name="negative on cone")
    K = sphere_sample_points(np.zeros((1, 2)), 2, 8)
    with pytest.raises(HypothesisViolationError):
        garding_constant(negative, p, K, 0.1)
    with pytest.raises(InvalidParameterError):
        garding_constant(get_quadform("proj_cross"), p, K, 0.0)


def test_kernel_dimension_ignores_sign_and_scale():
    rng = np.random.default_rng(4)
    for name, dim in (("divcurl6", 3), ("curl3", 3), ("proj_first", 2), ("grad", 2)):
        _, p = get_symbol(name, dim)
        for _ in range(10):
            x = rng.uniform(0.0, 2 * np.pi, dim)
            xi = rng.standard_normal(dim)
            reference = kernel_at(p, x, xi).dimension
            assert kernel_at(p, x, -xi).dimension == reference, name
            assert kernel_at(p, x, rng.uniform(0.5, 5.0) * xi).dimension == reference, name


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
