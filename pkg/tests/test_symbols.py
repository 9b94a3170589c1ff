#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.errors import ConfigError, DegenerateChartError, InvalidInputError, InvalidParameterError, UndefinedAtZeroError
from src.grid import GridField, TorusGrid, plane_wave
from src.quantize import apply
from src.symbols import (
    Diffeomorphism,
    PrincipalSymbol,
    Symbol,
    compactify_covector,
    evaluate,
    first_order_symbol,
    freeze,
    get_diffeomorphism,
    get_symbol,
    homogeneity_defect,
    list_symbols,
    oscillation_radius,
    pushforward,
    sampled_oscillation,
    symbol_class_probe,
    unit_sphere_samples,
)


def test_divergence_symbol():
    _, div = get_symbol("div3", 3)
    np.testing.assert_allclose(evaluate(div, np.zeros(3), [1, 0, 0]), [[1j, 0, 0]])


def test_laplacian_symbol():
    lap, _ = get_symbol("laplace", 2)
    assert evaluate(lap, np.zeros(2), [0, 2])[0, 0] == pytest.approx(-4.0)


def test_curl_kills_parallel_vectors():
    _, curl = get_symbol("curl3", 3)
    m = evaluate(curl, np.zeros(3), [1, 0, 0])
    np.testing.assert_allclose(m @ np.array([1, 0, 0]), np.zeros(3), atol=1e-15)


def test_principal_symbol_undefined_at_zero():
    _, riesz = get_symbol("riesz1", 1)
    with pytest.raises(UndefinedAtZeroError):
        evaluate(riesz, [0.0], [0.0])
    # polynomial symbols are defined there
    _, grad = get_symbol("grad", 2)
    np.testing.assert_allclose(evaluate(grad, [0.0, 0.0], [0.0, 0.0]), np.zeros((2, 1)))


def test_registry_errors():
    with pytest.raises(ConfigError):
        get_symbol("nope", 2)
    with pytest.raises(ConfigError):
        get_symbol("div3", 2)


def test_scaled_symbol_is_separable():
    total, principal = get_symbol("scaled:dx1", 1)
    assert total.separable_terms is not None and not total.is_multiplier
    assert evaluate(total, [0.0], [2.0])[0, 0] == pytest.approx(1.5 * 2j)
    assert evaluate(principal, [np.pi], [1.0])[0, 0] == pytest.approx(0.5j)


def test_first_order_symbol_from_coefficients():
    total, principal = first_order_symbol(np.array([[[1.0], [0.0]]]))
    assert (total.in_rank, total.out_rank, total.dim) == (2, 1, 1)
    np.testing.assert_allclose(evaluate(principal, [0.0], [3.0]), [[3j, 0]])
    with pytest.raises(ConfigError):
        first_order_symbol(np.zeros((2, 2)))


def test_unit_sphere_samples_are_unit_and_not_antipodal():
    for dim in (2, 3, 5):
        samples = unit_sphere_samples(dim, 40)
        np.testing.assert_allclose(np.linalg.norm(samples, axis=1), 1.0)
        dots = samples @ samples.T
        np.fill_diagonal(dots, 0.0)
        assert np.min(dots) > -1.0 + 1e-9


def test_compactified_covectors_stay_in_unit_ball():
    xi = np.array([[0.0, 0.0], [3.0, 4.0], [1e6, 0.0]])
    eta = compactify_covector(xi)
    assert np.all(np.linalg.norm(eta, axis=1) < 1.0)
    assert np.linalg.norm(eta[1]) == pytest.approx(5.0 / np.sqrt(26.0))


def test_symbol_class_probe_accepts_derivative():
    dx, _ = get_symbol("dx1", 1)
    report = symbol_class_probe(dx, [[0.0]])
    assert report.passes
    assert report.entry((0,), (1,)).max_ratio == pytest.approx(1.0, rel=1e-6)


def test_symbol_class_probe_flags_understated_order():
    def fn(x, xi):
        return (1j * xi[:, 0] ** 2).reshape(-1, 1, 1)

    wrong = Symbol(1, 1, 1, fn, 1, name="i xi^2", is_multiplier=True, is_polynomial_in_xi=True)
    report = symbol_class_probe(wrong, [[0.0]])
    assert not report.passes
    assert report.entry((0,), (0,)).growth_slope > 0.5


def test_homogeneity_defect():
    _, lap = get_symbol("laplace", 2)
    assert homogeneity_defect(lap, [0.0, 0.0], [1.0, 0.0], 3.0) == pytest.approx(0.0, abs=1e-12)
    _, div = get_symbol("div3", 3)
    assert homogeneity_defect(div, np.zeros(3), [0.0, 0.6, 0.8], 2.5) == pytest.approx(0.0, abs=1e-12)

    def perturbed(x, xi):
        return (-np.sum(xi ** 2, axis=1) - 1.0).astype(complex).reshape(-1, 1, 1)

    p = PrincipalSymbol(2, 1, 1, perturbed, 2, name="shifted", is_polynomial=True)
    assert homogeneity_defect(p, [0.0, 0.0], [1.0, 0.0], 2.0) == pytest.approx(3.0)


def test_pushforward_under_dilation():
    _, lap = get_symbol("laplace", 2)
    pushed = pushforward(lap, get_diffeomorphism("linear:2", 2))
    eta = np.array([0.3, -1.1])
    assert evaluate(pushed, [1.0, 2.0], eta)[0, 0] == pytest.approx(-4.0 * eta @ eta)


def test_pushforward_under_sine_chart():
    _, dx = get_symbol("dx1", 1)
    chi = Diffeomorphism.sine_perturbation(1, 0.1)
    pushed = pushforward(dx, chi)
    y = chi.forward(np.array([[0.5]]))[0]
    assert evaluate(pushed, y, [1.0])[0, 0] == pytest.approx(1j * (1.0 + 0.1 * np.cos(0.5)), rel=1e-12)


def test_composition_of_charts():
    chi = get_diffeomorphism("sine:0.2", 2).compose(get_diffeomorphism("rotation:0.4", 2))
    points = np.random.default_rng(1).uniform(0, 2 * np.pi, (10, 2))
    assert chi.check(points) < 1e-10


def test_singular_linear_chart_rejected():
    with pytest.raises(DegenerateChartError):
        Diffeomorphism.linear(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(DegenerateChartError):
        Diffeomorphism.sine_perturbation(1, 1.5)


def test_freeze():
    def fn(x, xi):
        return ((1.0 + np.cos(x[:, 0])) * 1j * xi[:, 0]).reshape(-1, 1, 1)

    a = Symbol(1, 1, 1, fn, 1, name="(1+cos x) d/dx")
    frozen = freeze(a, [0.0])
    assert frozen.is_multiplier
    assert evaluate(frozen, [1.7], [3.0])[0, 0] == pytest.approx(6j)

    dx, _ = get_symbol("dx1", 1)
    assert freeze(dx, [2.0]) is dx


def test_freeze_exponential_coefficient():
    def fn(x, xi):
        return (np.exp(x[:, 0]) * np.linalg.norm(xi, axis=1)).astype(complex).reshape(-1, 1, 1)

    a = Symbol(1, 1, 1, fn, 2, name="e^x |xi|")
    frozen = freeze(a, [np.log(2.0), 0.0])
    assert evaluate(frozen, [0.0, 0.0], [3.0, 4.0])[0, 0] == pytest.approx(10.0)


def test_oscillation_radius_of_linear_coefficient():
    def coeff(points):
        return points[:, 0][:, None, None] * np.eye(2)[None, :, :]

    r = oscillation_radius(coeff, [0.0, 0.0], 0.1)
    assert 0.05 < r <= 0.1
    assert sampled_oscillation(coeff, [0.0, 0.0], r) < 0.1


def test_oscillation_radius_of_constant_is_seed():
    def coeff(points):
        return np.ones((points.shape[0], 1, 1))

    assert oscillation_radius(coeff, [1.0], 0.05, seed_radius=0.7) == pytest.approx(0.7)
    with pytest.raises(InvalidParameterError):
        oscillation_radius(coeff, [1.0], 0.0)


def test_oscillation_radius_of_symbol():
    def fn(x, xi):
        return (np.sin(2 * x[:, 0]) * 1j * xi[:, 0] / np.linalg.norm(xi, axis=1)).reshape(-1, 1, 1)

    p = PrincipalSymbol(0, 1, 1, fn, 1, name="sin 2x sign")
    r = oscillation_radius(p, [0.0], 0.2)
    assert r == pytest.approx(np.arcsin(0.2) / 2.0, rel=1e-3)


def test_oscillation_radius_holds_on_finer_sample():
    def fn(x, xi):
        coefficient = np.sin(2 * x[:, 0]) * np.cos(3 * x[:, 1])
        return (coefficient * 1j * xi[:, 0] / np.linalg.norm(xi, axis=1)).reshape(-1, 1, 1)

    p = PrincipalSymbol(0, 1, 1, fn, 2, name="sin 2x cos 3y sign")
    for c in (0.5, 1.0, 1.5, 2.0, 2.5):
        center = [c, c]
        r = oscillation_radius(p, center, 0.2)
        assert r > 0.0
        assert sampled_oscillation(p, center, r) < 0.2
        assert sampled_oscillation(p, center, r, resolution=17) < 0.2


def test_freeze_non_polynomial_principal_symbol():
    grid = TorusGrid(2, 16)
    _, riesz = get_symbol("riesz1", 2)
    frozen = freeze(riesz, [0.0, 0.0])
    assert evaluate(frozen, [1.0, 2.0], [0.0, 0.0])[0, 0] == 0.0
    assert evaluate(frozen, [1.0, 2.0], [0.75, 0.0])[0, 0] == pytest.approx(0.5)
    assert evaluate(frozen, [1.0, 2.0], [3.0, 4.0])[0, 0] == pytest.approx(0.6)

    wave = plane_wave(grid, [3, 0])
    out = apply(frozen, wave + GridField.constant(grid, 2.0))
    assert out.is_finite()
    np.testing.assert_allclose(out.samples, wave.samples, atol=1e-12)


def test_multiplier_flag_is_spot_checked():
    def fn(x, xi):
        return (np.cos(x[:, 0]) * 1j * xi[:, 0]).reshape(-1, 1, 1)

    with pytest.raises(InvalidInputError):
        Symbol(1, 1, 1, fn, 1, name="cos x d/dx", is_multiplier=True)


def builtin_pairs():
    for name in list_symbols():
        if name.startswith("scaled:"):
            continue
        dim = 3 if name in ("div3", "curl3", "divcurl6") else 2
        yield name, dim, get_symbol(name, dim)


def test_builtin_principal_symbols_are_homogeneous():
    rng = np.random.default_rng(11)
    for name, dim, (_, principal) in builtin_pairs():
        for _ in range(100):
            x = rng.uniform(0.0, 2 * np.pi, dim)
            xi = rng.standard_normal(dim)
            xi *= rng.uniform(1.0, 3.0) / np.linalg.norm(xi)
            t = rng.uniform(1.0, 4.0)
            scale = 1.0 + np.linalg.norm(evaluate(principal, x, t * xi))
            assert homogeneity_defect(principal, x, xi, t) <= 1e-10 * scale, name


def test_compactification_rescales_homogeneous_symbols():
    rng = np.random.default_rng(5)
    for name, dim in (("div3", 3), ("divcurl6", 3), ("laplace", 2), ("proj_first", 2)):
        _, principal = get_symbol(name, dim)
        for _ in range(20):
            x = rng.uniform(0.0, 2 * np.pi, dim)
            xi = 3.0 * rng.standard_normal(dim)
            v = rng.standard_normal(principal.in_rank) + 1j * rng.standard_normal(principal.in_rank)
            eta = compactify_covector(xi[None, :])[0]
            lhs = np.linalg.norm(evaluate(principal, x, eta) @ v) ** 2
            rhs = (1.0 + xi @ xi) ** (-principal.order) * np.linalg.norm(evaluate(principal, x, xi) @ v) ** 2
            assert lhs == pytest.approx(rhs, rel=1e-10), name


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
