#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.errors import InvalidParameterError, ShapeError
from src.grid import GridField, TorusGrid, forward_fourier, plane_wave
from src.quantize import apply, commutator_apply, smoothing_order_probe
from src.symbols import Symbol, evaluate, freeze, get_symbol, list_symbols


def x_of(grid):
    return grid.nodes[:, 0]


def test_derivative_multiplier_on_single_mode():
    grid = TorusGrid(1, 16)
    dx, _ = get_symbol("dx1", 1)
    out = apply(dx, plane_wave(grid, [3]))
    np.testing.assert_allclose(out.samples[:, 0], 3j * np.exp(3j * x_of(grid)), atol=1e-12)


def test_xi_independent_symbol_multiplies_pointwise():
    grid = TorusGrid(1, 16)

    def fn(x, xi):
        return (1.0 + 0.5 * np.sin(x[:, 0])).astype(complex).reshape(-1, 1, 1)

    psi_symbol = Symbol(0, 1, 1, fn, 1, name="psi")
    u = GridField(grid, np.cos(2 * x_of(grid)) + 0.3j)
    expected = (1.0 + 0.5 * np.sin(x_of(grid))) * u.samples[:, 0]
    np.testing.assert_allclose(apply(psi_symbol, u).samples[:, 0], expected, atol=1e-12)


def test_direct_path_shifts_modes():
    grid = TorusGrid(1, 16)

    def fn(x, xi):
        return (np.exp(1j * x[:, 0]) * 1j * xi[:, 0]).reshape(-1, 1, 1)

    a = Symbol(1, 1, 1, fn, 1, name="e^{ix} d/dx")
    assert a.separable_terms is None and not a.is_multiplier
    out = apply(a, plane_wave(grid, [3]))
    np.testing.assert_allclose(out.samples[:, 0], 3j * np.exp(4j * x_of(grid)), atol=1e-12)


def test_separable_path_matches_direct_path():
    grid = TorusGrid(2, 8)
    scaled, _ = get_symbol("scaled:proj_first", 2)
    direct = Symbol(scaled.order, scaled.in_rank, scaled.out_rank, scaled.fn, 2, name="direct")
    rng = np.random.default_rng(3)
    u = GridField(grid, rng.standard_normal((grid.size, 2)))
    np.testing.assert_allclose(apply(scaled, u).samples, apply(direct, u).samples, atol=1e-11)


def test_rank_mismatch():
    grid = TorusGrid(1, 8)
    proj, _ = get_symbol("proj_first", 1)
    with pytest.raises(ShapeError):
        apply(proj, GridField.constant(grid, 1.0))


def test_commutator_with_first_order_is_leibniz():
    grid = TorusGrid(1, 32)
    dx, _ = get_symbol("dx1", 1)
    psi = GridField(grid, np.sin(x_of(grid)))
    out = commutator_apply(dx, psi, plane_wave(grid, [2]))
    expected = np.cos(x_of(grid)) * np.exp(2j * x_of(grid))
    np.testing.assert_allclose(out.samples[:, 0], expected, atol=1e-12)


def test_commutator_with_second_order():
    grid = TorusGrid(1, 32)
    lap, _ = get_symbol("laplace", 1)
    x = x_of(grid)
    out = commutator_apply(lap, GridField(grid, np.sin(x)), plane_wave(grid, [2]))
    expected = (-np.sin(x) + 4j * np.cos(x)) * np.exp(2j * x)
    np.testing.assert_allclose(out.samples[:, 0], expected, atol=1e-11)


def test_commutator_of_multiplications_vanishes():
    grid = TorusGrid(1, 16)

    def fn(x, xi):
        return np.cos(x[:, 0]).astype(complex).reshape(-1, 1, 1)

    b = Symbol(0, 1, 1, fn, 1, name="cos x")
    psi = GridField(grid, np.exp(np.sin(x_of(grid))))
    out = commutator_apply(b, psi, plane_wave(grid, [5]))
    assert np.max(np.abs(out.samples)) < 1e-12


def test_smoothing_probe_slopes():
    grid = TorusGrid(1, 128)
    psi = GridField(grid, 1.0 + 0.5 * np.sin(x_of(grid)))
    dx, _ = get_symbol("dx1", 1)
    report = smoothing_order_probe(dx, psi, [4, 8, 16, 32])
    assert report.apply_slope == pytest.approx(1.0, abs=0.1)
    assert report.commutator_slope == pytest.approx(0.0, abs=0.15)

    lap, _ = get_symbol("laplace", 1)
    report = smoothing_order_probe(lap, psi, [4, 8, 16, 32])
    assert report.apply_slope == pytest.approx(2.0, abs=0.1)
    assert report.commutator_slope == pytest.approx(1.0, abs=0.15)


def test_smoothing_probe_flags_degenerate_regression():
    grid = TorusGrid(1, 32)
    zero, _ = get_symbol("zero", 1)
    report = smoothing_order_probe(zero, GridField.constant(grid, 1.0), [2, 4, 8])
    assert report.apply_degenerate and report.apply_slope is None


def test_smoothing_probe_needs_headroom():
    grid = TorusGrid(1, 32)
    dx, _ = get_symbol("dx1", 1)
    with pytest.raises(InvalidParameterError):
        smoothing_order_probe(dx, GridField.constant(grid, 1.0), [4, 16])
    with pytest.raises(InvalidParameterError):
        smoothing_order_probe(dx, GridField.constant(grid, 1.0), [4])


def band_limited_field(grid, rank, seed, band=2):
    rng = np.random.default_rng(seed)
    total = GridField.zeros(grid, rank)
    for _ in range(6):
        k = rng.integers(-band, band + 1, grid.dim)
        amplitude = rng.standard_normal(rank) + 1j * rng.standard_normal(rank)
        total = total + plane_wave(grid, k, amplitude)
    return total


def test_apply_is_linear():
    grid = TorusGrid(2, 16)
    rng = np.random.default_rng(2)
    for name in ("proj_first", "scaled:proj_first"):
        a, _ = get_symbol(name, 2)
        u = GridField(grid, rng.standard_normal((grid.size, 2)))
        v = GridField(grid, rng.standard_normal((grid.size, 2)))
        alpha, beta = 0.7 - 0.2j, -1.3
        lhs = apply(a, u * alpha + v * beta)
        rhs = apply(a, u) * alpha + apply(a, v) * beta
        np.testing.assert_allclose(lhs.samples, rhs.samples, atol=1e-10)


def test_multiplier_output_spectrum_is_diagonal():
    grid = TorusGrid(2, 16)
    rng = np.random.default_rng(8)
    for name in ("laplace", "riesz1", "grad"):
        a, _ = get_symbol(name, 2)
        u = GridField(grid, rng.standard_normal((grid.size, a.in_rank)))
        freqs = grid.frequencies.astype(float)
        table = a.evaluate_batch(np.zeros_like(freqs), freqs)
        expected = np.einsum("mij,mj->mi", table, forward_fourier(u).coefficients)
        np.testing.assert_allclose(forward_fourier(apply(a, u)).coefficients, expected, atol=1e-12)


def test_commutator_with_constant_cutoff_vanishes():
    grid = TorusGrid(2, 16)
    u = band_limited_field(grid, 2, seed=1)
    for name in ("proj_first", "scaled:proj_first", "laplace"):
        a, _ = get_symbol(name, 2)
        field = u if a.in_rank == 2 else u.component(0)
        out = commutator_apply(a, GridField.constant(grid, 3.5), field)
        assert np.max(np.abs(out.samples)) < 1e-12


def test_commutator_is_leibniz_for_first_order_builtins():
    for name in list_symbols():
        if name.startswith("scaled:"):
            continue
        dim = 3 if name in ("div3", "curl3", "divcurl6") else 2
        a, _ = get_symbol(name, dim)
        if a.order != 1 or not a.is_polynomial_in_xi:
            continue
        grid = TorusGrid(dim, 16)
        x = grid.nodes
        psi = GridField(grid, 1.0 + 0.5 * np.sin(x[:, 0]) + 0.3 * np.cos(x[:, 1]))
        gradient = [0.5 * np.cos(x[:, 0]), -0.3 * np.sin(x[:, 1])] + [np.zeros(grid.size)] * (dim - 2)
        u = band_limited_field(grid, a.in_rank, seed=dim)
        expected = np.zeros((grid.size, a.out_rank), dtype=complex)
        for j in range(dim):
            coefficient = evaluate(a, np.zeros(dim), np.eye(dim)[j])
            expected += -1j * gradient[j][:, None] * (u.samples @ coefficient.T)
        out = commutator_apply(a, psi, u)
        np.testing.assert_allclose(out.samples, expected, atol=1e-8, err_msg=name)


def test_order_zero_multipliers_do_not_grow():
    grid = TorusGrid(1, 128)
    psi = GridField(grid, 1.0 + 0.5 * np.sin(x_of(grid)))
    riesz, riesz_principal = get_symbol("riesz1", 1)
    for a in (riesz, freeze(riesz_principal, [0.0])):
        report = smoothing_order_probe(a, psi, [4, 8, 16, 32])
        assert report.apply_slope == pytest.approx(0.0, abs=0.1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
