#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.errors import CutoffTooLargeError, InvalidInputError, InvalidParameterError, ShapeError
from src.fitting import loglog_slope
from src.grid import (
    GridField,
    SpectrumField,
    TorusGrid,
    bandwidth,
    evaluate_spectrum,
    forward_fourier,
    frequency_split,
    inverse_fourier,
    l2_norm,
    plane_wave,
    sobolev_norm,
    weak_pairing,
)


def random_field(grid, rank=1, seed=0):
    rng = np.random.default_rng(seed)
    return GridField(grid, rng.standard_normal((grid.size, rank)) + 1j * rng.standard_normal((grid.size, rank)))


def test_grid_rejects_odd_or_tiny_sizes():
    with pytest.raises(InvalidParameterError):
        TorusGrid(1, 7)
    with pytest.raises(InvalidParameterError):
        TorusGrid(0, 8)


def test_grid_geometry():
    grid = TorusGrid(2, 8)
    assert grid.size == 64
    assert grid.nodes.shape == (64, 2)
    assert grid.cell_volume == pytest.approx((2 * np.pi / 8) ** 2)
    assert grid.frequencies[grid.frequency_index([-3, 2])].tolist() == [-3, 2]


def test_plane_wave_maps_to_unit_delta():
    grid = TorusGrid(1, 8)
    spectrum = forward_fourier(plane_wave(grid, [2]))
    expected = np.zeros(grid.size, dtype=complex)
    expected[grid.frequency_index([2])] = 1.0
    np.testing.assert_allclose(spectrum.coefficients[:, 0], expected, atol=1e-14)


def test_constant_field_has_only_the_zero_mode():
    grid = TorusGrid(2, 8)
    spectrum = forward_fourier(GridField.constant(grid, 2.5 - 1j))
    assert spectrum.coefficient_at([0, 0])[0] == pytest.approx(2.5 - 1j)
    others = np.delete(spectrum.coefficients[:, 0], grid.frequency_index([0, 0]))
    assert np.max(np.abs(others)) < 1e-14


def test_plancherel_on_random_field():
    grid = TorusGrid(2, 16)
    u = random_field(grid)
    physical = np.sum(np.abs(u.samples) ** 2) / grid.size
    assert forward_fourier(u).mass() == pytest.approx(physical, rel=1e-12)


def test_inverse_of_delta_is_plane_wave():
    grid = TorusGrid(1, 8)
    field = inverse_fourier(SpectrumField.delta(grid, [3]))
    np.testing.assert_allclose(field.samples[:, 0], np.exp(3j * grid.nodes[:, 0]), atol=1e-14)


def test_fourier_round_trip():
    grid = TorusGrid(2, 16)
    u = random_field(grid, rank=3, seed=4)
    back = inverse_fourier(forward_fourier(u))
    np.testing.assert_allclose(back.samples, u.samples, rtol=1e-12, atol=1e-12)


def test_non_finite_samples_rejected():
    grid = TorusGrid(1, 8)
    values = np.zeros(grid.size)
    values[3] = np.nan
    with pytest.raises(InvalidInputError):
        forward_fourier(GridField(grid, values))


def test_weak_pairing_examples():
    grid = TorusGrid(1, 16)
    x = grid.nodes[:, 0]
    one = GridField.constant(grid, 1.0)
    assert abs(weak_pairing(GridField(grid, np.sin(3 * x)), one)) < 1e-14
    assert weak_pairing(GridField(grid, np.sin(2 * x) ** 2), one) == pytest.approx(np.pi, abs=1e-13)
    grid2 = TorusGrid(2, 8)
    one2 = GridField.constant(grid2, 1.0)
    assert weak_pairing(one2, one2) == pytest.approx((2 * np.pi) ** 2)


def test_weak_pairing_needs_matching_grids():
    with pytest.raises(ShapeError):
        weak_pairing(GridField.constant(TorusGrid(1, 8), 1.0), GridField.constant(TorusGrid(1, 16), 1.0))


def test_sobolev_norm_of_single_modes():
    grid = TorusGrid(1, 16)
    wave = plane_wave(grid, [2])
    assert sobolev_norm(wave, -1.0) ** 2 == pytest.approx(0.2)
    assert sobolev_norm(wave, 0.0) ** 2 == pytest.approx(1.0)
    # two modes of squared modulus 1/4 each
    sine = GridField(grid, np.sin(3 * grid.nodes[:, 0]))
    assert sobolev_norm(sine, -1.0) ** 2 == pytest.approx(0.05)


def test_frequency_split():
    grid = TorusGrid(1, 16)
    low, high = frequency_split(forward_fourier(plane_wave(grid, [2])), 3)
    assert high.mass() < 1e-28 and low.mass() == pytest.approx(1.0)
    low, high = frequency_split(forward_fourier(plane_wave(grid, [5])), 3)
    assert low.mass() < 1e-28 and high.mass() == pytest.approx(1.0)

    spectrum = forward_fourier(random_field(TorusGrid(2, 16), seed=9))
    low, high = frequency_split(spectrum, 4.5)
    assert low.mass() + high.mass() == pytest.approx(spectrum.mass(), rel=1e-12)

    with pytest.raises(CutoffTooLargeError):
        frequency_split(spectrum, 8)


def test_evaluate_spectrum_off_grid():
    grid = TorusGrid(1, 16)
    spectrum = SpectrumField.delta(grid, [3], 2.0)
    points = np.array([[0.123], [4.5]])
    np.testing.assert_allclose(evaluate_spectrum(spectrum, points)[:, 0], 2.0 * np.exp(3j * points[:, 0]))


def test_bandwidth_and_l2_norm():
    grid = TorusGrid(1, 32)
    x = grid.nodes[:, 0]
    u = GridField(grid, 1.0 + np.cos(5 * x))
    assert bandwidth(u) == 5
    assert bandwidth(GridField.constant(grid, 3.0)) == 0
    assert l2_norm(GridField(grid, np.sin(4 * x))) == pytest.approx(np.sqrt(np.pi))


def test_field_arithmetic_broadcasts_scalars():
    grid = TorusGrid(1, 8)
    psi = GridField(grid, np.arange(grid.size, dtype=float))
    v = GridField.constant(grid, [1.0, 2.0])
    product = psi * v
    assert product.fiber_rank == 2
    np.testing.assert_allclose(product.samples[:, 1], 2.0 * np.arange(grid.size))
    with pytest.raises(ValueError):
        psi.samples[0, 0] = 1.0


def test_loglog_slope_recovers_power_law():
    xs = [2, 4, 8, 16]
    assert loglog_slope(xs, [3.0 * x ** 1.5 for x in xs]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        loglog_slope([1.0], [1.0])


def test_plancherel_and_round_trip_on_many_fields():
    rng = np.random.default_rng(21)
    for trial in range(50):
        dim = int(rng.integers(1, 4))
        n = int(rng.choice([8, 16, 32] if dim < 3 else [8, 16]))
        grid = TorusGrid(dim, n)
        u = random_field(grid, rank=int(rng.integers(1, 3)), seed=trial)
        spectrum = forward_fourier(u)
        physical = np.sum(np.abs(u.samples) ** 2) / grid.size
        assert spectrum.mass() == pytest.approx(physical, rel=1e-12)
        np.testing.assert_allclose(inverse_fourier(spectrum).samples, u.samples, rtol=1e-12, atol=1e-12)


def test_transforms_are_linear():
    grid = TorusGrid(2, 16)
    u, v = random_field(grid, 2, seed=1), random_field(grid, 2, seed=2)
    alpha, beta = 1.5 - 0.5j, -0.25
    combined = forward_fourier(u * alpha + v * beta).coefficients
    separate = alpha * forward_fourier(u).coefficients + beta * forward_fourier(v).coefficients
    np.testing.assert_allclose(combined, separate, atol=1e-13)
    s, t = forward_fourier(u), forward_fourier(v)
    back = inverse_fourier(SpectrumField(grid, alpha * s.coefficients + beta * t.coefficients))
    np.testing.assert_allclose(back.samples, (u * alpha + v * beta).samples, atol=1e-12)


def test_sine_products_pair_to_pi_on_the_diagonal():
    grid = TorusGrid(1, 32)
    x = grid.nodes[:, 0]
    one = GridField.constant(grid, 1.0)
    for k in range(1, 6):
        for m in range(1, 6):
            value = weak_pairing(GridField(grid, np.sin(k * x) * np.sin(m * x)), one)
            assert value == pytest.approx(np.pi if k == m else 0.0, abs=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
