#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.cone import get_quadform
from src.errors import ConfigError, CoverFailureError, DegenerateMetricError, InvalidParameterError
from src.geometry import (
    BundleMetric,
    Chart,
    MetricField,
    atlas_partition,
    density_field,
    freezing_cover,
    get_bundle_metric,
    get_metric,
    norm_equivalence_constants,
    partition_of_unity,
    periodic_distance,
    positive_part,
    signature,
    volume_density,
    weighted_sobolev_norm,
)
from src.grid import GridField, TorusGrid, plane_wave, sobolev_norm
from src.symbols import Diffeomorphism, sampled_oscillation


def constant_metric(matrix, name="g"):
    matrix = np.asarray(matrix, dtype=float)
    return MetricField(matrix.shape[0], lambda pts: np.broadcast_to(matrix, (len(pts),) + matrix.shape).copy(), name=name, is_constant=True)


def test_signature_index():
    assert signature(constant_metric(np.diag([-1.0, 1, 1, 1])), np.zeros(4))[0] == 1
    assert signature(get_metric("euclidean", 3), np.zeros(3))[0] == 0
    index, signs = signature(get_metric("diag:-2,-3,5", 3), np.zeros(3))
    assert index == 2 and signs == (-1, -1, 1)


def test_degenerate_metric():
    with pytest.raises(DegenerateMetricError):
        signature(constant_metric(np.diag([1.0, 0.0])), np.zeros(2))


def test_volume_density():
    assert volume_density(constant_metric(np.diag([-1.0, 1, 1, 1])), np.zeros(4)) == pytest.approx(1.0)
    assert volume_density(get_metric("diag:4,9", 2), np.zeros(2)) == pytest.approx(6.0)
    conformal = get_metric("conformal:0.3", 2)
    x = np.array([np.pi / 2, 0.0])
    assert volume_density(conformal, x) == pytest.approx(np.exp(0.6))


def test_density_field_of_conformal_minkowski():
    grid = TorusGrid(2, 16)
    rho = density_field(get_metric("conformal:0.1@minkowski", 2), grid)
    np.testing.assert_allclose(rho.samples[:, 0], np.exp(0.2 * np.sin(grid.nodes[:, 0])), rtol=1e-12)


def test_positive_part():
    bundle = get_bundle_metric("diag:-2,3", 2)
    np.testing.assert_allclose(positive_part(bundle, [0.0]), np.diag([2.0, 3.0]), atol=1e-12)
    spd = BundleMetric(2, lambda pts: np.broadcast_to([[2.0, 0.5], [0.5, 1.0]], (len(pts), 2, 2)).copy(), is_constant=True)
    np.testing.assert_allclose(positive_part(spd, [0.0]), [[2.0, 0.5], [0.5, 1.0]], atol=1e-12)
    np.testing.assert_allclose(positive_part(get_bundle_metric("hyperbolic", 2), [0.0]), np.eye(2), atol=1e-12)


def test_registry_errors():
    with pytest.raises(ConfigError):
        get_metric("diag:1,2", 3)
    with pytest.raises(ConfigError):
        get_bundle_metric("hyperbolic", 3)
    with pytest.raises(ConfigError):
        get_metric("nope", 2)


def test_weighted_norm_reduces_to_squared_weight():
    grid = TorusGrid(1, 16)
    u = plane_wave(grid, [2])
    norm = weighted_sobolev_norm(u, get_metric("euclidean", 1), get_bundle_metric("identity", 1), -1.0)
    assert norm ** 2 == pytest.approx(1.0 / 17.0)
    assert norm ** 2 != pytest.approx(sobolev_norm(u, -1.0) ** 2)


def test_weighted_norm_uses_positive_bundle_metric():
    grid = TorusGrid(1, 16)
    u = plane_wave(grid, [2], [1.0, 0.0])
    norm = weighted_sobolev_norm(u, get_metric("euclidean", 1), get_bundle_metric("diag:-1,1", 2), 0.0)
    assert norm ** 2 == pytest.approx(1.0)


def test_weighted_norm_null_covector_has_unit_weight():
    grid = TorusGrid(2, 16)
    u = plane_wave(grid, [1, 1])
    h = get_bundle_metric("identity", 1, dim=2)
    for s in (-2.0, 1.0, 3.0):
        assert weighted_sobolev_norm(u, get_metric("minkowski", 2), h, s) == pytest.approx(1.0)


def test_weighted_norm_needs_constant_metrics():
    grid = TorusGrid(2, 8)
    with pytest.raises(InvalidParameterError):
        weighted_sobolev_norm(GridField.constant(grid, 1.0), get_metric("conformal:0.1", 2), get_bundle_metric("identity", 1, 2), 0.0)


def test_norm_equivalence_constants():
    c1, c2 = norm_equivalence_constants(get_bundle_metric("diag:-4,9", 2))
    assert (c1, c2) == (pytest.approx(2.0), pytest.approx(3.0))


def test_periodic_distance_wraps():
    d = periodic_distance(np.array([[0.1], [2 * np.pi - 0.1]]), [0.0])
    np.testing.assert_allclose(d, [0.1, 0.1])


def test_single_ball_partition_is_one():
    grid = TorusGrid(1, 32)
    partition = partition_of_unity(grid, [[np.pi]], [4.0])
    np.testing.assert_allclose(partition.bumps[0].samples[:, 0], 1.0)


def test_two_arcs_partition_and_square_roots():
    grid = TorusGrid(1, 64)
    partition = partition_of_unity(grid, [[np.pi / 2], [3 * np.pi / 2]], [2.0, 2.0])
    assert partition.sum_defect() <= 1e-10
    squares = sum(root.samples[:, 0].real ** 2 for root in partition.sqrt_bumps())
    np.testing.assert_allclose(squares, 1.0, atol=1e-10)


def test_uncovered_node_reported():
    grid = TorusGrid(1, 32)
    with pytest.raises(CoverFailureError) as info:
        partition_of_unity(grid, [[np.pi]], [1.0])
    assert info.value.node is not None


def test_atlas_partition_from_charts():
    grid = TorusGrid(1, 32)
    charts = [
        Chart((np.pi / 2,), 2.0, Diffeomorphism.identity(1)),
        Chart((3 * np.pi / 2,), 2.0, Diffeomorphism.sine_perturbation(1, 0.1)),
    ]
    assert len(atlas_partition(grid, charts)) == 2


def test_freezing_cover_respects_gamma():
    grid = TorusGrid(1, 64)
    Q = get_quadform("variable12")
    cover = freezing_cover(grid, Q.coeff, 0.1)
    assert cover.partition.sum_defect() <= 1e-10
    for center, radius in zip(cover.centers, cover.radii):
        assert sampled_oscillation(Q.coeff, center, radius) < 0.1
    assert np.all(cover.radii > 0.5 * (2 * np.pi / cover.lattice_size))


def random_rotation(dim, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q


def test_volume_density_is_invariant_under_rotations():
    base = np.diag([-1.0, 2.0, 3.0, 0.5])
    expected = volume_density(constant_metric(base), np.zeros(4))
    for seed in range(5):
        rotation = random_rotation(4, seed)
        rotated = constant_metric(rotation @ base @ rotation.T)
        assert volume_density(rotated, np.zeros(4)) == pytest.approx(expected, rel=1e-12)


def test_positive_part_minus_metric_is_semidefinite():
    rotation = random_rotation(3, 7)
    matrix = rotation @ np.diag([-2.0, 3.0, -0.5]) @ rotation.T
    h = BundleMetric(3, lambda pts: np.broadcast_to(matrix, (len(pts), 3, 3)).copy(), is_constant=True)
    index, _ = signature(h, [0.0])
    difference = positive_part(h, [0.0]) - matrix
    eigenvalues = np.linalg.eigvalsh(difference)
    assert np.min(eigenvalues) >= -1e-12
    assert int(np.sum(eigenvalues > 1e-10)) == index == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
