"""
Semi-Riemannian chart geometry on the torus: metrics and their index, volume
densities, positivized bundle metrics, partitions of unity, weighted Sobolev
norms and the ball covers used for coefficient freezing.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from .config import DEGENERACY_TOL, OSCILLATION_RESOLUTION, PARTITION_TOL
from .errors import ConfigError, CoverFailureError, DegenerateMetricError, InvalidInputError, InvalidParameterError, ShapeError
from .grid import TWO_PI, GridField, TorusGrid, forward_fourier
from .symbols import Diffeomorphism, oscillation_radius

logger = logging.getLogger(__name__)

MatrixFn = Callable[[np.ndarray], np.ndarray]


class _SymmetricField:
    def __init__(self, size: int, dim: int, fn: MatrixFn, name: str, is_constant: bool):
        self.size = int(size)
        self.dim = int(dim)
        self.fn = fn
        self.name = name
        self.is_constant = bool(is_constant)

    def matrices(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise ShapeError(f"{self.name}: expected points of dimension {self.dim}, got {points.shape[1]}")
        values = np.asarray(self.fn(points), dtype=float)
        if values.shape != (points.shape[0], self.size, self.size):
            raise ShapeError(f"{self.name} returned shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"{self.name} has non-finite entries")
        if np.max(np.abs(values - np.swapaxes(values, 1, 2)), initial=0.0) > 1e-12:
            raise InvalidInputError(f"{self.name} is not symmetric")
        return values

    def at(self, x: Sequence[float]) -> np.ndarray:
        return self.matrices(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def check(self, sample_points: np.ndarray) -> Tuple[int, ...]:
        """Nondegenerate with one signature over the samples; returns that signature."""
        signatures = {_signature_of(m, self.name)[1] for m in self.matrices(sample_points)}
        if len(signatures) != 1:
            raise DegenerateMetricError(f"{self.name} changes signature across the chart: {sorted(signatures)}")
        return signatures.pop()


class MetricField(_SymmetricField):
    """Symmetric nondegenerate n x n metric g(x) on a chart."""

    def __init__(self, dim: int, fn: MatrixFn, name: str = "g", is_constant: bool = False):
        super().__init__(dim, dim, fn, name, is_constant)


class BundleMetric(_SymmetricField):
    """Symmetric nondegenerate J x J fiber metric h(x) over an n-dimensional chart."""

    def __init__(self, rank: int, fn: MatrixFn, dim: int = 1, name: str = "h", is_constant: bool = False):
        super().__init__(rank, dim, fn, name, is_constant)

    @property
    def rank(self) -> int:
        return self.size

    def signature(self, x: Optional[Sequence[float]] = None) -> Tuple[int, ...]:
        x = np.zeros(self.dim) if x is None else x
        return _signature_of(self.at(x), self.name)[1]


def _constant(matrix: np.ndarray) -> MatrixFn:
    matrix = np.asarray(matrix, dtype=float)
    return lambda points: np.broadcast_to(matrix, (np.atleast_2d(points).shape[0],) + matrix.shape).copy()


def _signature_of(matrix: np.ndarray, name: str) -> Tuple[int, Tuple[int, ...]]:
    det = np.linalg.det(matrix)
    if abs(det) < DEGENERACY_TOL:
        raise DegenerateMetricError(f"{name} is degenerate (|det| = {abs(det):.3e})")
    eigenvalues = eigh(matrix, eigvals_only=True)
    signs = tuple(int(s) for s in np.where(eigenvalues < 0.0, -1, 1))
    return signs.count(-1), signs


def signature(g: _SymmetricField, x: Sequence[float]) -> Tuple[int, Tuple[int, ...]]:
    """
    Index and signature of g(x).

    Returns:
        (number of negative eigenvalues, signs ordered by ascending eigenvalue)
    """
    return _signature_of(g.at(x), g.name)


def volume_density(g: MetricField, x: Sequence[float]) -> float:
    """sqrt(|det g(x)|)."""
    matrix = g.at(x)
    _signature_of(matrix, g.name)
    return float(np.sqrt(abs(np.linalg.det(matrix))))


def density_field(g: MetricField, grid: TorusGrid) -> GridField:
    """Volume density sampled at every grid node."""
    matrices = g.matrices(grid.nodes)
    det = np.abs(np.linalg.det(matrices))
    if np.min(det) < DEGENERACY_TOL:
        node = grid.nodes[int(np.argmin(det))]
        raise DegenerateMetricError(f"{g.name} is degenerate at node {node.tolist()}")
    return GridField(grid, np.sqrt(det))


def positive_part(h: _SymmetricField, x: Sequence[float]) -> np.ndarray:
    """|h|(x) = U |Lambda| U^T from the eigendecomposition h(x) = U Lambda U^T."""
    matrix = h.at(x)
    _signature_of(matrix, h.name)
    eigenvalues, vectors = eigh(matrix)
    return (vectors * np.abs(eigenvalues)) @ vectors.T


def weighted_sobolev_norm(u: GridField, g: MetricField, h: BundleMetric, s: float) -> float:
    """
    Chart Sobolev norm with the semi-Riemannian weight.

        ||u||^2 = sum_k |h|(u_hat_k, u_hat_k) (1 + |g(k, k)|^2)^s

    Args:
        u: field of fiber rank h.rank
        g: constant metric on the chart
        h: constant bundle metric
        s: Sobolev order

    Returns:
        the norm (not its square)
    """
    if not (g.is_constant and h.is_constant):
        raise InvalidParameterError("weighted_sobolev_norm needs chartwise-constant g and h; freeze variable metrics first")
    if u.fiber_rank != h.rank:
        raise ShapeError(f"field rank {u.fiber_rank} does not match bundle metric rank {h.rank}")
    if g.dim != u.grid.dim:
        raise ShapeError(f"metric dimension {g.dim} does not match grid dimension {u.grid.dim}")
    origin = np.zeros(g.dim)
    G = g.at(origin)
    _signature_of(G, g.name)
    H = positive_part(h, origin)
    spectrum = forward_fourier(u)
    coeffs = spectrum.coefficients
    k = spectrum.frequencies.astype(float)
    fiber = np.einsum("mj,jl,ml->m", np.conj(coeffs), H, coeffs).real
    gkk = np.einsum("mi,ij,mj->m", k, G, k)
    weights = (1.0 + gkk ** 2) ** s
    return float(np.sqrt(np.sum(weights * fiber)))


def norm_equivalence_constants(h: BundleMetric) -> Tuple[float, float]:
    """(c1, c2) with c1 ||u||_{L^2} <= ||u||_{H^0, g, h} <= c2 ||u||_{L^2} (spectral L^2)."""
    eigenvalues = eigh(positive_part(h, np.zeros(h.dim)), eigvals_only=True)
    return float(np.sqrt(eigenvalues[0])), float(np.sqrt(eigenvalues[-1]))


def _parse_entries(arg: str, spec: str) -> List[float]:
    try:
        return [float(v) for v in arg.split(",")]
    except ValueError as e:
        raise ConfigError(f"bad diagonal entries in {spec!r}") from e


def get_metric(spec: str, dim: int) -> MetricField:
    """
    Registry: "euclidean", "minkowski" (diag(-1, 1, ..., 1)), "diag:<a,b,...>",
    "conformal:<amplitude>" (exp(2 a sin x_1) times the identity) and
    "conformal:<amplitude>@<base>" (the same factor times another constant metric).
    """
    if spec == "euclidean":
        return MetricField(dim, _constant(np.eye(dim)), name=spec, is_constant=True)
    if spec == "minkowski":
        return MetricField(dim, _constant(np.diag([-1.0] + [1.0] * (dim - 1))), name=spec, is_constant=True)
    if spec.startswith("diag:"):
        entries = _parse_entries(spec.split(":", 1)[1], spec)
        if len(entries) != dim:
            raise ConfigError(f"{spec!r} has {len(entries)} entries for dimension {dim}")
        return MetricField(dim, _constant(np.diag(entries)), name=spec, is_constant=True)
    if spec.startswith("conformal:"):
        arg = spec.split(":", 1)[1]
        amplitude_text, _, base_spec = arg.partition("@")
        try:
            amplitude = float(amplitude_text)
        except ValueError as e:
            raise ConfigError(f"bad conformal amplitude in {spec!r}") from e
        base = get_metric(base_spec or "euclidean", dim)
        if not base.is_constant:
            raise ConfigError(f"conformal base metric must be constant, got {base_spec!r}")
        base_matrix = base.at(np.zeros(dim))

        def fn(points):
            factor = np.exp(2.0 * amplitude * np.sin(points[:, 0]))
            return factor[:, None, None] * base_matrix[None, :, :]

        return MetricField(dim, fn, name=spec, is_constant=amplitude == 0.0)
    raise ConfigError(f"unknown metric {spec!r}")


def get_bundle_metric(spec: str, rank: int, dim: int = 1) -> BundleMetric:
    """Registry: "identity", "diag:<a,b,...>", "hyperbolic" ([[0, 1], [1, 0]], rank 2)."""
    if spec == "identity":
        return BundleMetric(rank, _constant(np.eye(rank)), dim=dim, name=spec, is_constant=True)
    if spec.startswith("diag:"):
        entries = _parse_entries(spec.split(":", 1)[1], spec)
        if len(entries) != rank:
            raise ConfigError(f"{spec!r} has {len(entries)} entries for rank {rank}")
        return BundleMetric(rank, _constant(np.diag(entries)), dim=dim, name=spec, is_constant=True)
    if spec == "hyperbolic":
        if rank != 2:
            raise ConfigError("the hyperbolic bundle metric has rank 2")
        return BundleMetric(2, _constant([[0.0, 1.0], [1.0, 0.0]]), dim=dim, name=spec, is_constant=True)
    raise ConfigError(f"unknown bundle metric {spec!r}")


# ---------------------------------------------------------------------------
# Partitions of unity and covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: Tuple[float, ...]
    radius: float


@dataclass
class PartitionOfUnity:
    grid: TorusGrid
    bumps: List[GridField]
    supports: List[Ball]

    def __len__(self) -> int:
        return len(self.bumps)

    def total(self) -> GridField:
        return GridField(self.grid, np.sum([b.samples for b in self.bumps], axis=0))

    def sqrt_bumps(self) -> List[GridField]:
        return [GridField(self.grid, np.sqrt(b.samples.real)) for b in self.bumps]

    def sum_defect(self) -> float:
        return float(np.max(np.abs(self.total().samples - 1.0)))


def periodic_distance(points: np.ndarray, center: Sequence[float]) -> np.ndarray:
    """Distance on the flat torus [0, 2*pi)^n."""
    diff = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)[None, :]
    wrapped = np.mod(diff + np.pi, TWO_PI) - np.pi
    return np.linalg.norm(wrapped, axis=1)


def _bump(rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


def partition_of_unity(grid: TorusGrid, centers: Sequence[Sequence[float]], radii: Sequence[float]) -> PartitionOfUnity:
    """
    Smooth partition of unity subordinate to periodic balls.

    Each ball carries the bump exp(-1/(1 - rho^2)), rho = dist/r; the bumps are
    normalized by their pointwise sum.

    Args:
        grid: torus grid
        centers: ball centers, shape (m, n)
        radii: positive radii, length m

    Returns:
        PartitionOfUnity whose bumps sum to one at every node
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if centers.shape[1] != grid.dim or centers.shape[0] != radii.size:
        raise ShapeError(f"{centers.shape[0]} centers of dimension {centers.shape[1]} vs {radii.size} radii on a {grid.dim}-d grid")
    if np.any(radii <= 0.0):
        raise InvalidParameterError("ball radii must be positive")
    raw = np.stack([_bump(periodic_distance(grid.nodes, c) / r) for c, r in zip(centers, radii)])
    total = raw.sum(axis=0)
    uncovered = np.flatnonzero(total <= 0.0)
    if uncovered.size:
        node = grid.nodes[uncovered[0]]
        raise CoverFailureError(f"grid node {node.tolist()} lies in none of the {radii.size} balls", node=node)
    bumps = [GridField(grid, row / total) for row in raw]
    partition = PartitionOfUnity(grid, bumps, [Ball(tuple(c), float(r)) for c, r in zip(centers, radii)])
    if partition.sum_defect() > PARTITION_TOL:
        raise CoverFailureError(f"partition sums to one only up to {partition.sum_defect():.3e}")
    return partition


@dataclass
class Chart:
    """A ball of the torus with a re-coordinatization."""

    center: Tuple[float, ...]
    radius: float
    chi: Diffeomorphism


def atlas_partition(grid: TorusGrid, charts: Sequence[Chart]) -> PartitionOfUnity:
    return partition_of_unity(grid, [c.center for c in charts], [c.radius for c in charts])


@dataclass
class FreezingCover:
    gamma: float
    centers: np.ndarray
    radii: np.ndarray
    partition: PartitionOfUnity
    lattice_size: int
    refinements: int = field(default=0)


def freezing_cover(grid: TorusGrid, coeffs, gamma: float, max_refinements: int = 6, resolution: int = OSCILLATION_RESOLUTION) -> FreezingCover:
    """
    Cover the torus by balls on which the coefficients oscillate by less than gamma.

    Centers sit on a uniform lattice that is refined until every oscillation
    radius exceeds the lattice covering radius.

    Args:
        grid: torus grid
        coeffs: anything oscillation_radius accepts
        gamma: oscillation threshold
        max_refinements: lattice doublings before giving up

    Returns:
        FreezingCover with its partition of unity
    """
    per_axis = 2
    for refinement in range(max_refinements + 1):
        spacing = TWO_PI / per_axis
        axis = spacing * (np.arange(per_axis) + 0.5)
        mesh = np.meshgrid(*([axis] * grid.dim), indexing="ij")
        centers = np.stack([m.reshape(-1) for m in mesh], axis=1)
        needed = 0.5 * spacing * np.sqrt(grid.dim) * 1.01
        radii = np.array([oscillation_radius(coeffs, c, gamma, seed_radius=1.25 * needed, resolution=resolution) for c in centers])
        if np.all(radii > needed):
            logger.info(f"freezing cover: {len(centers)} balls at gamma={gamma} after {refinement} refinements")
            return FreezingCover(
                gamma=float(gamma),
                centers=centers,
                radii=radii,
                partition=partition_of_unity(grid, centers, radii),
                lattice_size=per_axis,
                refinements=refinement,
            )
        per_axis *= 2
    raise CoverFailureError(f"no cover with oscillation below {gamma} after {max_refinements} refinements")
