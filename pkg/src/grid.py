"""
Periodic sampling grids and discrete Fourier analysis on the torus [0, 2*pi)^n.

Fields are stored flat: samples[j, :] is the fiber vector at grid node j, nodes
ordered C-style over the n axes. Spectra use the same flat layout in FFT
frequency order, so coefficients[i] belongs to grid.frequencies[i].

Conventions:
    forward:  u_hat_k = N^{-n} sum_j u(x_j) exp(-i k.x_j)
    inverse:  u(x_j)  = sum_k u_hat_k exp(i k.x_j)
    pairing:  (2*pi/N)^n sum_j u(x_j) psi(x_j) rho(x_j)
    H^s norm: sum_k (1 + |k|^2)^s |u_hat_k|^2
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .config import BANDWIDTH_REL_TOL
from .errors import (
    CutoffTooLargeError,
    InvalidInputError,
    InvalidParameterError,
    ShapeError,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _freeze_array(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TorusGrid:
    """
    Uniform periodic grid with N points per axis on [0, 2*pi)^n.

    Args:
        dim: spatial dimension n
        points_per_axis: even number of nodes N on each axis
    """

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidParameterError(f"grid dimension must be a positive integer, got {self.dim}")
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 2:
            raise InvalidParameterError(f"points per axis must be an integer >= 2, got {self.points_per_axis}")
        if self.points_per_axis % 2:
            raise InvalidParameterError(f"points per axis must be even, got {self.points_per_axis}")

    @property
    def period(self) -> float:
        return TWO_PI

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def spacing(self) -> float:
        return TWO_PI / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def nyquist(self) -> int:
        """Admissible frequency components lie in [-nyquist, nyquist)."""
        return self.points_per_axis // 2

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (N^n, n)."""
        axis = self.spacing * np.arange(self.points_per_axis)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer frequencies in FFT order, shape (N^n, n)."""
        axis = np.rint(np.fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis)).astype(int)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        freqs = np.stack([m.reshape(-1) for m in mesh], axis=1)
        freqs.flags.writeable = False
        return freqs

    def frequency_index(self, k: Sequence[int]) -> int:
        """Flat position of the admissible frequency k in the spectrum layout."""
        k = np.asarray(k, dtype=int).reshape(-1)
        if k.size != self.dim:
            raise ShapeError(f"frequency {k.tolist()} has wrong dimension for a {self.dim}-d grid")
        if np.any(k < -self.nyquist) or np.any(k >= self.nyquist):
            raise InvalidParameterError(f"frequency {k.tolist()} is not admissible on N={self.points_per_axis}")
        return int(np.ravel_multi_index(tuple(np.mod(k, self.points_per_axis)), self.shape))


@dataclass(frozen=True, eq=False)
class GridField:
    """
    Vector-valued field sampled on a TorusGrid.

    Args:
        grid: the sampling grid
        samples: complex array of shape (N^n, J); a flat (N^n,) array is read as J = 1
    """

    grid: TorusGrid
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] != self.grid.size or arr.shape[1] < 1:
            raise ShapeError(
                f"samples of shape {np.shape(self.samples)} do not fit a grid with {self.grid.size} nodes"
            )
        object.__setattr__(self, "samples", _freeze_array(arr))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        """Sample fn(nodes) where nodes has shape (N^n, n); fn returns (N^n,) or (N^n, J)."""
        return cls(grid, np.asarray(fn(grid.nodes)))

    @classmethod
    def constant(cls, grid: TorusGrid, value: Union[complex, Sequence[complex]]) -> "GridField":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(grid, np.tile(value, (grid.size, 1)))

    @classmethod
    def zeros(cls, grid: TorusGrid, fiber_rank: int = 1) -> "GridField":
        return cls(grid, np.zeros((grid.size, fiber_rank), dtype=complex))

    @property
    def fiber_rank(self) -> int:
        return self.samples.shape[1]

    def component(self, j: int) -> "GridField":
        return GridField(self.grid, self.samples[:, j])

    def as_grid_array(self) -> np.ndarray:
        """Samples reshaped to (N, ..., N, J)."""
        return self.samples.reshape(self.grid.shape + (self.fiber_rank,))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.samples)))

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.samples.imag), initial=0.0) <= tol)

    def conj(self) -> "GridField":
        return GridField(self.grid, self.samples.conj())

    def sqrt(self) -> "GridField":
        return GridField(self.grid, np.sqrt(self.samples))

    def _combine(self, other, op) -> "GridField":
        if isinstance(other, GridField):
            _check_same_grid(self.grid, other.grid)
            if other.fiber_rank != self.fiber_rank and 1 not in (other.fiber_rank, self.fiber_rank):
                raise ShapeError(f"fiber ranks {self.fiber_rank} and {other.fiber_rank} do not combine")
            return GridField(self.grid, op(self.samples, other.samples))
        return GridField(self.grid, op(self.samples, other))

    def __add__(self, other) -> "GridField":
        return self._combine(other, np.add)

    def __sub__(self, other) -> "GridField":
        return self._combine(other, np.subtract)

    def __mul__(self, other) -> "GridField":
        # scalar GridFields broadcast over the fiber
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self) -> "GridField":
        return GridField(self.grid, -self.samples)


@dataclass(frozen=True, eq=False)
class SpectrumField:
    """
    Discrete Fourier coefficients of a GridField.

    Args:
        grid: the grid the coefficients were computed on
        coefficients: complex array of shape (N^n, J) in FFT frequency order
    """

    grid: TorusGrid
    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coefficients)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] != self.grid.size:
            raise ShapeError(
                f"coefficients of shape {np.shape(self.coefficients)} do not fit a grid with {self.grid.size} nodes"
            )
        object.__setattr__(self, "coefficients", _freeze_array(arr))

    @classmethod
    def delta(cls, grid: TorusGrid, k: Sequence[int], value: Union[complex, Sequence[complex]] = 1.0) -> "SpectrumField":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        coeffs = np.zeros((grid.size, value.size), dtype=complex)
        coeffs[grid.frequency_index(k)] = value
        return cls(grid, coeffs)

    @property
    def fiber_rank(self) -> int:
        return self.coefficients.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def coefficient_at(self, k: Sequence[int]) -> np.ndarray:
        return self.coefficients[self.grid.frequency_index(k)]

    def mass(self) -> float:
        """Plancherel mass sum_k |u_hat_k|^2."""
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def __add__(self, other: "SpectrumField") -> "SpectrumField":
        _check_same_grid(self.grid, other.grid)
        if other.fiber_rank != self.fiber_rank:
            raise ShapeError(f"fiber ranks {self.fiber_rank} and {other.fiber_rank} differ")
        return SpectrumField(self.grid, self.coefficients + other.coefficients)


def _check_same_grid(a: TorusGrid, b: TorusGrid):
    if a != b:
        raise ShapeError(f"grid mismatch: {a} vs {b}")


def forward_fourier(u: GridField) -> SpectrumField:
    """
    Normalized discrete Fourier transform of a grid field.

    Args:
        u: field to transform

    Returns:
        SpectrumField with a plane wave exp(i k.x) mapped to a unit delta at k
    """
    if not u.is_finite():
        raise InvalidInputError("forward_fourier: field has non-finite samples")
    n = u.grid.dim
    coeffs = sp_fft.fftn(u.as_grid_array(), axes=tuple(range(n)), norm="forward")
    return SpectrumField(u.grid, coeffs.reshape(u.grid.size, u.fiber_rank))


def inverse_fourier(s: SpectrumField) -> GridField:
    """Inverse of forward_fourier: u(x_j) = sum_k u_hat_k exp(i k.x_j)."""
    if not np.all(np.isfinite(s.coefficients)):
        raise InvalidInputError("inverse_fourier: spectrum has non-finite coefficients")
    n = s.grid.dim
    arr = s.coefficients.reshape(s.grid.shape + (s.fiber_rank,))
    samples = sp_fft.ifftn(arr, axes=tuple(range(n)), norm="forward")
    return GridField(s.grid, samples.reshape(s.grid.size, s.fiber_rank))


def weak_pairing(u: GridField, psi: GridField, density: Optional[GridField] = None) -> complex:
    """
    Grid quadrature of the distributional pairing int u psi rho dx.

    Args:
        u: scalar field (vector pairings are assembled by callers)
        psi: scalar test function
        density: optional scalar volume density rho (defaults to 1)

    Returns:
        (2*pi/N)^n sum_j u(x_j) psi(x_j) rho(x_j); no complex conjugation
    """
    _check_same_grid(u.grid, psi.grid)
    if u.fiber_rank != 1 or psi.fiber_rank != 1:
        raise ShapeError(
            f"weak_pairing expects scalar fields, got fiber ranks {u.fiber_rank} and {psi.fiber_rank}"
        )
    integrand = u.samples[:, 0] * psi.samples[:, 0]
    if density is not None:
        _check_same_grid(u.grid, density.grid)
        if density.fiber_rank != 1:
            raise ShapeError("density must be a scalar field")
        integrand = integrand * density.samples[:, 0]
    return complex(u.grid.cell_volume * np.sum(integrand))


def l2_norm(u: GridField, density: Optional[GridField] = None) -> float:
    """Physical L^2 norm sqrt((2*pi/N)^n sum_j |u(x_j)|^2 rho(x_j))."""
    weights = np.sum(np.abs(u.samples) ** 2, axis=1)
    if density is not None:
        _check_same_grid(u.grid, density.grid)
        weights = weights * np.abs(density.samples[:, 0])
    return float(np.sqrt(u.grid.cell_volume * np.sum(weights)))


def sobolev_norm(u: GridField, s: float) -> float:
    """
    Spectral H^s norm with the standard weight (1 + |k|^2)^s.

    Args:
        u: field (the fiber norm is Euclidean)
        s: Sobolev order, any real

    Returns:
        sqrt(sum_k (1 + |k|^2)^s |u_hat_k|^2)
    """
    return spectral_sobolev_norm(forward_fourier(u), s)


def spectral_sobolev_norm(spectrum: SpectrumField, s: float) -> float:
    """H^s norm computed directly from Fourier coefficients."""
    k2 = np.sum(spectrum.frequencies.astype(float) ** 2, axis=1)
    weights = (1.0 + k2) ** s
    return float(np.sqrt(np.sum(weights * np.sum(np.abs(spectrum.coefficients) ** 2, axis=1))))


def evaluate_spectrum(s: SpectrumField, points: np.ndarray) -> np.ndarray:
    """
    Evaluate the trigonometric polynomial sum_k s_k exp(i k.y) at arbitrary points.

    Args:
        s: spectrum
        points: array (P, n)

    Returns:
        complex array (P, J)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != s.grid.dim:
        raise ShapeError(f"points of dimension {points.shape[1]} on a {s.grid.dim}-d grid")
    phases = np.exp(1j * points @ s.frequencies.T.astype(float))
    return phases @ s.coefficients


def frequency_split(s: SpectrumField, n_cut: float) -> Tuple[SpectrumField, SpectrumField]:
    """
    Split a spectrum at the Euclidean frequency radius n_cut.

    Args:
        s: spectrum to split
        n_cut: cutoff; must stay below N/2 so the split is unambiguous

    Returns:
        (low, high) with low carrying |k| <= n_cut; low + high == s exactly
    """
    if n_cut <= 0:
        raise InvalidParameterError(f"frequency cutoff must be positive, got {n_cut}")
    if n_cut >= s.grid.nyquist:
        raise CutoffTooLargeError(
            f"cutoff {n_cut} >= N/2 = {s.grid.nyquist}; the low band would include aliased frequencies"
        )
    radius = np.sqrt(np.sum(s.frequencies.astype(float) ** 2, axis=1))
    low_mask = (radius <= n_cut)[:, None]
    low = np.where(low_mask, s.coefficients, 0.0)
    high = np.where(low_mask, 0.0, s.coefficients)
    return SpectrumField(s.grid, low), SpectrumField(s.grid, high)


def bandwidth(u: GridField, rel_tol: float = BANDWIDTH_REL_TOL) -> int:
    """Largest |k|_inf carrying a non-negligible coefficient (0 for constants or zero)."""
    spectrum = forward_fourier(u)
    magnitude = np.max(np.abs(spectrum.coefficients), axis=1)
    peak = magnitude.max(initial=0.0)
    if peak == 0.0:
        return 0
    active = magnitude > rel_tol * peak
    return int(np.max(np.abs(spectrum.frequencies[active]), initial=0))


def plane_wave(grid: TorusGrid, k: Sequence[int], fiber_vector: Optional[Sequence[complex]] = None) -> GridField:
    """exp(i k.x) times a constant fiber vector (default: the scalar 1)."""
    k = np.asarray(k, dtype=float).reshape(-1)
    if k.size != grid.dim:
        raise ShapeError(f"frequency {k.tolist()} has wrong dimension for a {grid.dim}-d grid")
    phase = np.exp(1j * grid.nodes @ k)
    vector = np.array([1.0], dtype=complex) if fiber_vector is None else np.asarray(fiber_vector, dtype=complex)
    return GridField(grid, phase[:, None] * vector[None, :])
