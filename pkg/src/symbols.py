"""
Pseudodifferential symbols on R^n (and on the torus charts of the laboratory).

Symbols are closures over a vectorized evaluation function
    fn(x, xi) -> array (M, out_rank, in_rank)
with x and xi of shape (M, n). Built-in differential operators ship with both
their total and principal symbols; principal symbols are never extracted
automatically.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import (
    OSCILLATION_MAX_SHRINKS,
    OSCILLATION_REL_TOL,
    OSCILLATION_RESOLUTION,
    OSCILLATION_SHRINK,
    OSCILLATION_SEED_RADIUS,
    PROBE_FD_STEP,
    PROBE_GROWTH_TOL,
    PROBE_SCALES,
    PROBE_ZERO_FLOOR,
    DEFAULT_SEED,
    MULTIPLIER_DEFECT_TOL,
)
from .errors import (
    ConfigError,
    DegenerateChartError,
    InvalidInputError,
    InvalidParameterError,
    ShapeError,
    UndefinedAtZeroError,
)
from .fitting import loglog_slope

logger = logging.getLogger(__name__)

SymbolFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
CoefficientFn = Callable[[np.ndarray], np.ndarray]


def _as_points(values, dim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got shape {np.shape(values)}")
    return arr


class _MatrixSymbol:
    """Shared plumbing for total and principal symbols."""

    def __init__(self, order: float, in_rank: int, out_rank: int, fn: SymbolFn, dim: int, name: str):
        if in_rank < 1 or out_rank < 1 or dim < 1:
            raise InvalidParameterError(f"symbol {name}: ranks and dimension must be positive")
        self.order = float(order)
        self.in_rank = int(in_rank)
        self.out_rank = int(out_rank)
        self.fn = fn
        self.dim = int(dim)
        self.name = name

    def evaluate_batch(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """
        Evaluate on a batch of (x, xi) pairs.

        Args:
            x: base points, shape (M, n)
            xi: covectors, shape (M, n)

        Returns:
            complex array of shape (M, out_rank, in_rank)
        """
        x = _as_points(x, self.dim)
        xi = _as_points(xi, self.dim)
        if x.shape[0] != xi.shape[0]:
            if x.shape[0] == 1:
                x = np.repeat(x, xi.shape[0], axis=0)
            elif xi.shape[0] == 1:
                xi = np.repeat(xi, x.shape[0], axis=0)
            else:
                raise ShapeError(f"{x.shape[0]} base points vs {xi.shape[0]} covectors")
        values = np.asarray(self.fn(x, xi), dtype=complex)
        expected = (x.shape[0], self.out_rank, self.in_rank)
        if values.shape != expected:
            raise ShapeError(f"symbol {self.name} returned shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"symbol {self.name} returned non-finite values")
        return values

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, order={self.order}, {self.out_rank}x{self.in_rank}, n={self.dim})"


def _multiplier_check_samples(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed base points in [0, 2pi)^n and covectors of length 1 and 3."""
    offsets = 0.7 + 0.4 * np.arange(dim)
    points = np.mod(np.stack([offsets + 1.9 * j for j in range(3)]), 2.0 * np.pi)
    directions = unit_sphere_samples(dim, 4, hemisphere=False)
    return points, np.vstack([directions, 3.0 * directions])


class Symbol(_MatrixSymbol):
    """
    Total symbol a(x, xi) of order s mapping C^J -> C^I.

    Args:
        order: symbol order s
        in_rank: J, rank of the source bundle
        out_rank: I, rank of the target bundle
        fn: vectorized evaluation function
        dim: spatial dimension n
        name: registry / display name
        is_multiplier: a does not depend on x (Fourier multiplier)
        is_polynomial_in_xi: a is polynomial in xi (differential operator)
        separable_terms: optional list of (c_m(x), b_m(xi)) with a = sum_m c_m(x) b_m(xi),
            c_m returning (M,) scalars and b_m returning (M, I, J)
    """

    def __init__(
        self,
        order: float,
        in_rank: int,
        out_rank: int,
        fn: SymbolFn,
        dim: int,
        name: str = "symbol",
        is_multiplier: bool = False,
        is_polynomial_in_xi: bool = False,
        separable_terms: Optional[Sequence[Tuple[CoefficientFn, Callable[[np.ndarray], np.ndarray]]]] = None,
    ):
        super().__init__(order, in_rank, out_rank, fn, dim, name)
        self.is_multiplier = bool(is_multiplier)
        self.is_polynomial_in_xi = bool(is_polynomial_in_xi)
        self.separable_terms = tuple(separable_terms) if separable_terms else None
        if self.is_multiplier:
            points, covectors = _multiplier_check_samples(self.dim)
            defect = self.multiplier_defect(points, covectors)
            if defect > MULTIPLIER_DEFECT_TOL:
                raise InvalidInputError(f"symbol {name} is flagged as a multiplier but depends on x (defect {defect:.3e})")

    def multiplier_defect(self, sample_points: np.ndarray, covectors: np.ndarray) -> float:
        """Spot-check of the multiplier flag: max |a(x, xi) - a(0, xi)| on the samples."""
        pts = _as_points(sample_points, self.dim)
        cov = _as_points(covectors, self.dim)
        x = np.repeat(pts, cov.shape[0], axis=0)
        xi = np.tile(cov, (pts.shape[0], 1))
        at_x = self.evaluate_batch(x, xi)
        at_0 = self.evaluate_batch(np.zeros_like(x), xi)
        return float(np.max(np.abs(at_x - at_0), initial=0.0))


class PrincipalSymbol(_MatrixSymbol):
    """
    Degree-s positively homogeneous principal symbol sigma(x, xi), xi != 0.

    Args:
        order: homogeneity degree s
        in_rank: J
        out_rank: I
        fn: vectorized evaluation function
        dim: spatial dimension n
        name: display name
        is_polynomial: sigma is a homogeneous polynomial in xi (defined at xi = 0)
    """

    def __init__(
        self,
        order: float,
        in_rank: int,
        out_rank: int,
        fn: SymbolFn,
        dim: int,
        name: str = "principal",
        is_polynomial: bool = False,
    ):
        super().__init__(order, in_rank, out_rank, fn, dim, name)
        self.is_polynomial = bool(is_polynomial)


def evaluate(a: Union[Symbol, PrincipalSymbol], x: Sequence[float], xi: Sequence[float]) -> np.ndarray:
    """
    Evaluate a symbol at a single point.

    Args:
        a: total or principal symbol
        x: base point in R^n
        xi: covector in R^n

    Returns:
        complex I x J matrix a(x, xi)
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if isinstance(a, PrincipalSymbol) and not np.any(xi):
        if a.order < 0 or not a.is_polynomial:
            raise UndefinedAtZeroError(f"principal symbol {a.name} is undefined at xi = 0")
    return a.evaluate_batch(np.asarray(x, dtype=float).reshape(1, -1), xi.reshape(1, -1))[0]


# ---------------------------------------------------------------------------
# Covector sampling
# ---------------------------------------------------------------------------

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def unit_sphere_samples(dim: int, count: int, hemisphere: bool = True, seed: int = DEFAULT_SEED) -> np.ndarray:
    """
    Deterministic quasi-uniform unit covectors.

    With hemisphere=True no two samples are antipodal (kernels at +xi and -xi
    coincide, so one representative per pair is enough): n = 1 gives [+1],
    n = 2 an angle grid on [0, pi), n = 3 a Fibonacci spiral on the upper
    half-sphere, n >= 4 seeded Gaussian directions.

    Args:
        dim: dimension n
        count: requested number of samples (n = 1 returns at most 2)
        hemisphere: drop antipodes
        seed: seed for n >= 4

    Returns:
        array of shape (count', n) with unit rows
    """
    if count < 1:
        raise InvalidParameterError(f"need at least one sphere sample, got {count}")
    if dim == 1:
        return np.array([[1.0]]) if hemisphere else np.array([[1.0], [-1.0]])
    if dim == 2:
        span = np.pi if hemisphere else 2.0 * np.pi
        theta = span * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - i / count if hemisphere else 1.0 - 2.0 * i / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z ** 2))
        phi = GOLDEN_ANGLE * np.arange(count)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((count, dim))
    samples /= np.linalg.norm(samples, axis=1, keepdims=True)
    if hemisphere:
        first = samples[np.arange(count), np.argmax(np.abs(samples) > 1e-12, axis=1)]
        samples *= np.sign(first)[:, None]
    return samples


def compactify_covector(xi: np.ndarray) -> np.ndarray:
    """Frequency-space compactification eta(xi) = xi (1 + |xi|^2)^{-1/2}, mapping R^n into the unit ball."""
    xi = np.asarray(xi, dtype=float)
    return xi / np.sqrt(1.0 + np.sum(xi ** 2, axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# Built-in symbols
# ---------------------------------------------------------------------------


def _zeros(m: int, rows: int, cols: int) -> np.ndarray:
    return np.zeros((m, rows, cols), dtype=complex)


def _div_fn(x, xi):
    out = _zeros(xi.shape[0], 1, xi.shape[1])
    out[:, 0, :] = 1j * xi
    return out


def _curl_fn(x, xi):
    out = _zeros(xi.shape[0], 3, 3)
    out[:, 0, 1] = -xi[:, 2]
    out[:, 0, 2] = xi[:, 1]
    out[:, 1, 0] = xi[:, 2]
    out[:, 1, 2] = -xi[:, 0]
    out[:, 2, 0] = -xi[:, 1]
    out[:, 2, 1] = xi[:, 0]
    return 1j * out


def _divcurl_fn(x, xi):
    out = _zeros(xi.shape[0], 4, 6)
    out[:, 0:1, 0:3] = _div_fn(x, xi)
    out[:, 1:4, 3:6] = _curl_fn(x, xi)
    return out


def _grad_fn(x, xi):
    return (1j * xi)[:, :, None].astype(complex)


def _laplace_fn(x, xi):
    return (-np.sum(xi ** 2, axis=1)).astype(complex).reshape(-1, 1, 1)


def _dx1_fn(x, xi):
    return (1j * xi[:, 0]).reshape(-1, 1, 1)


def _proj_first_fn(x, xi):
    out = _zeros(xi.shape[0], xi.shape[1], 2)
    out[:, :, 0] = 1j * xi
    return out


def _riesz1_total_fn(x, xi):
    return (xi[:, 0] / np.sqrt(1.0 + np.sum(xi ** 2, axis=1))).astype(complex).reshape(-1, 1, 1)


def _riesz1_principal_fn(x, xi):
    with np.errstate(invalid="ignore", divide="ignore"):
        return (xi[:, 0] / np.linalg.norm(xi, axis=1)).astype(complex).reshape(-1, 1, 1)


def _zero_fn(x, xi):
    return _zeros(xi.shape[0], 1, 1)


def scaling_coefficient(x: np.ndarray) -> np.ndarray:
    """Smooth scalar coefficient 1 + cos(x_1)/2 used by the "scaled:<name>" symbols."""
    return 1.0 + 0.5 * np.cos(np.asarray(x)[:, 0])


# name -> (order, in_rank(dim), out_rank(dim), total fn, principal fn, polynomial, required dim)
_BUILTINS: Dict[str, Tuple] = {
    "div3": (1, lambda n: 3, lambda n: 1, _div_fn, _div_fn, True, 3),
    "curl3": (1, lambda n: 3, lambda n: 3, _curl_fn, _curl_fn, True, 3),
    "divcurl6": (1, lambda n: 6, lambda n: 4, _divcurl_fn, _divcurl_fn, True, 3),
    "grad": (1, lambda n: 1, lambda n: n, _grad_fn, _grad_fn, True, None),
    "laplace": (2, lambda n: 1, lambda n: 1, _laplace_fn, _laplace_fn, True, None),
    "dx1": (1, lambda n: 1, lambda n: 1, _dx1_fn, _dx1_fn, True, None),
    "proj_first": (1, lambda n: 2, lambda n: n, _proj_first_fn, _proj_first_fn, True, None),
    "riesz1": (0, lambda n: 1, lambda n: 1, _riesz1_total_fn, _riesz1_principal_fn, False, None),
    "zero": (1, lambda n: 1, lambda n: 1, _zero_fn, _zero_fn, True, None),
}


def _multiplier_part(fn: SymbolFn) -> Callable[[np.ndarray], np.ndarray]:
    return lambda xi: fn(np.zeros_like(xi), xi)


def get_symbol(name: str, dim: int) -> Tuple[Symbol, PrincipalSymbol]:
    """
    Look up a built-in operator by registry name.

    Args:
        name: one of BUILTIN_SYMBOLS, or "scaled:<name>" for the same operator
            with the smooth coefficient 1 + cos(x_1)/2 in front
        dim: spatial dimension n

    Returns:
        (total symbol, principal symbol)
    """
    if name.startswith("scaled:"):
        base, base_principal = get_symbol(name.split(":", 1)[1], dim)
        return _scaled(base, base_principal)
    if name not in _BUILTINS:
        raise ConfigError(f"unknown symbol {name!r}; known: {sorted(_BUILTINS)} and scaled:<name>")
    order, in_rank, out_rank, total_fn, principal_fn, polynomial, required_dim = _BUILTINS[name]
    if required_dim is not None and dim != required_dim:
        raise ConfigError(f"symbol {name!r} lives in dimension {required_dim}, not {dim}")
    total = Symbol(
        order,
        in_rank(dim),
        out_rank(dim),
        total_fn,
        dim,
        name=name,
        is_multiplier=True,
        is_polynomial_in_xi=polynomial,
    )
    principal = PrincipalSymbol(order, in_rank(dim), out_rank(dim), principal_fn, dim, name=name, is_polynomial=polynomial)
    return total, principal


def _scaled(base: Symbol, base_principal: PrincipalSymbol) -> Tuple[Symbol, PrincipalSymbol]:
    def total_fn(x, xi):
        return scaling_coefficient(x)[:, None, None] * base.fn(x, xi)

    def principal_fn(x, xi):
        return scaling_coefficient(x)[:, None, None] * base_principal.fn(x, xi)

    terms = [(scaling_coefficient, _multiplier_part(base.fn))] if base.is_multiplier else None
    name = f"scaled:{base.name}"
    total = Symbol(
        base.order,
        base.in_rank,
        base.out_rank,
        total_fn,
        base.dim,
        name=name,
        is_multiplier=False,
        is_polynomial_in_xi=base.is_polynomial_in_xi,
        separable_terms=terms,
    )
    principal = PrincipalSymbol(
        base_principal.order,
        base_principal.in_rank,
        base_principal.out_rank,
        principal_fn,
        base.dim,
        name=name,
        is_polynomial=base_principal.is_polynomial,
    )
    return total, principal


def first_order_symbol(coefficients: np.ndarray, name: str = "first-order") -> Tuple[Symbol, PrincipalSymbol]:
    """
    Constant-coefficient first-order system (A u)_i = sum_{j,k} a_ijk d_k u^j.

    Args:
        coefficients: array a of shape (q, p, n)
        name: display name

    Returns:
        (total symbol, principal symbol), both equal to i sum_k a_ijk xi_k
    """
    a = np.asarray(coefficients, dtype=float)
    if a.ndim != 3:
        raise ConfigError(f"a_ijk must have shape (q, p, n), got {a.shape}")
    q, p, n = a.shape

    def fn(x, xi):
        return 1j * np.einsum("ijk,mk->mij", a, xi)

    total = Symbol(1, p, q, fn, n, name=name, is_multiplier=True, is_polynomial_in_xi=True)
    principal = PrincipalSymbol(1, p, q, fn, n, name=name, is_polynomial=True)
    return total, principal


def list_symbols() -> List[str]:
    return sorted(_BUILTINS) + ["scaled:<name>"]


# ---------------------------------------------------------------------------
# Symbol-class probe
# ---------------------------------------------------------------------------


@dataclass
class SymbolClassEntry:
    """Observed ratios |d_x^alpha d_xi^beta a| / (1 + |xi|)^{m - |beta|} for one multi-index pair."""

    alpha: Tuple[int, ...]
    beta: Tuple[int, ...]
    ratios: Tuple[float, ...]
    max_ratio: float
    growth_slope: float
    bounded: bool


@dataclass
class SymbolClassReport:
    symbol: str
    order: float
    scales: Tuple[float, ...]
    entries: List[SymbolClassEntry] = field(default_factory=list)

    @property
    def passes(self) -> bool:
        return all(e.bounded for e in self.entries)

    @property
    def violations(self) -> List[SymbolClassEntry]:
        return [e for e in self.entries if not e.bounded]

    def entry(self, alpha: Sequence[int], beta: Sequence[int]) -> SymbolClassEntry:
        for e in self.entries:
            if e.alpha == tuple(alpha) and e.beta == tuple(beta):
                return e
        raise KeyError((tuple(alpha), tuple(beta)))


def _multi_indices(dim: int, max_order: int) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    pairs = []
    for gamma in itertools.product(range(max_order + 1), repeat=2 * dim):
        if sum(gamma) <= max_order:
            pairs.append((tuple(gamma[:dim]), tuple(gamma[dim:])))
    pairs.sort(key=lambda ab: (sum(ab[0]) + sum(ab[1]), ab[1], ab[0]))
    return pairs


def _difference_stencil(gamma: Sequence[int]) -> List[Tuple[np.ndarray, float]]:
    stencil = {tuple([0] * len(gamma)): 1.0}
    for axis, count in enumerate(gamma):
        for _ in range(count):
            expanded: Dict[Tuple[int, ...], float] = {}
            for offset, weight in stencil.items():
                for sign in (1, -1):
                    shifted = list(offset)
                    shifted[axis] += sign
                    key = tuple(shifted)
                    expanded[key] = expanded.get(key, 0.0) + 0.5 * sign * weight
            stencil = {k: w for k, w in expanded.items() if w != 0.0}
    return [(np.array(k, dtype=float), w) for k, w in stencil.items()]


def symbol_class_probe(
    a: Symbol,
    sample_points: Sequence[Sequence[float]],
    max_multi_index_order: int = 1,
    scales: Sequence[float] = PROBE_SCALES,
    direction_count: int = 8,
    step: float = PROBE_FD_STEP,
) -> SymbolClassReport:
    """
    Finite-difference estimate of the S^m seminorm ratios across dyadic |xi| scales.

    Args:
        a: symbol with declared order m
        sample_points: base points x
        max_multi_index_order: largest |alpha| + |beta| probed
        scales: |xi| magnitudes (should span several dyadic scales)
        direction_count: unit directions per scale
        step: finite-difference step (relative to max(1, |xi|) in the xi variables)

    Returns:
        SymbolClassReport; an entry is bounded when its ratios show no growth
        trend over the three largest scales
    """
    dim = a.dim
    points = _as_points(sample_points, dim)
    directions = unit_sphere_samples(dim, direction_count, hemisphere=False)
    scales = tuple(float(s) for s in scales)

    # base (x, xi) pairs grouped by scale
    base_x, base_xi, scale_index = [], [], []
    for si, scale in enumerate(scales):
        for x in points:
            for omega in directions:
                base_x.append(x)
                base_xi.append(scale * omega)
                scale_index.append(si)
    base_x = np.array(base_x)
    base_xi = np.array(base_xi)
    scale_index = np.array(scale_index)
    base_z = np.concatenate([base_x, base_xi], axis=1)
    xi_norm = np.linalg.norm(base_xi, axis=1)
    steps = np.concatenate(
        [np.full_like(base_x, step), step * np.maximum(1.0, xi_norm)[:, None] * np.ones_like(base_xi)], axis=1
    )

    report = SymbolClassReport(symbol=a.name, order=a.order, scales=scales)
    tail = slice(max(0, len(scales) - 3), len(scales))
    for alpha, beta in _multi_indices(dim, max_multi_index_order):
        gamma = np.array(alpha + beta)
        stencil = _difference_stencil(gamma)
        derivative = np.zeros((base_z.shape[0], a.out_rank, a.in_rank), dtype=complex)
        for offset, weight in stencil:
            z = base_z + offset[None, :] * steps
            derivative += weight * a.evaluate_batch(z[:, :dim], z[:, dim:])
        derivative /= np.prod(steps ** gamma[None, :], axis=1)[:, None, None]
        magnitude = np.linalg.norm(derivative, axis=(1, 2))
        ratio = magnitude / (1.0 + xi_norm) ** (a.order - sum(beta))
        per_scale = tuple(float(np.max(ratio[scale_index == si])) for si in range(len(scales)))
        tail_scales = np.array(scales[tail])
        tail_ratios = np.array(per_scale[tail])
        if np.max(tail_ratios) < PROBE_ZERO_FLOOR or tail_scales.size < 2:
            slope = 0.0
        else:
            slope = loglog_slope(1.0 + tail_scales, tail_ratios, floor=PROBE_ZERO_FLOOR)
        report.entries.append(
            SymbolClassEntry(
                alpha=alpha,
                beta=beta,
                ratios=per_scale,
                max_ratio=float(max(per_scale)),
                growth_slope=slope,
                bounded=slope <= PROBE_GROWTH_TOL,
            )
        )
    if not report.passes:
        logger.warning(
            f"symbol {a.name} (declared order {a.order}) shows growth in "
            f"{[(e.alpha, e.beta) for e in report.violations]}"
        )
    return report


# ---------------------------------------------------------------------------
# Homogeneity, coordinate changes, freezing
# ---------------------------------------------------------------------------


def homogeneity_defect(p: PrincipalSymbol, x: Sequence[float], xi: Sequence[float], t: float) -> float:
    """
    Frobenius norm of p(x, t xi) - t^s p(x, xi).

    Args:
        p: principal symbol of degree s
        x: base point
        xi: covector with |xi| >= 1
        t: dilation factor >= 1

    Returns:
        0 for an exactly homogeneous symbol
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if np.linalg.norm(xi) < 1.0 - 1e-12 or t < 1.0:
        raise InvalidParameterError(f"homogeneity is probed for |xi| >= 1 and t >= 1 (got |xi|={np.linalg.norm(xi)}, t={t})")
    scaled = evaluate(p, x, t * xi)
    base = evaluate(p, x, xi)
    return float(np.linalg.norm(scaled - t ** p.order * base))


class Diffeomorphism:
    """
    Chart map chi with its inverse and jacobian, all vectorized over (M, n) points.

    Args:
        dim: dimension n
        forward: x -> chi(x)
        inverse: y -> chi^{-1}(y)
        jacobian: x -> D chi(x), shape (M, n, n)
        name: display name
    """

    def __init__(
        self,
        dim: int,
        forward: Callable[[np.ndarray], np.ndarray],
        inverse: Callable[[np.ndarray], np.ndarray],
        jacobian: Callable[[np.ndarray], np.ndarray],
        name: str = "chart",
    ):
        self.dim = int(dim)
        self.forward = forward
        self.inverse = inverse
        self.jacobian = jacobian
        self.name = name

    def check(self, sample_points: np.ndarray, tol: float = 1e-10) -> float:
        """Verify forward(inverse(y)) = y and nonsingular jacobians; returns the round-trip defect."""
        pts = _as_points(sample_points, self.dim)
        det = np.linalg.det(self.jacobian(pts))
        if np.any(np.abs(det) < 1e-12):
            bad = pts[np.argmin(np.abs(det))]
            raise DegenerateChartError(f"chart {self.name} has a singular jacobian at {bad.tolist()}")
        defect = float(np.max(np.abs(self.forward(self.inverse(pts)) - pts), initial=0.0))
        if defect > tol:
            raise DegenerateChartError(f"chart {self.name}: forward o inverse differs from identity by {defect:.3e}")
        return defect

    def compose(self, inner: "Diffeomorphism") -> "Diffeomorphism":
        """self o inner."""
        outer = self
        return Diffeomorphism(
            self.dim,
            lambda x: outer.forward(inner.forward(x)),
            lambda y: inner.inverse(outer.inverse(y)),
            lambda x: np.einsum("mij,mjk->mik", outer.jacobian(inner.forward(x)), inner.jacobian(x)),
            name=f"{outer.name}o{inner.name}",
        )

    @classmethod
    def linear(cls, matrix: np.ndarray, shift: Optional[Sequence[float]] = None, name: str = "linear") -> "Diffeomorphism":
        A = np.asarray(matrix, dtype=float)
        if abs(np.linalg.det(A)) < 1e-12:
            raise DegenerateChartError(f"linear chart {name} is singular")
        b = np.zeros(A.shape[0]) if shift is None else np.asarray(shift, dtype=float)
        A_inv = np.linalg.inv(A)
        return cls(
            A.shape[0],
            lambda x: x @ A.T + b,
            lambda y: (y - b) @ A_inv.T,
            lambda x: np.broadcast_to(A, (x.shape[0],) + A.shape).copy(),
            name=name,
        )

    @classmethod
    def identity(cls, dim: int) -> "Diffeomorphism":
        return cls.linear(np.eye(dim), name="identity")

    @classmethod
    def rotation(cls, angle: float, dim: int = 2) -> "Diffeomorphism":
        """Rotation by angle in the (x_1, x_2) plane."""
        R = np.eye(dim)
        c, s = np.cos(angle), np.sin(angle)
        R[:2, :2] = [[c, -s], [s, c]]
        return cls.linear(R, name=f"rotation({angle:g})")

    @classmethod
    def sine_perturbation(cls, dim: int, amplitude: float) -> "Diffeomorphism":
        """chi(x)_i = x_i + amplitude * sin(x_i); inverse by Newton iteration (|amplitude| < 1)."""
        if not abs(amplitude) < 1.0:
            raise DegenerateChartError(f"sine chart needs |amplitude| < 1, got {amplitude}")

        def forward(x):
            return x + amplitude * np.sin(x)

        def inverse(y):
            x = np.array(y, dtype=float, copy=True)
            for _ in range(60):
                delta = (x + amplitude * np.sin(x) - y) / (1.0 + amplitude * np.cos(x))
                x = x - delta
                if np.max(np.abs(delta), initial=0.0) < 1e-15:
                    break
            return x

        def jacobian(x):
            return np.einsum("mi,ij->mij", 1.0 + amplitude * np.cos(x), np.eye(dim))

        return cls(dim, forward, inverse, jacobian, name=f"sine({amplitude:g})")


def get_diffeomorphism(spec: str, dim: int) -> Diffeomorphism:
    """Registry: "identity", "linear:<factor>", "rotation:<angle>", "sine:<amplitude>"."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "identity":
            return Diffeomorphism.identity(dim)
        if kind == "linear":
            return Diffeomorphism.linear(float(arg) * np.eye(dim), name=spec)
        if kind == "rotation":
            if dim < 2:
                raise ConfigError("rotation charts need dimension >= 2")
            return Diffeomorphism.rotation(float(arg), dim)
        if kind == "sine":
            return Diffeomorphism.sine_perturbation(dim, float(arg))
    except ValueError as e:
        raise ConfigError(f"bad diffeomorphism spec {spec!r}: {e}") from e
    raise ConfigError(f"unknown diffeomorphism {spec!r}")


def pushforward(p: PrincipalSymbol, chi: Diffeomorphism, sample_points: Optional[np.ndarray] = None) -> PrincipalSymbol:
    """
    Principal symbol of chi_* A: q(y, eta) = p(chi^{-1}(y), Dchi(chi^{-1}(y))^T eta).

    Args:
        p: principal symbol in the source chart
        chi: chart change
        sample_points: optional points (source chart) checked for jacobian degeneracy up front

    Returns:
        PrincipalSymbol of the same degree in the target chart
    """
    if chi.dim != p.dim:
        raise ShapeError(f"chart dimension {chi.dim} does not match symbol dimension {p.dim}")
    if sample_points is not None:
        chi.check(chi.forward(_as_points(sample_points, p.dim)))

    def fn(y, eta):
        x = chi.inverse(y)
        jac = chi.jacobian(x)
        det = np.linalg.det(jac)
        if np.any(np.abs(det) < 1e-12):
            raise DegenerateChartError(f"chart {chi.name} is singular at {x[np.argmin(np.abs(det))].tolist()}")
        xi = np.einsum("mji,mj->mi", jac, eta)
        return p.fn(x, xi)

    return PrincipalSymbol(p.order, p.in_rank, p.out_rank, fn, p.dim, name=f"{chi.name}*{p.name}", is_polynomial=p.is_polynomial)


def _low_frequency_cutoff(t: np.ndarray) -> np.ndarray:
    """Smooth chi(|xi|): 0 for |xi| <= 1/2, 1 for |xi| >= 1."""
    s = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)

    def ramp(v):
        out = np.zeros_like(v)
        pos = v > 0.0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    up, down = ramp(s), ramp(1.0 - s)
    return up / (up + down)


def freeze(a: Union[Symbol, PrincipalSymbol], x_nu: Sequence[float]) -> Symbol:
    """
    Freeze the coefficients at x_nu: b(xi) = a(x_nu, xi), a Fourier multiplier.

    Non-polynomial principal symbols are only honored for |xi| >= 1; below that
    they are multiplied by a smooth cutoff so b stays finite at xi = 0.

    Args:
        a: total or principal symbol
        x_nu: freezing point

    Returns:
        Symbol with is_multiplier set (a itself when already a multiplier)
    """
    if isinstance(a, Symbol) and a.is_multiplier:
        return a
    center = np.asarray(x_nu, dtype=float).reshape(1, -1)
    if center.shape[1] != a.dim:
        raise ShapeError(f"freezing point has dimension {center.shape[1]}, symbol has {a.dim}")
    polynomial = a.is_polynomial_in_xi if isinstance(a, Symbol) else a.is_polynomial
    cut_low = isinstance(a, PrincipalSymbol) and not polynomial

    def fn(x, xi):
        if not cut_low:
            return a.fn(np.repeat(center, xi.shape[0], axis=0), xi)
        values = np.zeros((xi.shape[0], a.out_rank, a.in_rank), dtype=complex)
        weight = _low_frequency_cutoff(np.linalg.norm(xi, axis=1))
        live = weight > 0.0
        if np.any(live):
            raw = np.asarray(a.fn(np.repeat(center, int(live.sum()), axis=0), xi[live]), dtype=complex)
            values[live] = weight[live, None, None] * raw
        return values

    return Symbol(
        a.order,
        a.in_rank,
        a.out_rank,
        fn,
        a.dim,
        name=f"{a.name}@{np.round(center[0], 6).tolist()}",
        is_multiplier=True,
        is_polynomial_in_xi=polynomial,
    )


# ---------------------------------------------------------------------------
# Oscillation radius (coefficient freezing)
# ---------------------------------------------------------------------------


def _ball_offsets(dim: int, resolution: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, resolution)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    cube = np.stack([m.reshape(-1) for m in mesh], axis=1)
    inside = cube[np.linalg.norm(cube, axis=1) <= 1.0 + 1e-12]
    sphere = unit_sphere_samples(dim, max(2 * dim, resolution), hemisphere=False)
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    return np.vstack([inside, sphere, axes])


def _coefficient_sampler(coeffs, dim: int) -> CoefficientFn:
    """Map symbols to x -> (M, D, I, J) on unit covectors; callables pass through."""
    if isinstance(coeffs, _MatrixSymbol):
        directions = unit_sphere_samples(dim, 16, hemisphere=False)

        def sample(points):
            m = points.shape[0]
            x = np.repeat(points, directions.shape[0], axis=0)
            xi = np.tile(directions, (m, 1))
            values = coeffs.evaluate_batch(x, xi)
            return values.reshape(m, directions.shape[0], coeffs.out_rank, coeffs.in_rank)

        return sample

    def sample(points):
        values = np.asarray(coeffs(points), dtype=complex)
        if values.ndim == 1:
            values = values.reshape(-1, 1, 1)
        elif values.ndim == 2:
            values = values[:, None, :]
        return values

    return sample


def sampled_oscillation(coeffs, center: Sequence[float], radius: float, resolution: int = OSCILLATION_RESOLUTION) -> float:
    """
    Sampled sup over B(center, radius) of ||c(x) - c(center)|| (spectral norm,
    also maximized over unit covectors when coeffs is a symbol).
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    sampler = _coefficient_sampler(coeffs, center.size)
    offsets = _ball_offsets(center.size, resolution)
    points = center[None, :] + radius * offsets
    values = sampler(points)
    reference = sampler(center[None, :])
    diff = values - reference
    return float(np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1)), initial=0.0))


def oscillation_radius(
    coeffs,
    center: Sequence[float],
    gamma: float,
    seed_radius: float = OSCILLATION_SEED_RADIUS,
    resolution: int = OSCILLATION_RESOLUTION,
    rel_tol: float = OSCILLATION_REL_TOL,
) -> float:
    """
    Largest radius (up to seed_radius) with sampled coefficient oscillation below gamma.

    Args:
        coeffs: Symbol / PrincipalSymbol (oscillation also taken over |xi| = 1),
            or a callable x -> matrices such as QuadraticForm.coeff
        center: ball center x_nu
        gamma: oscillation threshold
        seed_radius: largest radius considered (returned as-is for constants)
        resolution: ball samples per axis
        rel_tol: bisection stops when the bracket is below rel_tol * seed_radius

    Returns:
        r > 0 with sampled_oscillation below gamma at resolution and at 2 * resolution - 1
    """
    if not gamma > 0.0:
        raise InvalidParameterError(f"oscillation threshold gamma must be positive, got {gamma}")
    fine = 2 * resolution - 1

    def below(r):
        return (
            sampled_oscillation(coeffs, center, r, resolution) < gamma
            and sampled_oscillation(coeffs, center, r, fine) < gamma
        )

    if below(seed_radius):
        return float(seed_radius)
    lo, hi = 0.0, float(seed_radius)
    while hi - lo > rel_tol * seed_radius:
        mid = 0.5 * (lo + hi)
        if sampled_oscillation(coeffs, center, mid, resolution) < gamma:
            lo = mid
        else:
            hi = mid
    # the sampled sup is not monotone in r; shrink until the finer sample agrees
    for _ in range(OSCILLATION_MAX_SHRINKS):
        if lo <= rel_tol * seed_radius or below(lo):
            break
        lo *= OSCILLATION_SHRINK
    if lo <= rel_tol * seed_radius or not below(lo):
        raise InvalidParameterError(f"coefficients oscillate by >= {gamma} on every ball around {list(center)}")
    return lo
