"""
Operator cones, quadratic forms on them, and Garding-type constants.

The cone at x is the set of real fiber vectors killed by the principal symbol
at some unit covector. Kernels come from scipy's SVD-based null_space: the
complex kernel from the symbol matrix itself, the real kernel from the
stacked matrix [Re M; Im M].
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh, null_space, svdvals

from .config import (
    CONE_PROBE_COUNT,
    CONE_RESIDUAL_TOL,
    DEFAULT_SEED,
    GARDING_HYPOTHESIS_TOL,
    GARDING_RESAMPLE_FACTOR,
    GARDING_SAFETY_FACTOR,
    GARDING_SLACK_TOL,
    GARDING_VECTOR_SAMPLES,
    KERNEL_TOL,
    SPHERE_SAMPLES,
)
from .errors import (
    ConfigError,
    HypothesisViolationError,
    InvalidCovectorError,
    InvalidInputError,
    InvalidParameterError,
    ShapeError,
)
from .grid import GridField
from .symbols import PrincipalSymbol, evaluate, unit_sphere_samples

logger = logging.getLogger(__name__)


class QuadraticForm:
    """
    Quadratic form Q(x, v) = sum_jk Q_jk(x) v^j conj(v^k) on a rank-J fiber.

    Args:
        fiber_rank: J
        coeff: vectorized x (M, n) -> (M, J, J) coefficient matrices
        is_constant: coefficients do not depend on x
        name: registry / display name
    """

    def __init__(self, fiber_rank: int, coeff: Callable[[np.ndarray], np.ndarray], is_constant: bool = False, name: str = "Q"):
        self.fiber_rank = int(fiber_rank)
        self.coeff = coeff
        self.is_constant = bool(is_constant)
        self.name = name

    @classmethod
    def constant(cls, matrix, name: str = "Q") -> "QuadraticForm":
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ShapeError(f"quadratic form {name} needs a square matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise InvalidInputError(f"quadratic form {name} has non-finite coefficients")

        def coeff(points):
            points = np.atleast_2d(points)
            return np.broadcast_to(matrix, (points.shape[0],) + matrix.shape).copy()

        return cls(matrix.shape[0], coeff, is_constant=True, name=name)

    def matrices(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(self.coeff(points), dtype=complex)
        expected = (points.shape[0], self.fiber_rank, self.fiber_rank)
        if values.shape != expected:
            raise ShapeError(f"quadratic form {self.name} returned shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"quadratic form {self.name} has non-finite coefficients")
        return values

    def matrix_at(self, x: Sequence[float]) -> np.ndarray:
        return self.matrices(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def polar(self, x: Sequence[float], a: np.ndarray, b: np.ndarray) -> complex:
        """q(x; a, b) = sum_jk Q_jk(x) a^j conj(b^k)."""
        return complex(np.asarray(a) @ self.matrix_at(x) @ np.conj(np.asarray(b)))

    def evaluate(self, x: Sequence[float], v: np.ndarray) -> complex:
        return self.polar(x, v, v)

    def polar_field(self, a: GridField, b: GridField) -> GridField:
        """Pointwise q(x_j; a(x_j), b(x_j)) as a scalar field."""
        if a.fiber_rank != self.fiber_rank or b.fiber_rank != self.fiber_rank:
            raise ShapeError(
                f"quadratic form {self.name} acts on rank {self.fiber_rank}, got {a.fiber_rank} and {b.fiber_rank}"
            )
        Q = self.matrices(a.grid.nodes)
        return GridField(a.grid, np.einsum("mj,mjk,mk->m", a.samples, Q, np.conj(b.samples)))

    def evaluate_field(self, u: GridField) -> GridField:
        return self.polar_field(u, u)

    def frozen(self, x_nu: Sequence[float]) -> "QuadraticForm":
        """Constant form with coefficients Q_jk(x_nu)."""
        return QuadraticForm.constant(self.matrix_at(x_nu), name=f"{self.name}@{np.round(np.asarray(x_nu, float), 6).tolist()}")

    def __repr__(self) -> str:
        return f"QuadraticForm({self.name!r}, J={self.fiber_rank}, constant={self.is_constant})"


def _variable12(points):
    x1 = np.atleast_2d(points)[:, 0]
    out = np.zeros((x1.size, 2, 2), dtype=complex)
    out[:, 0, 0] = 1.0 + 0.5 * np.cos(x1)
    out[:, 0, 1] = 0.3 * np.sin(x1)
    out[:, 1, 0] = 0.3 * np.sin(x1)
    return out


def get_quadform(spec) -> QuadraticForm:
    """
    Resolve a quadratic form from a registry name or an inline {"matrix": [[...]]} spec.

    Registry: dot3 (v.w on R^3 + R^3), vnorm3 (|v|^2), square (u^2), proj_cross
    (|l_2|^2 - |l_1|^2), mixed12 (l_1 l_2), variable12 (x-dependent, Q_22 = 0),
    hyperbolic (2 l_1 l_2), identity:<J>.
    """
    if isinstance(spec, dict):
        if "matrix" not in spec:
            raise ConfigError(f"inline quadratic form needs a 'matrix' entry, got keys {sorted(spec)}")
        return QuadraticForm.constant(np.asarray(spec["matrix"], dtype=float), name=spec.get("name", "inline"))
    if spec == "dot3":
        half = 0.5 * np.eye(3)
        return QuadraticForm.constant(np.block([[np.zeros((3, 3)), half], [half, np.zeros((3, 3))]]), name=spec)
    if spec == "vnorm3":
        return QuadraticForm.constant(np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), name=spec)
    if spec == "square":
        return QuadraticForm.constant([[1.0]], name=spec)
    if spec == "proj_cross":
        return QuadraticForm.constant(np.diag([-1.0, 1.0]), name=spec)
    if spec == "mixed12":
        return QuadraticForm.constant([[0.0, 0.5], [0.5, 0.0]], name=spec)
    if spec == "hyperbolic":
        return QuadraticForm.constant([[0.0, 1.0], [1.0, 0.0]], name=spec)
    if spec == "variable12":
        return QuadraticForm(2, _variable12, is_constant=False, name=spec)
    if isinstance(spec, str) and spec.startswith("identity:"):
        try:
            rank = int(spec.split(":", 1)[1])
        except ValueError as e:
            raise ConfigError(f"bad quadratic form spec {spec!r}") from e
        return QuadraticForm.constant(np.eye(rank), name=spec)
    raise ConfigError(f"unknown quadratic form {spec!r}")


@dataclass
class ConeSample:
    """Kernels of the principal symbol at one (x, xi); bases are stored row-wise."""

    x: np.ndarray
    xi: np.ndarray
    kernel_basis: np.ndarray
    real_kernel_basis: np.ndarray
    singular_values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.real_kernel_basis.shape[0])

    @property
    def complex_dimension(self) -> int:
        return int(self.kernel_basis.shape[0])


@dataclass
class ConeCertificate:
    max_residual: float
    witness: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]
    sample_counts: Dict[str, int]
    cone_empty: bool = False
    tolerance: float = CONE_RESIDUAL_TOL

    @property
    def certified(self) -> bool:
        return self.max_residual < self.tolerance

    def to_dict(self) -> dict:
        witness = None
        if self.witness is not None:
            x, xi, lam = self.witness
            witness = {
                "x": [float(v) for v in x],
                "xi": [float(v) for v in xi],
                "lambda_re": [float(v) for v in np.real(lam)],
                "lambda_im": [float(v) for v in np.imag(lam)],
            }
        return {
            "max_residual": self.max_residual,
            "certified": self.certified,
            "cone_empty": self.cone_empty,
            "tolerance": self.tolerance,
            "witness": witness,
            "sample_counts": dict(self.sample_counts),
        }


@dataclass
class GardingReport:
    delta: float
    constant: float
    violation_on_resample: float
    estimation_slack: float
    safety_factor: float = GARDING_SAFETY_FACTOR
    sample_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def passes(self) -> bool:
        return self.violation_on_resample >= GARDING_SLACK_TOL

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "constant": self.constant,
            "violation_on_resample": self.violation_on_resample,
            "estimation_slack": self.estimation_slack,
            "safety_factor": self.safety_factor,
            "passes": self.passes,
            "sample_counts": dict(self.sample_counts),
        }


def kernel_at(p: PrincipalSymbol, x: Sequence[float], xi: Sequence[float], tol: float = KERNEL_TOL) -> ConeSample:
    """
    Complex and real kernels of sigma(x, xi).

    Args:
        p: principal symbol
        x: base point
        xi: nonzero covector
        tol: singular values below tol * sigma_max count as zero

    Returns:
        ConeSample with orthonormal kernel bases
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if not np.any(xi):
        raise InvalidCovectorError("kernel_at needs a nonzero covector")
    if not 0.0 < tol < 1.0:
        raise InvalidParameterError(f"kernel tolerance must lie in (0, 1), got {tol}")
    x = np.asarray(x, dtype=float).reshape(-1)
    M = evaluate(p, x, xi)
    singular = svdvals(M)
    if singular.size == 0 or singular[0] == 0.0:
        # sigma vanishes: the whole fiber is in the kernel
        complex_basis = np.eye(p.in_rank, dtype=complex)
        real_basis = np.eye(p.in_rank)
    else:
        complex_basis = null_space(M, rcond=tol).T
        real_basis = null_space(np.vstack([M.real, M.imag]), rcond=tol).T
    return ConeSample(
        x=x,
        xi=xi,
        kernel_basis=complex_basis,
        real_kernel_basis=real_basis,
        singular_values=singular,
    )


def sample_cone(
    p: PrincipalSymbol,
    x_points: Sequence[Sequence[float]],
    sphere_samples: int = SPHERE_SAMPLES,
    tol: float = KERNEL_TOL,
) -> List[ConeSample]:
    """
    Sample the cone over the given base points.

    Covectors come from unit_sphere_samples with antipodes removed; only samples
    with a nonzero real kernel are kept, so elliptic symbols give an empty list.
    """
    if sphere_samples < 2 * p.dim:
        raise InvalidParameterError(f"need at least 2n = {2 * p.dim} sphere samples, got {sphere_samples}")
    directions = unit_sphere_samples(p.dim, sphere_samples)
    samples = []
    for x in np.atleast_2d(np.asarray(x_points, dtype=float)):
        for xi in directions:
            sample = kernel_at(p, x, xi, tol)
            if sample.dimension > 0:
                samples.append(sample)
    logger.debug(f"cone of {p.name}: kept {len(samples)} of {len(directions) * len(np.atleast_2d(x_points))} covectors")
    return samples


def _probe_coefficients(gram: np.ndarray, probe_count: int, rng: np.random.Generator) -> np.ndarray:
    """Unit coefficient vectors c (rows) in C^r whose combinations c @ B are tested."""
    r = gram.shape[0]
    probes = [np.eye(r, dtype=complex)]
    random = rng.standard_normal((probe_count, r)) + 1j * rng.standard_normal((probe_count, r))
    probes.append(random / np.linalg.norm(random, axis=1, keepdims=True))
    # Q(c @ B) = d^H G d with d = conj(c); eigenvectors of the hermitian and
    # skew parts of G extremize its real and imaginary parts
    hermitian = 0.5 * (gram + gram.conj().T)
    skew = (gram - gram.conj().T) / 2j
    for part in (hermitian, skew):
        _, vectors = eigh(part)
        probes.append(np.conj(vectors.T))
    return np.vstack(probes)


def q_vanishes_on_cone(
    Q: QuadraticForm,
    samples: Sequence[ConeSample],
    probe_count: int = CONE_PROBE_COUNT,
    tol: float = CONE_RESIDUAL_TOL,
    seed: int = DEFAULT_SEED,
) -> ConeCertificate:
    """
    Largest |Q(x, lambda)| over unit vectors in the complex span of each sampled real kernel.

    Args:
        Q: quadratic form on the same fiber as the symbol's source
        samples: output of sample_cone
        probe_count: random complex probes per sample on top of basis and extremal probes
        tol: certification threshold
        seed: seed of the random probes

    Returns:
        ConeCertificate (cone_empty set when there is nothing to test)
    """
    if not samples:
        return ConeCertificate(0.0, None, {"samples": 0, "probes": 0}, cone_empty=True, tolerance=tol)
    rng = np.random.default_rng(seed)
    best, witness, probes_used = -1.0, None, 0
    for sample in samples:
        B = sample.real_kernel_basis
        if B.shape[1] != Q.fiber_rank:
            raise ShapeError(f"cone vectors have rank {B.shape[1]}, quadratic form {Q.name} rank {Q.fiber_rank}")
        matrix = Q.matrix_at(sample.x)
        gram = B @ matrix @ B.T
        coefficients = _probe_coefficients(gram, probe_count, rng)
        lambdas = coefficients @ B
        values = np.abs(np.einsum("pj,jk,pk->p", lambdas, matrix, np.conj(lambdas)))
        probes_used += len(values)
        i = int(np.argmax(values))
        if values[i] > best:
            best = float(values[i])
            witness = (sample.x.copy(), sample.xi.copy(), lambdas[i].copy())
    certificate = ConeCertificate(best, witness, {"samples": len(samples), "probes": probes_used}, tolerance=tol)
    if not certificate.certified:
        logger.info(f"{Q.name} does not vanish on the cone: residual {best:.3e}")
    return certificate


def sphere_sample_points(x_points: Sequence[Sequence[float]], dim: int, count: int = SPHERE_SAMPLES) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Finite stand-in for a compact set K in the cosphere bundle: base points times unit covectors."""
    directions = unit_sphere_samples(dim, count)
    return [(np.asarray(x, dtype=float), xi) for x in np.atleast_2d(np.asarray(x_points, dtype=float)) for xi in directions]


def _sphere_vectors(rank: int, count: int, seed: int) -> np.ndarray:
    """Unit complex vectors: random points of the real 2J-sphere plus the real and imaginary basis vectors."""
    rng = np.random.default_rng(seed)
    real = rng.standard_normal((count, 2 * rank))
    real /= np.linalg.norm(real, axis=1, keepdims=True)
    vectors = real[:, :rank] + 1j * real[:, rank:]
    basis = np.eye(rank, dtype=complex)
    return np.vstack([basis, 1j * basis, vectors])


def _form_values(matrix: np.ndarray, sigma: np.ndarray, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    re_q = np.einsum("pj,jk,pk->p", vectors, matrix, np.conj(vectors)).real
    sigma_v = np.einsum("ij,pj->pi", sigma, vectors)
    return re_q, np.sum(np.abs(vectors) ** 2, axis=1), np.sum(np.abs(sigma_v) ** 2, axis=1)


def garding_constant(
    Q: QuadraticForm,
    p: PrincipalSymbol,
    K_samples: Sequence[Tuple[np.ndarray, np.ndarray]],
    delta: float,
    vector_samples: int = GARDING_VECTOR_SAMPLES,
    seed: int = DEFAULT_SEED,
    safety_factor: float = GARDING_SAFETY_FACTOR,
    resample_factor: int = GARDING_RESAMPLE_FACTOR,
    tol: float = KERNEL_TOL,
) -> GardingReport:
    """
    Smallest C with Re Q(v) >= -delta |v|^2 - C |sigma(x, xi) v|^2 on the sample.

    Args:
        Q: quadratic form
        p: principal symbol
        K_samples: (x, unit xi) pairs standing in for the compact set K
        delta: positive slack in front of |v|^2
        vector_samples: unit vectors per (x, xi) on the real 2J-sphere
        seed: seed of the estimation sample (the resample uses seed + 1)
        safety_factor: multiplier on C in the resample check
        resample_factor: resample density relative to the estimation sample
        tol: kernel tolerance for the hypothesis check

    Returns:
        GardingReport; violation_on_resample is the most negative slack
        Re Q + delta |v|^2 + safety_factor * C |sigma v|^2 on the resample
    """
    if not delta > 0.0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    if not K_samples:
        raise InvalidParameterError("garding_constant needs a nonempty sample of K")
    if Q.fiber_rank != p.in_rank:
        raise ShapeError(f"quadratic form rank {Q.fiber_rank} does not match symbol source rank {p.in_rank}")

    # hypothesis: Re Q >= 0 on the complexified cone
    for x, xi in K_samples:
        sample = kernel_at(p, x, xi, tol)
        if sample.dimension == 0:
            continue
        B = sample.real_kernel_basis
        gram = B @ Q.matrix_at(x) @ B.T
        lowest = float(eigh(0.5 * (gram + gram.conj().T), eigvals_only=True)[0])
        if lowest < -GARDING_HYPOTHESIS_TOL:
            raise HypothesisViolationError(
                f"Re {Q.name} takes the value {lowest:.3e} on the cone of {p.name} at x={list(x)}, xi={list(xi)}"
            )

    estimation = _sphere_vectors(Q.fiber_rank, vector_samples, seed)
    resample = _sphere_vectors(Q.fiber_rank, vector_samples * resample_factor, seed + 1)

    constant = 0.0
    tables = []
    for x, xi in K_samples:
        matrix = Q.matrix_at(x)
        sigma = evaluate(p, x, xi)
        re_q, v2, sv2 = _form_values(matrix, sigma, estimation)
        tables.append((re_q, v2, sv2))
        sigma_scale = max(float(np.max(sv2)), 1.0)
        active = sv2 > 1e-14 * sigma_scale
        if np.any(active):
            ratios = (-re_q[active] - delta * v2[active]) / sv2[active]
            constant = max(constant, float(np.max(ratios)))

    estimation_slack = min(float(np.min(re_q + delta * v2 + constant * sv2)) for re_q, v2, sv2 in tables)
    violation = np.inf
    for x, xi in K_samples:
        re_q, v2, sv2 = _form_values(Q.matrix_at(x), evaluate(p, x, xi), resample)
        violation = min(violation, float(np.min(re_q + delta * v2 + safety_factor * constant * sv2)))

    report = GardingReport(
        delta=float(delta),
        constant=constant,
        violation_on_resample=float(violation),
        estimation_slack=estimation_slack,
        safety_factor=safety_factor,
        sample_counts={
            "points": len(K_samples),
            "estimation_vectors": int(estimation.shape[0]),
            "resample_vectors": int(resample.shape[0]),
        },
    )
    if not report.passes:
        logger.warning(f"Garding constant for delta={delta} fails on the resample (slack {violation:.3e})")
    return report
