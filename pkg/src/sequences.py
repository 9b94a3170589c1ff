"""
Oscillatory families u_k = ubar + k^{-p} sum_t a_t(x) lambda_t wave(k xi_t . x)
and the measurements made on them: weak convergence against a test dictionary,
the spectral-tail precompactness proxy, and the convergence of quadratic
pairings with their recentered decomposition.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import (
    CSV_COLUMNS,
    DICTIONARY_BUMP_CENTERS,
    DICTIONARY_BUMP_WIDTH,
    MONOTONE_SLACK,
    PRECOMPACT_STALL_RATIO,
    PRECOMPACT_ZERO_TAIL,
    WEAK_CONVERGENCE_TOL,
)
from .cone import QuadraticForm
from .errors import FrequencyOverflowError, InvalidParameterError, ShapeError
from .fitting import loglog_slope
from .geometry import FreezingCover, PartitionOfUnity
from .grid import (
    GridField,
    TorusGrid,
    bandwidth,
    forward_fourier,
    frequency_split,
    l2_norm,
    spectral_sobolev_norm,
    weak_pairing,
)
from .quantize import apply
from .symbols import Symbol

logger = logging.getLogger(__name__)

_WAVES = {"sin": np.sin, "cos": np.cos}


def check_headroom(grid: TorusGrid, k: int, direction: np.ndarray, envelope: Optional[GridField]):
    """Raise FrequencyOverflowError unless k |xi0|_inf + bandwidth(envelope) < N/2."""
    reach = k * int(np.max(np.abs(direction), initial=0)) + (bandwidth(envelope) if envelope is not None else 0)
    if reach >= grid.nyquist:
        raise FrequencyOverflowError(
            f"oscillation k={k}, xi0={direction.tolist()} reaches frequency {reach} >= N/2 = {grid.nyquist}"
        )


def plane_oscillation(
    ubar: GridField,
    lam: Sequence[float],
    xi0: Sequence[int],
    envelope: Optional[GridField],
    k: int,
    phase: str = "sin",
) -> GridField:
    """
    u_k(x) = ubar(x) + a(x) lambda wave(k xi0 . x).

    Args:
        ubar: weak limit
        lam: amplitude vector of length ubar.fiber_rank
        xi0: integer direction
        envelope: scalar envelope a (None means a = 1)
        k: oscillation frequency
        phase: "sin" or "cos"

    Returns:
        the sampled field
    """
    grid = ubar.grid
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    direction = np.asarray(xi0, dtype=int).reshape(-1)
    if lam.size != ubar.fiber_rank:
        raise ShapeError(f"amplitude of length {lam.size} for a rank-{ubar.fiber_rank} field")
    if direction.size != grid.dim:
        raise ShapeError(f"direction {direction.tolist()} on a {grid.dim}-d grid")
    if phase not in _WAVES:
        raise InvalidParameterError(f"phase must be 'sin' or 'cos', got {phase!r}")
    check_headroom(grid, k, direction, envelope)
    wave = _WAVES[phase](k * grid.nodes @ direction)
    profile = wave if envelope is None else wave * envelope.samples[:, 0]
    return ubar + GridField(grid, profile[:, None] * lam[None, :])


@dataclass
class OscillationTerm:
    amplitude: np.ndarray
    direction: np.ndarray
    phase: str = "sin"
    envelope: Optional[GridField] = None


@dataclass
class OscillatoryFamily:
    """
    Family k -> u_k with epsilon_k = 1/k.

    Args:
        grid: torus grid
        weak_limit: ubar
        terms: oscillating terms added to ubar
        scale_power: p in the prefactor k^{-p}
        tag: construction label
    """

    grid: TorusGrid
    weak_limit: GridField
    terms: List[OscillationTerm]
    scale_power: float = 0.0
    tag: str = "plane"

    def generator(self, k: int) -> GridField:
        u = self.weak_limit
        scale = float(k) ** (-self.scale_power)
        zero = GridField.zeros(self.grid, self.weak_limit.fiber_rank)
        for term in self.terms:
            u = u + scale * (plane_oscillation(zero, term.amplitude, term.direction, term.envelope, k, term.phase))
        return u

    __call__ = generator

    def metadata(self) -> dict:
        return {
            "tag": self.tag,
            "scale_power": self.scale_power,
            "terms": [
                {
                    "amplitude": [float(v) for v in np.real(t.amplitude)],
                    "direction": [int(v) for v in t.direction],
                    "phase": t.phase,
                    "envelope_bandwidth": bandwidth(t.envelope) if t.envelope is not None else 0,
                }
                for t in self.terms
            ],
        }


def _periodic_gaussian_1d(x: np.ndarray, center: float, width: float, images: int = 3) -> np.ndarray:
    shifts = 2.0 * np.pi * np.arange(-images, images + 1)
    return np.sum(np.exp(-((x[:, None] - center + shifts[None, :]) ** 2) / (2.0 * width ** 2)), axis=1)


def periodic_bump(grid: TorusGrid, center: Sequence[float], width: float) -> GridField:
    """Isotropic Gaussian of the given width, periodized over neighboring images."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    values = np.ones(grid.size)
    for axis in range(grid.dim):
        values = values * _periodic_gaussian_1d(grid.nodes[:, axis], center[axis], width)
    return GridField(grid, values)


def probe_dictionary(grid: TorusGrid) -> Dict[str, GridField]:
    """Finite test family: 1, sin x_i, cos x_i and two periodized bumps."""
    tests = {"one": GridField.constant(grid, 1.0)}
    for i in range(grid.dim):
        tests[f"sin_x{i + 1}"] = GridField(grid, np.sin(grid.nodes[:, i]))
        tests[f"cos_x{i + 1}"] = GridField(grid, np.cos(grid.nodes[:, i]))
    for j, c in enumerate(DICTIONARY_BUMP_CENTERS):
        tests[f"bump{j + 1}"] = periodic_bump(grid, [c] * grid.dim, DICTIONARY_BUMP_WIDTH)
    return tests


def _non_increasing(values: Sequence[float]) -> bool:
    return all(b <= a + MONOTONE_SLACK for a, b in zip(values, values[1:]))


def _check_k_list(k_list: Sequence[int]) -> List[int]:
    k_list = [int(k) for k in k_list]
    if not k_list or any(k <= 0 for k in k_list) or k_list != sorted(set(k_list)):
        raise InvalidParameterError(f"k_list must be increasing positive integers, got {k_list}")
    return k_list


@dataclass
class WeakConvergenceReport:
    k_list: List[int]
    gaps: List[float]
    pairings: Dict[str, List[List[complex]]]
    tolerance: float

    @property
    def monotone(self) -> bool:
        return _non_increasing(self.gaps)

    @property
    def passes(self) -> bool:
        return self.monotone and self.gaps[-1] < self.tolerance

    def to_dict(self) -> dict:
        return {
            "k_list": self.k_list,
            "gaps": self.gaps,
            "monotone": self.monotone,
            "passes": self.passes,
            "tolerance": self.tolerance,
        }


def check_weak_convergence(
    f: OscillatoryFamily,
    tests: Dict[str, GridField],
    k_list: Sequence[int],
    tol: float = WEAK_CONVERGENCE_TOL,
) -> WeakConvergenceReport:
    """
    Pairings <u_k - ubar, psi> per test function and fiber component.

    The gap at k is the largest modulus over tests and components; the report
    passes when gaps do not increase and the last one is below tol.
    """
    k_list = _check_k_list(k_list)
    pairings: Dict[str, List[List[complex]]] = {name: [] for name in tests}
    gaps = []
    for k in k_list:
        deviation = f(k) - f.weak_limit
        gap = 0.0
        for name, psi in tests.items():
            row = [weak_pairing(deviation.component(j), psi) for j in range(deviation.fiber_rank)]
            pairings[name].append(row)
            gap = max(gap, max(abs(v) for v in row))
        gaps.append(gap)
    return WeakConvergenceReport(k_list, gaps, pairings, tol)


@dataclass
class PrecompactReport:
    n_cut_list: List[float]
    tails: List[float]
    order: float
    tail_slope: Optional[float]
    verdict: str

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent with precompactness"

    def to_dict(self) -> dict:
        return {
            "n_cut_list": self.n_cut_list,
            "tails": self.tails,
            "order": self.order,
            "tail_slope": self.tail_slope,
            "verdict": self.verdict,
            "consistent": self.consistent,
        }


def check_precompact_proxy(
    f: OscillatoryFamily,
    a: Symbol,
    k_list: Sequence[int],
    n_cut_list: Sequence[float],
    s: Optional[float] = None,
) -> PrecompactReport:
    """
    Uniform high-frequency tails of Op(a)u_k in H^{-s}.

    tail(N_cut) = max_k ||high part of Op(a)u_k||_{H^{-s}}. The family is
    "consistent with precompactness" when every tail vanishes, or when tails do
    not increase and the last is at most half the first; otherwise the tails
    stall and the verdict is "not precompact".

    Args:
        f: family
        a: constraint symbol
        k_list: family members to inspect
        n_cut_list: increasing cutoffs, all below max(k_list)
        s: Sobolev order, must equal a.order (defaults to it)
    """
    k_list = _check_k_list(k_list)
    s = a.order if s is None else float(s)
    if s != a.order:
        raise InvalidParameterError(f"precompactness is measured in H^-s with s = order {a.order}, got {s}")
    n_cut_list = [float(c) for c in n_cut_list]
    if not n_cut_list or n_cut_list != sorted(n_cut_list) or n_cut_list[-1] >= max(k_list):
        raise InvalidParameterError(f"cutoffs must increase and stay below max k = {max(k_list)}, got {n_cut_list}")

    spectra = [forward_fourier(apply(a, f(k))) for k in k_list]
    tails = []
    for n_cut in n_cut_list:
        tails.append(max(spectral_sobolev_norm(frequency_split(sp, n_cut)[1], -s) for sp in spectra))

    if max(tails) <= PRECOMPACT_ZERO_TAIL:
        verdict, slope = "consistent with precompactness", None
    else:
        slope = loglog_slope(n_cut_list, tails, floor=PRECOMPACT_ZERO_TAIL) if len(tails) > 1 else None
        decays = _non_increasing(tails) and tails[-1] <= PRECOMPACT_STALL_RATIO * tails[0]
        verdict = "consistent with precompactness" if decays else "not precompact"
    if verdict == "not precompact":
        logger.info(f"tails of {a.name} stall at {tails[-1]:.3e}")
    return PrecompactReport(n_cut_list, tails, a.order, slope, verdict)


@dataclass
class PairingRow:
    k: int
    pairing: complex
    target: complex
    oscillation: complex
    mean: complex
    cross: complex
    norm: float

    @property
    def epsilon(self) -> float:
        return 1.0 / self.k

    @property
    def gap(self) -> float:
        return abs(self.pairing - self.target)


@dataclass
class ConvergenceTable:
    rows: List[PairingRow]
    target: complex
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def gaps(self) -> List[float]:
        return [r.gap for r in self.rows]

    @property
    def cross_terms(self) -> List[float]:
        return [abs(r.cross) for r in self.rows]

    @property
    def bound(self) -> float:
        """L = sup_k ||u_k||_{L^2}."""
        return max(r.norm for r in self.rows)

    def to_csv_rows(self) -> List[List[str]]:
        out = []
        for r in self.rows:
            values = [r.k, r.epsilon, r.pairing.real, r.pairing.imag, self.target.real, self.target.imag, r.gap]
            out.append([str(values[0])] + [format(float(v), ".17g") for v in values[1:]])
        return out

    def to_dict(self) -> dict:
        return {
            "columns": list(CSV_COLUMNS),
            "rows": [
                {
                    "k": r.k,
                    "epsilon": r.epsilon,
                    "pairing_re": r.pairing.real,
                    "pairing_im": r.pairing.imag,
                    "gap_abs": r.gap,
                    "oscillation_re": r.oscillation.real,
                    "mean_re": r.mean.real,
                    "cross_abs": abs(r.cross),
                    "norm_l2": r.norm,
                }
                for r in self.rows
            ],
            "target_re": self.target.real,
            "target_im": self.target.imag,
            "diagnostics": dict(self.diagnostics),
        }


def recentered_parts(Q: QuadraticForm, u: GridField, ubar: GridField) -> Dict[str, GridField]:
    """Q(u) = Q(u - ubar) + Q(ubar) + q(u - ubar, ubar) + q(ubar, u - ubar), pointwise."""
    deviation = u - ubar
    return {
        "oscillation": Q.evaluate_field(deviation),
        "mean": Q.evaluate_field(ubar),
        "cross": Q.polar_field(deviation, ubar) + Q.polar_field(ubar, deviation),
    }


def quadratic_pairing_limit(
    f: OscillatoryFamily,
    Q: QuadraticForm,
    psi: GridField,
    density: Optional[GridField],
    k_list: Sequence[int],
) -> ConvergenceTable:
    """
    Rows <Q(u_k), psi rho> against the target <Q(ubar), psi rho>, with the recentered columns.

    Args:
        f: family with fiber rank Q.fiber_rank
        Q: quadratic form
        psi: scalar test function
        density: volume density rho (None means 1)
        k_list: increasing admissible frequencies

    Returns:
        ConvergenceTable ordered by k
    """
    k_list = _check_k_list(k_list)
    if Q.fiber_rank != f.weak_limit.fiber_rank:
        raise ShapeError(f"quadratic form of rank {Q.fiber_rank} on a rank-{f.weak_limit.fiber_rank} family")
    ubar = f.weak_limit
    target = weak_pairing(Q.evaluate_field(ubar), psi, density)
    rows = []
    for k in k_list:
        u = f(k)
        parts = recentered_parts(Q, u, ubar)
        rows.append(
            PairingRow(
                k=k,
                pairing=weak_pairing(Q.evaluate_field(u), psi, density),
                target=target,
                oscillation=weak_pairing(parts["oscillation"], psi, density),
                mean=weak_pairing(parts["mean"], psi, density),
                cross=weak_pairing(parts["cross"], psi, density),
                norm=l2_norm(u),
            )
        )
    table = ConvergenceTable(rows, target)
    table.diagnostics["L"] = table.bound
    return table


def localized_pairing(Q: QuadraticForm, u: GridField, psi: GridField, partition: PartitionOfUnity, density: Optional[GridField] = None) -> complex:
    """sum_nu <Q(sqrt(phi_nu) u), psi rho>."""
    total = 0.0 + 0.0j
    for root in partition.sqrt_bumps():
        total += weak_pairing(Q.evaluate_field(root * u), psi, density)
    return total


def ball_bounds(u_list: Sequence[GridField], partition: PartitionOfUnity) -> List[float]:
    """Per-ball L_nu = sup_k ||sqrt(phi_nu) u_k||_{L^2}."""
    roots = partition.sqrt_bumps()
    return [max(l2_norm(root * u) for u in u_list) for root in roots]


def freezing_error(Q: QuadraticForm, u: GridField, cover: FreezingCover) -> float:
    """
    |sum_nu <Q(u) phi_nu, 1> - sum_nu <Q_{x_nu}(sqrt(phi_nu) u), 1>|.

    Bounded by gamma ||u||^2 whenever Q oscillates by less than gamma on every ball.
    """
    one = GridField.constant(u.grid, 1.0)
    exact = 0.0 + 0.0j
    frozen = 0.0 + 0.0j
    field_q = Q.evaluate_field(u)
    for center, bump, root in zip(cover.centers, cover.partition.bumps, cover.partition.sqrt_bumps()):
        exact += weak_pairing(field_q * bump, one)
        frozen += weak_pairing(Q.frozen(center).evaluate_field(root * u), one)
    return abs(exact - frozen)
