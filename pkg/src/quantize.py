"""
Kohn-Nirenberg quantization on the torus grid.

    Op(a)u(x_j) = sum_k exp(i k.x_j) a(x_j, k) u_hat_k

Three evaluation paths are chosen from the symbol's traits: Fourier multipliers
need one transform pair, separable symbols sum_m c_m(x) b_m(xi) need one pair
per term, and everything else falls back to the direct double sum.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import DIRECT_SUM_LIMIT
from .errors import InvalidParameterError, ShapeError
from .fitting import loglog_slope
from .grid import GridField, SpectrumField, forward_fourier, inverse_fourier, l2_norm, plane_wave
from .symbols import Symbol

logger = logging.getLogger(__name__)

# Rows of the (points x frequencies) symbol table evaluated at once on the direct path
_DIRECT_CHUNK_PAIRS = 1 << 18


def _apply_multiplier(values: np.ndarray, spectrum: SpectrumField) -> GridField:
    """values: (N^n, I, J) symbol table on the frequency lattice."""
    out = np.einsum("mij,mj->mi", values, spectrum.coefficients)
    return inverse_fourier(SpectrumField(spectrum.grid, out))


def apply(a: Symbol, u: GridField) -> GridField:
    """
    Apply Op(a) to a grid field.

    Args:
        a: total symbol with in_rank equal to u.fiber_rank
        u: field to act on

    Returns:
        GridField of fiber rank a.out_rank
    """
    if a.in_rank != u.fiber_rank:
        raise ShapeError(f"symbol {a.name} expects fiber rank {a.in_rank}, field has {u.fiber_rank}")
    if a.dim != u.grid.dim:
        raise ShapeError(f"symbol {a.name} lives in dimension {a.dim}, grid in {u.grid.dim}")

    grid = u.grid
    spectrum = forward_fourier(u)
    freqs = grid.frequencies.astype(float)

    if a.is_multiplier:
        values = a.evaluate_batch(np.zeros_like(freqs), freqs)
        return _apply_multiplier(values, spectrum)

    if a.separable_terms is not None:
        total = np.zeros((grid.size, a.out_rank), dtype=complex)
        for coefficient, multiplier in a.separable_terms:
            values = np.asarray(multiplier(freqs), dtype=complex)
            partial = _apply_multiplier(values, spectrum)
            total += np.asarray(coefficient(grid.nodes), dtype=complex)[:, None] * partial.samples
        return GridField(grid, total)

    pairs = grid.size * grid.size
    if pairs > DIRECT_SUM_LIMIT:
        raise InvalidParameterError(
            f"direct quantization of {a.name} needs {pairs} symbol evaluations (limit {DIRECT_SUM_LIMIT}); "
            f"use a multiplier or separable symbol, or a coarser grid"
        )
    logger.debug(f"direct quantization of {a.name} on {grid.size} nodes")
    nodes = grid.nodes
    out = np.zeros((grid.size, a.out_rank), dtype=complex)
    chunk = max(1, _DIRECT_CHUNK_PAIRS // grid.size)
    for start in range(0, grid.size, chunk):
        block = nodes[start : start + chunk]
        m = block.shape[0]
        x = np.repeat(block, grid.size, axis=0)
        xi = np.tile(freqs, (m, 1))
        values = a.evaluate_batch(x, xi).reshape(m, grid.size, a.out_rank, a.in_rank)
        phases = np.exp(1j * block @ freqs.T)
        out[start : start + m] = np.einsum("pk,pkij,kj->pi", phases, values, spectrum.coefficients)
    return GridField(grid, out)


def commutator_apply(a: Symbol, psi: GridField, u: GridField) -> GridField:
    """[Op(a), psi] u = Op(a)(psi u) - psi Op(a)u, with products taken pointwise on the grid."""
    if psi.fiber_rank != 1:
        raise ShapeError(f"cutoff must be scalar, got fiber rank {psi.fiber_rank}")
    return apply(a, psi * u) - psi * apply(a, u)


@dataclass
class SmoothingOrderReport:
    """Growth of ||Op(a)u_k|| and ||[Op(a), psi]u_k|| along u_k = exp(i k x_1)."""

    symbol: str
    order: float
    k_list: Tuple[int, ...]
    apply_norms: Tuple[float, ...]
    commutator_norms: Tuple[float, ...]
    apply_slope: Optional[float]
    commutator_slope: Optional[float]
    apply_degenerate: bool
    commutator_degenerate: bool

    def to_dict(self) -> dict:
        return {
            "symbol": self.symbol,
            "order": self.order,
            "k_list": list(self.k_list),
            "apply_norms": list(self.apply_norms),
            "commutator_norms": list(self.commutator_norms),
            "apply_slope": self.apply_slope,
            "commutator_slope": self.commutator_slope,
            "apply_degenerate": self.apply_degenerate,
            "commutator_degenerate": self.commutator_degenerate,
        }


def _slope_or_flag(k_list: Sequence[int], norms: Sequence[float]) -> Tuple[Optional[float], bool]:
    norms = np.asarray(norms, dtype=float)
    if not np.any(norms > 0.0):
        return None, True
    return loglog_slope(k_list, norms, floor=1e-300), False


def smoothing_order_probe(
    a: Symbol,
    psi: GridField,
    k_list: Sequence[int],
    fiber_vector: Optional[Sequence[complex]] = None,
) -> SmoothingOrderReport:
    """
    Regression slopes of the operator and commutator norms against the frequency.

    Args:
        a: total symbol
        psi: smooth scalar cutoff
        k_list: increasing positive integers, at most N/4
        fiber_vector: constant fiber direction of the probes (default e_1)

    Returns:
        SmoothingOrderReport; slopes are None when every norm vanishes
    """
    grid = psi.grid
    k_list = tuple(int(k) for k in k_list)
    if len(k_list) < 2 or any(k <= 0 for k in k_list) or list(k_list) != sorted(set(k_list)):
        raise InvalidParameterError(f"k_list must be at least two increasing positive integers, got {k_list}")
    if max(k_list) > grid.points_per_axis // 4:
        raise InvalidParameterError(
            f"max k = {max(k_list)} leaves no headroom on N={grid.points_per_axis} (need k <= N/4)"
        )
    if fiber_vector is None:
        fiber_vector = np.eye(a.in_rank)[0]

    apply_norms, commutator_norms = [], []
    for k in k_list:
        direction = np.zeros(grid.dim, dtype=int)
        direction[0] = k
        u = plane_wave(grid, direction, fiber_vector)
        apply_norms.append(l2_norm(apply(a, u)))
        commutator_norms.append(l2_norm(commutator_apply(a, psi, u)))

    apply_slope, apply_degenerate = _slope_or_flag(k_list, apply_norms)
    commutator_slope, commutator_degenerate = _slope_or_flag(k_list, commutator_norms)
    if apply_degenerate or commutator_degenerate:
        logger.warning(f"smoothing probe for {a.name}: all norms vanish, regression skipped")
    return SmoothingOrderReport(
        symbol=a.name,
        order=a.order,
        k_list=k_list,
        apply_norms=tuple(apply_norms),
        commutator_norms=tuple(commutator_norms),
        apply_slope=apply_slope,
        commutator_slope=commutator_slope,
        apply_degenerate=apply_degenerate,
        commutator_degenerate=commutator_degenerate,
    )
