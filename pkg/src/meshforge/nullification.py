"""Nullification sets and single-node nulling solvers.

Programming column ``ell`` injects ``w_ell``, chosen so that the *ideal*
mesh maps it after ``ell`` columns onto the target pattern
``o = (1, 0, 1, 0, ...)``.  Each active node of column ``ell`` then sees an
input ``(u1, u2)`` whose bottom output vanishes exactly when the node holds
its ideal settings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .mesh import STANDARD, MeshParams, NodeVariant, apply_column_transpose, node_matrices, propagate
from .topology import ColumnedTopology

__all__ = [
    "NullificationSet",
    "target_vector",
    "nullification_vector",
    "nullification_set",
    "nullify_node_closed_form",
    "closed_form_settings",
    "golden_minimize",
    "sweep_nullify",
    "SweepResult",
]

TWO_PI = 2 * np.pi
GRID_POINTS = 64
GOLDEN_TOL = 1e-10
INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0
# relative magnitude below which a node input port counts as dark
DARK_PORT = 1e-12


def target_vector(n: int) -> np.ndarray:
    """``o_N = (1, 0, 1, 0, ...)``; odd ``N`` ends in a zero."""
    if n < 2:
        raise ValueError("N must be at least 2")
    o = np.zeros(n, dtype=complex)
    o[0 : 2 * (n // 2) : 2] = 1.0
    return o


def _column_nodes(topology, params, variant, ell):
    return node_matrices(params.theta[:, ell - 1], params.phi[:, ell - 1], variant)


def nullification_vector(topology: ColumnedTopology, params: MeshParams, ell: int,
                         variant: NodeVariant = STANDARD, target=None) -> np.ndarray:
    """``w_ell = conj(U_1^T ... U_ell^T o)`` so that ``propagate(w_ell, ell) == o``."""
    params.check(topology)
    if not 1 <= ell <= topology.depth:
        raise ValueError(f"column must lie in 1..{topology.depth}, got {ell}")
    x = target_vector(topology.n) if target is None else np.asarray(target, dtype=complex)
    for k in range(ell, 0, -1):
        x = apply_column_transpose(x, topology.perm_array(k), None, None,
                                   t=_column_nodes(topology, params, variant, k))
    return np.conj(x)


@dataclass(frozen=True, eq=False)
class NullificationSet:
    """The ``L`` programming inputs; ``vectors[ell - 1]`` programs column ``ell``."""

    vectors: np.ndarray
    target_pattern: np.ndarray
    topology: ColumnedTopology
    params: MeshParams
    variant: NodeVariant = STANDARD

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, ell: int) -> np.ndarray:
        """1-based access by column."""
        if not 1 <= ell <= len(self):
            raise IndexError(f"column must lie in 1..{len(self)}")
        return self.vectors[ell - 1]

    def identity_error(self) -> float:
        """Largest ``||propagate(w_ell, ell) - o||`` over all columns."""
        worst = 0.0
        for ell in range(1, len(self) + 1):
            out = propagate(self.topology, self.params, self.vectors[ell - 1], ell, self.variant)
            worst = max(worst, float(np.linalg.norm(out - self.target_pattern)))
        return worst

    def powers(self) -> np.ndarray:
        """``|w_ell,n|^2`` as an ``(L, N)`` grid."""
        return np.abs(self.vectors) ** 2


def nullification_set(topology: ColumnedTopology, params: MeshParams,
                      variant: NodeVariant = STANDARD, target=None) -> NullificationSet:
    """All ``L`` nullification vectors.

    Columns are processed from ``L`` down to 1; the transpose of column ``k``
    is applied at once to every partial vector with ``ell >= k``, so the total
    work is ``O(N L^2)``.
    """
    params.check(topology)
    n, L = topology.n, topology.depth
    o = target_vector(n) if target is None else np.asarray(target, dtype=complex)
    x = np.repeat(o[:, None], L, axis=1)
    for k in range(L, 0, -1):
        x[:, k - 1 :] = apply_column_transpose(x[:, k - 1 :], topology.perm_array(k), None, None,
                                               t=_column_nodes(topology, params, variant, k))
    vectors = np.conj(x.T).copy()
    vectors.setflags(write=False)
    return NullificationSet(vectors, o, topology, params, variant)


def closed_form_settings(u1, u2):
    """Vectorized two-step nulling: returns ``(alpha, beta, indeterminate)``.

    ``alpha = 2 arctan(|u1| / |u2|)`` and ``beta = -arg(u1 / u2)``.  When one
    input port is dark the differential phase has no effect on the bottom
    output; ``beta`` is then set to 0 and the node flagged indeterminate.
    Inputs with both ports dark get ``alpha = pi`` as well.
    """
    u1 = np.asarray(u1, dtype=complex)
    u2 = np.asarray(u2, dtype=complex)
    a1, a2 = np.abs(u1), np.abs(u2)
    alpha = 2.0 * np.arctan2(a1, a2)
    scale = np.maximum(a1, a2)
    dark = np.minimum(a1, a2) <= DARK_PORT * scale
    beta = np.where(dark, 0.0, np.mod(np.angle(u2) - np.angle(u1), TWO_PI))
    alpha = np.where(scale == 0, np.pi, alpha)
    return alpha, beta, dark


def nullify_node_closed_form(u1: complex, u2: complex) -> tuple[float, float]:
    """Settings ``(alpha, beta)`` that null the bottom output of a node fed ``(u1, u2)``.

    Raises:
        DegenerateInputError: if both inputs are zero.
    """
    if u1 == 0 and u2 == 0:
        raise DegenerateInputError("node input (0, 0) leaves the settings undetermined")
    alpha, beta, _ = closed_form_settings(u1, u2)
    return float(alpha), float(beta)


def golden_minimize(f, lo, hi, tol: float = GOLDEN_TOL, max_iter: int = 200, return_best: bool = False):
    """Vectorized golden-section search of unimodal functions.

    ``f`` maps an array of abscissae (one per problem) to an array of values.
    Every iteration evaluates ``f`` once on all problems.  Returns the bracket
    midpoints and the number of evaluations; with ``return_best`` also the
    lowest probed abscissae and their values.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1 = f(x1)
    f2 = f(x2)
    evals = 2
    best_x = np.where(f1 <= f2, x1, x2)
    best_f = np.minimum(f1, f2)
    while np.max(hi - lo) > tol and evals < max_iter:
        left = f1 < f2
        # minimum in [lo, x2]: shift the upper bracket, new probe on the left
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        new_x = np.where(left, hi - INV_PHI * (hi - lo), lo + INV_PHI * (hi - lo))
        f_new = f(new_x)
        evals += 1
        better = f_new < best_f
        best_x = np.where(better, new_x, best_x)
        best_f = np.where(better, f_new, best_f)
        x2, f2, x1, f1 = (
            np.where(left, x1, new_x),
            np.where(left, f1, f_new),
            np.where(left, new_x, x2),
            np.where(left, f_new, f2),
        )
    if return_best:
        return 0.5 * (lo + hi), evals, best_x, best_f
    return 0.5 * (lo + hi), evals


@dataclass
class SweepResult:
    alpha: np.ndarray
    beta: np.ndarray
    indeterminate: np.ndarray
    measurements: int


def _coarse_then_golden(f, lo, hi, periodic: bool):
    k = len(lo)
    if periodic:
        grid = lo[:, None] + (hi - lo)[:, None] * np.arange(GRID_POINTS) / GRID_POINTS
    else:
        grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, GRID_POINTS)
    values = np.stack([f(grid[:, j]) for j in range(GRID_POINTS)], axis=1)
    best = np.argmin(values, axis=1)
    step = (hi - lo) / (GRID_POINTS if periodic else GRID_POINTS - 1)
    centre = grid[np.arange(k), best]
    b_lo, b_hi = centre - step, centre + step
    if not periodic:
        b_lo, b_hi = np.maximum(b_lo, lo), np.minimum(b_hi, hi)
    x, evals, best_x, best_f = golden_minimize(f, b_lo, b_hi, return_best=True)
    zero = best_f == 0.0
    if np.any(zero):
        centre, extra = _plateau_centre(f, best_x, b_lo, b_hi)
        x = np.where(zero, centre, x)
        evals += extra
    return x, values, GRID_POINTS + evals


def _plateau_centre(f, x, lo, hi, tol: float = GOLDEN_TOL):
    """Middle of the zero-reading plateau around the dark points ``x``.

    A detector floor turns the quadratic null into a flat interval and the
    golden search drifts to one of its edges; the null sits at its centre.
    """
    evals = 0
    edges = []
    for bound in (lo, hi):
        inside, outside = x.copy(), bound.copy()
        # a bracket end that is itself dark is taken as the edge
        outside_dark = f(outside) == 0.0
        evals += 1
        while np.max(np.abs(outside - inside)) > tol:
            mid = 0.5 * (inside + outside)
            dark = f(mid) == 0.0
            evals += 1
            inside = np.where(dark, mid, inside)
            outside = np.where(dark, outside, mid)
        edges.append(np.where(outside_dark, bound, 0.5 * (inside + outside)))
    return 0.5 * (edges[0] + edges[1]), evals


def sweep_nullify(measure, n_nodes: int, alpha0, alpha_range=(0.0, np.pi), passes: int = 2,
                  flat_tol: float = 1e-14, node_power=None) -> SweepResult:
    """Detector-feedback nulling of ``n_nodes`` independent nodes at once.

    ``measure(alpha, beta)`` sets the nodes and returns their bottom-port
    powers.  Each pass sweeps ``beta`` (64-point coarse grid over one period,
    then golden-section refinement) and then ``alpha`` over ``alpha_range``.
    One pass resolves ``beta`` only to about the square root of machine
    precision because its minimum is not a null; the second pass, taken with
    ``alpha`` near its null, refines it to the golden-section tolerance.

    Nodes whose coarse ``beta`` sweep is flat (peak-to-peak below
    ``flat_tol`` times ``node_power``) have a dark input port; their ``beta``
    is set to 0 and flagged.
    """
    lo_a, hi_a = alpha_range
    alpha = np.broadcast_to(np.asarray(alpha0, dtype=float), (n_nodes,)).copy()
    # contrast of the beta sweep vanishes at alpha in {0, pi}
    weak = np.abs(np.sin(alpha)) < 0.3
    alpha[weak] = np.clip(np.pi / 2, lo_a, hi_a)
    beta = np.zeros(n_nodes)
    flat = np.zeros(n_nodes, dtype=bool)
    scale = np.ones(n_nodes) if node_power is None else np.asarray(node_power, dtype=float)
    count = 0
    lo = np.zeros(n_nodes)
    for p in range(passes):
        b, grid_values, k = _coarse_then_golden(lambda x: measure(alpha, x), lo, lo + TWO_PI, periodic=True)
        count += k
        if p == 0:
            flat = np.ptp(grid_values, axis=1) <= flat_tol * scale
        beta = np.where(flat, 0.0, np.mod(b, TWO_PI))
        a, _, k = _coarse_then_golden(lambda x: measure(x, beta), np.full(n_nodes, lo_a),
                                      np.full(n_nodes, hi_a), periodic=False)
        count += k
        alpha = np.clip(a, lo_a, hi_a)
    measure(alpha, beta)
    return SweepResult(alpha, beta, flat, count + 1)


def node_bottom_power(u1, u2, alpha, beta):
    """Bottom-port power of an ideal node (used as a stand-alone detector model)."""
    return np.abs(np.exp(1j * beta) * np.cos(alpha / 2) * u1 - np.sin(alpha / 2) * u2) ** 2
