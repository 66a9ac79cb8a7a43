"""Column-by-column programming of a physical mesh by local nulling feedback."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonLinearizableError, NonNullifiableError, OrderError
from .hardware import PhysicalMesh
from .mesh import MeshParams, apply_output, mesh_matrix
from .metrics import aligned_fidelity, phase_aligned_distance
from .nullification import NullificationSet, closed_form_settings, nullification_set, sweep_nullify

__all__ = [
    "CLOSED_FORM_TOL",
    "SWEEP_TOL",
    "MAX_ROUNDS",
    "ColumnResult",
    "ProgramReport",
    "ColumnProgrammer",
    "parallel_nullify",
    "align_output_phases",
    "Interstitial",
    "program_cascade",
    "cascade_matrix",
]

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
CLOSED_FORM_TOL = 1e-12
SWEEP_TOL = 1e-8
MAX_ROUNDS = 50
# settings change at which crosstalk re-nulling is considered converged
FIXED_POINT_TOL = 1e-13
MODES = ("closed-form", "sweep")


def _wrap(x):
    return np.angle(np.exp(1j * np.asarray(x)))


@dataclass
class ColumnResult:
    """Outcome of nulling one column.

    ``residuals`` are bottom-port powers relative to the power entering the
    column, one per active node.
    """

    column: int
    residuals: list[float]
    iterations: int
    measurements: int
    flagged: list[int] = field(default_factory=list)
    indeterminate: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "residuals": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "measurements": self.measurements,
            "flagged": list(self.flagged),
            "indeterminate": list(self.indeterminate),
        }


@dataclass
class ProgramReport:
    """Diagnostics of one programming run.

    Fidelities are computed after optimal output-phase alignment, since
    nulling fixes the operator only up to the output phase reference.
    """

    mode: str
    tolerance: float
    columns: list[ColumnResult] = field(default_factory=list)
    inputs_consumed: int = 0
    max_alpha_delta: float = float("nan")
    max_beta_delta: float = float("nan")
    fidelity_before: float = float("nan")
    fidelity_after: float = float("nan")
    distance_after: float = float("nan")
    clamp_events: int = 0

    @property
    def measurements(self) -> int:
        return sum(c.measurements for c in self.columns)

    @property
    def flagged(self) -> list[tuple[int, int]]:
        return [(m, c.column) for c in self.columns for m in c.flagged]

    @property
    def ok(self) -> bool:
        return not self.flagged

    def max_residual(self) -> float:
        return max((max(c.residuals, default=0.0) for c in self.columns), default=0.0)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tolerance": self.tolerance,
            "inputs_consumed": self.inputs_consumed,
            "measurements": self.measurements,
            "max_alpha_delta": self.max_alpha_delta,
            "max_beta_delta": self.max_beta_delta,
            "fidelity_before": self.fidelity_before,
            "fidelity_after": self.fidelity_after,
            "phase_aligned_distance_after": self.distance_after,
            "clamp_events": self.clamp_events,
            "columns": [c.to_dict() for c in self.columns],
            "flagged": [list(f) for f in self.flagged],
        }


class ColumnProgrammer:
    """Stateful programming session that enforces the column order ``1..L``.

    Args:
        physical: chip to program (mutated in place).
        nset: nullification set computed from the ideal target settings.
        mode: ``"closed-form"`` (read the node input field and solve the
            nulling equations) or ``"sweep"`` (detector-only coarse grid plus
            golden-section search).
        source: maps a programming vector to ``(field at the chip input,
            injected power)``; defaults to direct injection.
        concurrent: null the nodes of a column simultaneously.  Ignored
            (serial round-robin) when the column has crosstalk.
    """

    def __init__(self, physical: PhysicalMesh, nset: NullificationSet, mode: str = "closed-form",
                 source=None, concurrent: bool = True, max_rounds: int = MAX_ROUNDS, tol: float | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        topo = physical.topology
        if topo.n != nset.topology.n or topo.column_sizes != nset.topology.column_sizes:
            raise ValueError("physical mesh and nullification set describe different topologies")
        self.physical = physical
        self.nset = nset
        self.mode = mode
        self.source = source or (lambda w: (w, float(np.vdot(w, w).real)))
        self.concurrent = concurrent
        self.max_rounds = max_rounds
        self.tol = tol if tol is not None else (CLOSED_FORM_TOL if mode == "closed-form" else SWEEP_TOL)
        self.next_column = 1

    def program_column(self, ell: int) -> ColumnResult:
        if ell != self.next_column:
            raise OrderError(f"column {ell} requested but column {self.next_column} is next")
        phys = self.physical
        field_in, injected = self.source(self.nset[ell])
        u = phys.column_input(field_in, ell)
        n_active = phys.topology.columns[ell - 1].n_active
        node_power = np.abs(u[0 : 2 * n_active : 2]) ** 2 + np.abs(u[1 : 2 * n_active : 2]) ** 2
        rel = node_power / injected
        lo, hi = phys.theta_limits()
        xtalk = phys._xtalk[ell - 1] > 0 and n_active > 1

        if self.mode == "closed-form":
            alpha, beta, dark = closed_form_settings(u[0 : 2 * n_active : 2], u[1 : 2 * n_active : 2])
            phys.set_beta(beta, ell)
            measurements = 0
            rounds = 0
            while True:
                rounds += 1
                change = 0.0
                if xtalk:
                    # each node corrects its own effective split error using
                    # the current neighbour settings (Gauss-Seidel order)
                    for m in range(n_active):
                        before = phys.alpha[m, ell - 1]
                        theta_eff = phys.effective_theta(ell)[m]
                        phys.set_alpha(before + alpha[m] - theta_eff, ell, [m + 1])
                        change = max(change, abs(phys.alpha[m, ell - 1] - before))
                else:
                    phys.set_alpha(alpha, ell)
                powers = phys.bottom_powers(u, ell, injected)
                measurements += 1
                if not xtalk or change <= FIXED_POINT_TOL or rounds >= self.max_rounds:
                    break
        else:
            dark = np.zeros(n_active, dtype=bool)
            measurements = 0
            rounds = 0
            groups = [np.arange(n_active)] if (self.concurrent and not xtalk) else [[m] for m in range(n_active)]
            while True:
                rounds += 1
                for idx in groups:
                    idx = np.asarray(idx)
                    nodes = idx + 1

                    def measure(a, b, idx=idx, nodes=nodes):
                        phys.set_alpha(a, ell, nodes)
                        phys.set_beta(b, ell, nodes)
                        return phys.bottom_powers(u, ell, injected)[idx]

                    res = sweep_nullify(measure, len(idx), phys.alpha[idx, ell - 1], (lo, hi),
                                        node_power=rel[idx])
                    measurements += res.measurements
                    if rounds == 1:
                        dark[idx] = res.indeterminate
                powers = phys.bottom_powers(u, ell, injected)
                measurements += 1
                if not xtalk or np.all(powers < self.tol * rel) or rounds >= self.max_rounds:
                    break

        residuals = np.where(rel > 0, powers / np.where(rel > 0, rel, 1.0), 0.0)
        flagged = [m + 1 for m in range(n_active) if not residuals[m] < self.tol]
        result = ColumnResult(ell, residuals.tolist(), rounds, measurements, flagged,
                              [m + 1 for m in range(n_active) if dark[m]])
        self.next_column += 1
        log.debug("column %d: max residual %.3e after %d round(s)", ell, residuals.max(), rounds)
        return result


def parallel_nullify(physical: PhysicalMesh, nset: NullificationSet, mode: str = "closed-form",
                     strict: bool = True, concurrent: bool = True, source=None,
                     max_rounds: int = MAX_ROUNDS, tol: float | None = None) -> ProgramReport:
    """Program every column of ``physical`` towards the settings behind ``nset``.

    Column ``ell`` is programmed with the single input ``w_ell``: it is
    propagated through the already-programmed columns ``1..ell-1`` of the
    chip, and each active node of column ``ell`` nulls its bottom port.

    Raises:
        NonNullifiableError: (``strict`` only) when some residual stays above
            tolerance, e.g. because the required split lies outside the
            reachable range.  The partial report is attached.
    """
    target = mesh_matrix(nset.topology, nset.params, nset.variant)
    report = ProgramReport(mode=mode, tolerance=0.0)
    report.fidelity_before = aligned_fidelity(target, physical.matrix())
    clamps0 = len(physical.clamp_events)
    session = ColumnProgrammer(physical, nset, mode, source, concurrent, max_rounds, tol)
    report.tolerance = session.tol
    for ell in range(1, nset.topology.depth + 1):
        result = session.program_column(ell)
        report.columns.append(result)
        report.inputs_consumed += 1
        if result.flagged and strict:
            _finish(report, physical, nset, target, clamps0)
            raise NonNullifiableError(
                f"column {ell}: nodes {result.flagged} kept bottom power above {session.tol:g}",
                report=report, column=ell, nodes=result.flagged,
                residuals=[result.residuals[m - 1] for m in result.flagged],
            )
    _finish(report, physical, nset, target, clamps0)
    return report


def _finish(report, physical, nset, target, clamps0):
    active = physical.active
    keep_beta = active.copy()
    for c in report.columns:
        for m in c.indeterminate:
            keep_beta[m - 1, c.column - 1] = False
    da = np.abs(physical.alpha - nset.params.theta)[active]
    db = np.abs(_wrap(physical.beta - nset.params.phi))[keep_beta]
    report.max_alpha_delta = float(da.max()) if da.size else 0.0
    report.max_beta_delta = float(db.max()) if db.size else 0.0
    u_hat = physical.matrix()
    report.fidelity_after = aligned_fidelity(target, u_hat)
    report.distance_after = phase_aligned_distance(target, u_hat)
    report.clamp_events = len(physical.clamp_events) - clamps0


def align_output_phases(physical: PhysicalMesh, target_matrix) -> np.ndarray:
    """Adjust ``gamma`` so every row of the chip operator has the target's phase.

    Returns the applied correction (wrapped to ``(-pi, pi]``), which is added
    to ``physical.gamma``.

    Raises:
        ValueError: if a row of the chip operator is orthogonal to the
            corresponding target row, leaving its phase undefined.
    """
    u = np.asarray(target_matrix, dtype=complex)
    u_hat = physical.matrix()
    if u.shape != u_hat.shape:
        raise ValueError(f"target has shape {u.shape}, chip operator {u_hat.shape}")
    overlap = np.sum(u * np.conj(u_hat), axis=1)
    if np.any(np.abs(overlap) < 1e-12 * np.linalg.norm(u, axis=1) * np.linalg.norm(u_hat, axis=1)):
        raise ValueError("a chip row has no overlap with its target row")
    delta = np.angle(overlap)
    physical.gamma = np.mod(physical.gamma + delta, TWO_PI)
    return delta


@dataclass
class Interstitial:
    """Element-wise complex gains placed between two meshes.

    ``gain`` is the element response in its linear regime; ``linearizable``
    says whether the element can be switched into that regime at all.
    """

    gain: np.ndarray
    linearizable: bool = True

    def __post_init__(self):
        self.gain = np.atleast_1d(np.asarray(self.gain, dtype=complex))

    @classmethod
    def identity(cls, n: int) -> "Interstitial":
        return cls(np.ones(n))

    def linear_gain(self, n: int) -> np.ndarray:
        if not self.linearizable:
            raise NonLinearizableError("interstitial element has no linear regime")
        g = np.broadcast_to(self.gain, (n,))
        if np.any(g == 0):
            raise NonLinearizableError("interstitial element blocks a mode (zero gain)")
        return g


def cascade_matrix(meshes: list[PhysicalMesh], interstitials: list[Interstitial]) -> np.ndarray:
    """Physical operator of ``mesh_K G_{K-1} ... G_1 mesh_1``."""
    total = meshes[0].matrix()
    for mesh, inter in zip(meshes[1:], interstitials):
        total = mesh.matrix() @ (inter.linear_gain(mesh.topology.n)[:, None] * total)
    return total


def program_cascade(meshes: list[PhysicalMesh], targets: list[MeshParams],
                    interstitials: list[Interstitial] | None = None, mode: str = "closed-form",
                    strict: bool = True) -> list[ProgramReport]:
    """Program a chain of meshes with light injected only at the first mesh.

    The nullification vectors of mesh ``k`` are back-propagated through the
    target operators of meshes ``1..k-1`` and the linearized interstitial
    gains, then physically injected at the chain input.

    Raises:
        NonLinearizableError: if an interstitial element cannot be linearized.
    """
    if len(meshes) != len(targets):
        raise ValueError("need one target per mesh")
    interstitials = list(interstitials or [Interstitial.identity(m.topology.n) for m in meshes[1:]])
    if len(interstitials) != len(meshes) - 1:
        raise ValueError("need one interstitial element between consecutive meshes")
    gains = [inter.linear_gain(m.topology.n) for inter, m in zip(interstitials, meshes[1:])]
    models = [mesh_matrix(m.topology, t, m.variant) for m, t in zip(meshes, targets)]

    reports = []
    for k, (mesh, target) in enumerate(zip(meshes, targets)):
        nset = nullification_set(mesh.topology, target)
        upstream = meshes[:k]

        def source(w, k=k, upstream=upstream):
            # invert the model chain, then propagate physically up to mesh k
            x = np.asarray(w, dtype=complex)
            for j in range(k - 1, -1, -1):
                x = models[j].conj().T @ (x / gains[j])
            injected = float(np.vdot(x, x).real)
            y = x
            for j, up in enumerate(upstream):
                y = apply_output(up.forward(y, up.topology.depth), up.topology, up.gamma)
                y = gains[j] * y
            return y, injected

        reports.append(parallel_nullify(mesh, nset, mode, strict=strict, source=source))
    return reports
