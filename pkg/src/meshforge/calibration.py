"""Column-parallel calibration of phase-shifter voltage curves.

Every column is calibrated in two sweeps, with all earlier (already
calibrated) columns parked in the bar state:

a. each active node receives ``(1, 0)``; its bottom detector then reads
   ``cos^2(theta(v) / 2)`` while all split voltages are swept together;
b. the split is set to ``pi / 2`` and each node receives ``(1, 1)``; the
   bottom detector reads ``(1 - sin(theta) cos(phi(v))) / 2`` while all
   phase voltages are swept together.

The folded phases are unwrapped under the assumption that the phase grows
monotonically with drive voltage, and cubic polynomials are fitted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import FitError, RangeError
from .hardware import PhysicalMesh
from .mesh import MeshParams, node_matrices

__all__ = ["CalibrationModel", "unwrap_folded", "fit_cubic", "parallel_calibrate", "flash"]

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
FOLD_MARGIN = 0.05
RMS_LIMIT = 1e-3
MIN_SAMPLES = 256
MIN_RUN = 4


@dataclass
class CalibrationModel:
    """Fitted cubic phase curves, keyed by ``(kind, m, ell)`` shifter ids.

    ``coeffs[key] = (c0, c1, c2, c3)`` in radians per volt^k; ``theta0`` maps
    ``(m, ell)`` to the split phase at zero drive.
    """

    v_max: float
    coeffs: dict = field(default_factory=dict)
    rms: dict = field(default_factory=dict)

    @property
    def theta0(self) -> dict:
        return {(m, ell): c[0] for (kind, m, ell), c in self.coeffs.items() if kind == "theta"}

    def phase(self, shifter, v):
        c0, c1, c2, c3 = self.coeffs[shifter]
        return c0 + v * (c1 + v * (c2 + v * c3))

    def voltage(self, shifter, phase: float, periodic: bool = False) -> float:
        """Drive voltage producing ``phase`` (any ``2 pi`` multiple if ``periodic``)."""
        lo, hi = self.phase(shifter, 0.0), self.phase(shifter, self.v_max)
        if periodic:
            phase = lo + np.mod(phase - lo, TWO_PI)
        if not lo <= phase <= hi:
            raise RangeError(f"phase {phase:.6f} outside calibrated span [{lo:.6f}, {hi:.6f}] of {shifter}")
        return float(brentq(lambda v: self.phase(shifter, v) - phase, 0.0, self.v_max, xtol=1e-15, rtol=1e-15))

    def to_dict(self) -> dict:
        return {
            "v_max": self.v_max,
            "shifters": [
                {"kind": k, "m": m, "column": ell, "coeffs": list(c), "rms": self.rms.get((k, m, ell), 0.0)}
                for (k, m, ell), c in sorted(self.coeffs.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0]))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationModel":
        model = cls(float(data["v_max"]))
        for s in data["shifters"]:
            key = (s["kind"], int(s["m"]), int(s["column"]))
            model.coeffs[key] = tuple(float(c) for c in s["coeffs"])
            model.rms[key] = float(s.get("rms", 0.0))
        return model


def unwrap_folded(folded, margin: float = FOLD_MARGIN):
    """Recover an increasing phase from its fold into ``[0, pi]``.

    ``folded`` holds ``|wrap(phase)|`` samples.  Samples within ``margin`` of
    a fold point (and runs shorter than ``MIN_RUN``) are masked out; the remaining runs are
    stitched so the result increases, and the branch of the first run is
    fixed by its own slope (a decreasing fold means the phase is still
    negative).  Returns ``(phase, mask)``.
    """
    folded = np.asarray(folded, dtype=float)
    mask = (folded > margin) & (folded < np.pi - margin)
    idx = np.flatnonzero(mask)
    # runs of consecutive usable samples; very short runs have no reliable slope
    runs = [r for r in np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1) if r.size >= MIN_RUN]
    if not runs:
        raise FitError("too few usable samples to unwrap the phase curve")
    mask = np.zeros_like(mask)
    mask[np.concatenate(runs)] = True
    phase = np.full(folded.shape, np.nan)
    sign = None
    prev_end = None
    for run in runs:
        y = folded[run]
        slope = np.sign(y[-1] - y[0]) if run.size > 1 else 0.0
        if sign is None:
            s = -1.0 if slope < 0 else 1.0
            base = 0.0
        else:
            # crossing a fold point flips the direction of the folded signal
            s = slope if slope != 0 else -sign
            base = _next_branch(phase[prev_end], y[0], s)
        phase[run] = base + s * y
        sign = s
        prev_end = run[-1]
    return phase, mask


def _next_branch(prev, y0, s):
    """Smallest ``2 pi k`` such that ``2 pi k + s * y0`` exceeds ``prev``."""
    k = np.ceil((prev - s * y0) / TWO_PI)
    return TWO_PI * k


def fit_cubic(v, phase, v_max: float):
    """Least-squares cubic in the normalized drive ``v / v_max``.

    Returns coefficients in volts and the RMS residual.

    Raises:
        FitError: if the fit is poor or not monotone on ``[0, v_max]``.
    """
    x = np.asarray(v) / v_max
    a = np.polynomial.polynomial.polyfit(x, phase, 3)
    rms = float(np.sqrt(np.mean((np.polynomial.polynomial.polyval(x, a) - phase) ** 2)))
    if rms > RMS_LIMIT:
        raise FitError(f"cubic fit residual {rms:.2e} rad exceeds {RMS_LIMIT:g}")
    grid = np.linspace(0, 1, 1025)
    slope = a[1] + 2 * a[2] * grid + 3 * a[3] * grid**2
    if np.any(slope <= 0):
        raise FitError("fitted phase curve is not monotone over the drive range")
    coeffs = tuple(float(a[k] / v_max**k) for k in range(4))
    return coeffs, rms


def _column_input_field(physical: PhysicalMesh, ell: int, node_inputs: np.ndarray) -> np.ndarray:
    """Device input that delivers ``node_inputs`` to column ``ell`` through bar-state columns.

    Uses the ideal bar-state model of columns ``1..ell-1``.
    """
    topo = physical.topology
    bar = node_matrices(np.full(topo.m, np.pi), np.full(topo.m, np.pi))
    x = np.asarray(node_inputs, dtype=complex)
    # undo P_ell, then columns ell-1 .. 1
    y = np.empty_like(x)
    y[topo.perm_array(ell)] = x
    for k in range(ell - 1, 0, -1):
        z = y.copy()
        m = topo.m
        inv = np.conj(np.swapaxes(bar, -1, -2))
        top, bot = y[0 : 2 * m : 2], y[1 : 2 * m : 2]
        z[0 : 2 * m : 2] = inv[:, 0, 0] * top + inv[:, 0, 1] * bot
        z[1 : 2 * m : 2] = inv[:, 1, 0] * top + inv[:, 1, 1] * bot
        y = np.empty_like(z)
        y[topo.perm_array(k)] = z
    return y


def _sweep(physical, kind, ell, u, injected, volts, node_power):
    readings = []
    for v in volts:
        physical.apply_voltage((kind, ell), v)
        readings.append(physical.bottom_powers(u, ell, injected) / node_power)
    return np.clip(np.array(readings), 0.0, 1.0)


def _fit_column(model, kind, ell, volts, folded, v_max):
    for m in range(folded.shape[1]):
        phase, mask = unwrap_folded(folded[:, m])
        coeffs, rms = fit_cubic(volts[mask], phase[mask], v_max)
        model.coeffs[(kind, m + 1, ell)] = coeffs
        model.rms[(kind, m + 1, ell)] = rms


def _park_bar(physical, model, ell):
    n_active = physical.topology.columns[ell - 1].n_active
    for m in range(1, n_active + 1):
        physical.apply_voltage(("theta", m, ell), model.voltage(("theta", m, ell), np.pi))
        physical.apply_voltage(("phi", m, ell), model.voltage(("phi", m, ell), np.pi, periodic=True))


def parallel_calibrate(physical: PhysicalMesh, samples: int = MIN_SAMPLES) -> CalibrationModel:
    """Fit every shifter's phase-vs-voltage curve, one column at a time.

    Raises:
        FitError: a curve cannot be unwrapped or fitted.
        RangeError: a split curve does not span ``[0, pi]`` or a phase curve
            spans less than ``2 pi``.
    """
    if not physical.curves:
        raise ValueError("physical mesh has no voltage drive installed")
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples per sweep")
    topo = physical.topology
    v_max = min(c.v_max for c in physical.curves.values())
    volts = np.linspace(0.0, v_max, samples)
    model = CalibrationModel(v_max)
    for ell in range(1, topo.depth + 1):
        n_active = topo.columns[ell - 1].n_active
        pattern = np.zeros(topo.n, dtype=complex)

        # step a: (1, 0) into every node, sweep split voltages
        pattern[0 : 2 * n_active : 2] = 1.0
        x = _column_input_field(physical, ell, pattern)
        injected = float(np.vdot(x, x).real)
        u = physical.column_input(x, ell)
        node_power = np.ones(n_active) / injected
        t = _sweep(physical, "theta", ell, u, injected, volts, node_power)
        _fit_column(model, "theta", ell, volts, 2 * np.arccos(np.sqrt(t)), v_max)
        for m in range(1, n_active + 1):
            lo, hi = model.phase(("theta", m, ell), 0.0), model.phase(("theta", m, ell), v_max)
            if lo > 0 or hi < np.pi:
                raise RangeError(f"split shifter ({m}, {ell}) spans [{lo:.4f}, {hi:.4f}], not [0, pi]")

        # step b: split at pi/2, (1, 1) into every node, sweep phase voltages
        theta_v = [model.voltage(("theta", m, ell), np.pi / 2) for m in range(1, n_active + 1)]
        physical.apply_voltage(("theta", ell), np.array(theta_v))
        sin_a = np.sin([model.phase(("theta", m, ell), v) for m, v in enumerate(theta_v, start=1)])
        pattern[1 : 2 * n_active : 2] = 1.0
        x = _column_input_field(physical, ell, pattern)
        injected = float(np.vdot(x, x).real)
        u = physical.column_input(x, ell)
        node_power = 2 * np.ones(n_active) / injected
        t = _sweep(physical, "phi", ell, u, injected, volts, node_power)
        cos_b = np.clip((1 - 2 * t) / sin_a, -1.0, 1.0)
        _fit_column(model, "phi", ell, volts, np.arccos(cos_b), v_max)
        for m in range(1, n_active + 1):
            lo, hi = model.phase(("phi", m, ell), 0.0), model.phase(("phi", m, ell), v_max)
            if hi - lo < TWO_PI:
                raise RangeError(f"phase shifter ({m}, {ell}) spans {hi - lo:.4f} rad, less than 2 pi")

        _park_bar(physical, model, ell)
        log.debug("calibrated column %d", ell)
    return model


def flash(physical: PhysicalMesh, model: CalibrationModel, params: MeshParams):
    """Drive every shifter to the voltage the model predicts for ``params``.

    Output phases have no calibrated drive and are written directly.
    """
    topo = physical.topology
    params.check(topo)
    for ell, col in enumerate(topo.columns, start=1):
        for m in range(1, col.n_active + 1):
            physical.apply_voltage(("theta", m, ell), model.voltage(("theta", m, ell), params.theta[m - 1, ell - 1]))
            physical.apply_voltage(("phi", m, ell),
                                   model.voltage(("phi", m, ell), params.phi[m - 1, ell - 1], periodic=True))
    physical.gamma = params.gamma.copy()
