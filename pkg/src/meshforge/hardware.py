"""Simulated photonic chip with injectable hardware errors.

:class:`PhysicalMesh` holds the *actual* node settings ``alpha`` (split) and
``beta`` (differential phase), which generally differ from the ideal
``theta``/``phi`` of a :class:`~meshforge.mesh.MeshParams`.  Light only
enters through the device inputs; programming routines observe the chip via
bottom-port detectors (:meth:`PhysicalMesh.inject_and_read`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mesh import STANDARD, MeshParams, NodeVariant, _act, apply_output, node_matrices
from .topology import ColumnedTopology

__all__ = ["ErrorModel", "DetectorReading", "VoltageCurve", "PhysicalMesh"]

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


@dataclass
class ErrorModel:
    """Hardware imperfections.

    ``column_loss`` holds amplitude factors ``mu_ell`` (``None`` = lossless);
    ``crosstalk`` is a scalar or a per-column array of nearest-neighbour
    couplings of the split settings within a column.
    """

    drift_sigma: float = 0.0
    theta_range: tuple[float, float] = (0.0, np.pi)
    column_loss: np.ndarray | None = None
    crosstalk: float | np.ndarray = 0.0
    detector_floor: float = 0.0

    def __post_init__(self):
        lo, hi = self.theta_range
        if not 0.0 <= lo < hi <= np.pi:
            raise ValueError(f"invalid split-ratio range {self.theta_range}")
        self.theta_range = (float(lo), float(hi))
        if self.column_loss is not None:
            mu = np.asarray(self.column_loss, dtype=float)
            if np.any(mu <= 0) or np.any(mu > 1):
                raise ValueError("column losses must lie in (0, 1]")
            self.column_loss = mu
        if np.any(np.asarray(self.crosstalk) < 0):
            raise ValueError("crosstalk coefficients must be non-negative")
        if self.detector_floor < 0 or self.drift_sigma < 0:
            raise ValueError("detector_floor and drift_sigma must be non-negative")

    def to_dict(self) -> dict:
        xt = np.asarray(self.crosstalk)
        return {
            "drift_sigma": self.drift_sigma,
            "theta_range": list(self.theta_range),
            "column_loss": None if self.column_loss is None else self.column_loss.tolist(),
            "crosstalk": float(xt) if xt.ndim == 0 else xt.tolist(),
            "detector_floor": self.detector_floor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorModel":
        data = dict(data)
        if "theta_range" in data:
            data["theta_range"] = tuple(data["theta_range"])
        if isinstance(data.get("crosstalk"), list):
            data["crosstalk"] = np.asarray(data["crosstalk"], dtype=float)
        return cls(**data)


@dataclass(frozen=True)
class DetectorReading:
    """Bottom-port power of one node, as a fraction of the injected power."""

    node: int
    port: int
    power: float


@dataclass(frozen=True)
class VoltageCurve:
    """Monotone cubic phase response ``phase(v) = c0 + c1 v + c2 v^2 + c3 v^3`` on ``[0, v_max]``."""

    coeffs: tuple[float, float, float, float]
    v_max: float

    def __call__(self, v):
        c0, c1, c2, c3 = self.coeffs
        return c0 + v * (c1 + v * (c2 + v * c3))

    @classmethod
    def random(cls, rng: np.random.Generator, span: float, v_max: float = 5.0,
               offset_range=(-0.3, -0.05)) -> "VoltageCurve":
        """Draw a strictly increasing cubic with ``phase(0) < 0`` and total rise ``span``.

        Normalized coefficients ``a1, a3`` are drawn uniformly (``a1`` in
        [0.15, 0.6], ``a3`` in [-0.2, 0.4]) with ``a2 = 1 - a1 - a3``; draws that
        are non-monotone or have a coefficient below 0.05 in magnitude are
        rejected.
        """
        x = np.linspace(0, 1, 513)
        while True:
            a1 = rng.uniform(0.15, 0.6)
            a3 = rng.uniform(-0.2, 0.4)
            a2 = 1.0 - a1 - a3
            if min(abs(a1), abs(a2), abs(a3)) < 0.05:
                continue
            if np.all(a1 + 2 * a2 * x + 3 * a3 * x**2 > 0.02):
                break
        c0 = rng.uniform(*offset_range)
        coeffs = (c0, span * a1 / v_max, span * a2 / v_max**2, span * a3 / v_max**3)
        return cls(tuple(float(c) for c in coeffs), float(v_max))


class PhysicalMesh:
    """Mutable simulated chip.

    Synthetic bar slots (``m > M_ell``) are fixed at ``alpha = beta = pi`` and
    are not affected by drift, clamping or crosstalk.

    Args:
        topology: compiled mesh layout.
        alpha, beta: initial ``(M, L)`` settings (default: bar state).
        gamma: output phases (default zero).
        variant: node realization.
        error_model: imperfections; defaults to an ideal chip.
        seed: seed for any internally generated randomness.
    """

    def __init__(self, topology: ColumnedTopology, alpha=None, beta=None, gamma=None,
                 variant: NodeVariant = STANDARD, error_model: ErrorModel | None = None, seed: int = 0):
        self.topology = topology
        self.variant = variant
        self.error_model = error_model or ErrorModel()
        self.seed = seed
        shape = (topology.m, topology.depth)
        self.active = topology.active_mask()
        self.alpha = np.full(shape, np.pi)
        self.beta = np.full(shape, np.pi)
        self.gamma = np.zeros(topology.n) if gamma is None else np.mod(np.array(gamma, dtype=float), TWO_PI)
        self.clamp_events: list[tuple[int, int, float]] = []
        self.curves: dict[tuple[str, int, int], VoltageCurve] = {}
        self.programmed = 0
        self.readings_taken = 0
        self._loss = self._column_loss_array()
        self._xtalk = self._crosstalk_array()
        if alpha is not None:
            self.set_alpha(np.asarray(alpha, dtype=float))
        if beta is not None:
            self.set_beta(np.asarray(beta, dtype=float))

    # construction helpers

    @classmethod
    def randomized(cls, topology: ColumnedTopology, seed: int, **kwargs) -> "PhysicalMesh":
        """Chip with uniformly random ``alpha`` in the allowed split range and ``beta`` in [0, 2 pi)."""
        mesh = cls(topology, seed=seed, **kwargs)
        rng = np.random.default_rng(seed)
        lo, hi = mesh.theta_limits()
        shape = mesh.alpha.shape
        mesh.set_alpha(rng.uniform(lo, hi, shape))
        mesh.set_beta(rng.uniform(0, TWO_PI, shape))
        mesh.gamma = rng.uniform(0, TWO_PI, topology.n)
        return mesh

    @classmethod
    def from_params(cls, topology: ColumnedTopology, params: MeshParams, **kwargs) -> "PhysicalMesh":
        return cls(topology, alpha=params.theta, beta=params.phi, gamma=params.gamma, **kwargs)

    def copy(self) -> "PhysicalMesh":
        other = PhysicalMesh.__new__(PhysicalMesh)
        other.__dict__.update(self.__dict__)
        for name in ("alpha", "beta", "gamma", "_loss", "_xtalk"):
            setattr(other, name, getattr(self, name).copy())
        other.clamp_events = list(self.clamp_events)
        other.curves = dict(self.curves)
        return other

    def _column_loss_array(self):
        mu = self.error_model.column_loss
        if mu is None:
            return np.ones(self.topology.depth)
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (self.topology.depth,)).copy()
        return mu

    def _crosstalk_array(self):
        return np.broadcast_to(np.asarray(self.error_model.crosstalk, dtype=float),
                               (self.topology.depth,)).copy()

    # settings

    def theta_limits(self) -> tuple[float, float]:
        """Achievable split range: the coupler's own range for TDC nodes, else the error model's."""
        if self.variant.kind == "tdc":
            return self.variant.theta_range()
        return self.error_model.theta_range

    def set_alpha(self, values, ell: int | None = None, nodes=None):
        """Write split settings (clamped to :meth:`theta_limits`).

        With ``ell`` given, ``values`` addresses active nodes of that column
        (all of them, or the 1-based ``nodes``).  Returns the clamped values.
        """
        lo, hi = self.theta_limits()
        if ell is None:
            values = np.where(self.active, values, np.pi)
            clamped = np.clip(values, lo, hi)
            hit = self.active & (clamped != values)
            for m, c in zip(*np.nonzero(hit)):
                self.clamp_events.append((int(m) + 1, int(c) + 1, float(values[m, c])))
            self.alpha = np.where(self.active, clamped, np.pi)
            return self.alpha
        idx = self._node_index(ell, nodes)
        values = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        clamped = np.clip(values, lo, hi)
        for m, v, c in zip(idx, values, clamped):
            if v != c:
                self.clamp_events.append((int(m) + 1, ell, float(v)))
        self.alpha[idx, ell - 1] = clamped
        return clamped

    def set_beta(self, values, ell: int | None = None, nodes=None):
        if ell is None:
            self.beta = np.where(self.active, np.mod(values, TWO_PI), np.pi)
            return self.beta
        idx = self._node_index(ell, nodes)
        self.beta[idx, ell - 1] = np.mod(values, TWO_PI)
        return self.beta[idx, ell - 1]

    def _node_index(self, ell, nodes):
        n_active = self.topology.columns[ell - 1].n_active
        if nodes is None:
            return np.arange(n_active)
        idx = np.asarray(nodes, dtype=np.intp).reshape(-1) - 1
        if np.any(idx < 0) or np.any(idx >= n_active):
            raise IndexError(f"column {ell} has nodes 1..{n_active}")
        return idx

    def set_split_ratio_limit(self, theta_min: float, theta_max: float):
        """Restrict the reachable split range; current settings are clamped into it."""
        em = self.error_model
        self.error_model = ErrorModel(em.drift_sigma, (theta_min, theta_max), em.column_loss,
                                      em.crosstalk, em.detector_floor)
        self.set_alpha(self.alpha)

    def apply_crosstalk(self, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if np.any(coefficients < 0):
            raise ValueError("crosstalk coefficients must be non-negative")
        self.error_model.crosstalk = coefficients
        self._xtalk = self._crosstalk_array()

    def set_column_loss(self, mu):
        self.error_model.column_loss = None if mu is None else np.asarray(mu, dtype=float)
        self.error_model.__post_init__()
        self._loss = self._column_loss_array()

    def inject_drift(self, sigma: float, seed: int):
        """Add N(0, sigma^2) drift to every active ``alpha`` and ``beta``.

        ``alpha`` is clamped (not reflected) at the split-range bounds and each
        clamp is appended to :attr:`clamp_events`.
        """
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if sigma == 0:
            return
        rng = np.random.default_rng(seed)
        d_alpha = rng.normal(0.0, sigma, self.alpha.shape)
        d_beta = rng.normal(0.0, sigma, self.beta.shape)
        self.set_alpha(self.alpha + d_alpha)
        self.set_beta(self.beta + d_beta)

    def effective_theta(self, ell: int) -> np.ndarray:
        """Split settings actually seen by the active nodes of column ``ell``."""
        n_active = self.topology.columns[ell - 1].n_active
        a = self.alpha[:n_active, ell - 1]
        c = self._xtalk[ell - 1]
        if c == 0 or n_active == 1:
            return a.copy()
        neighbours = np.zeros_like(a)
        neighbours[1:] += a[:-1]
        neighbours[:-1] += a[1:]
        return a + c * neighbours

    # optics

    def _column_nodes(self, ell: int) -> np.ndarray:
        theta = self.alpha[:, ell - 1].copy()
        n_active = self.topology.columns[ell - 1].n_active
        theta[:n_active] = self.effective_theta(ell)
        return node_matrices(theta, self.beta[:, ell - 1], self.variant)

    def apply_column(self, x, ell: int) -> np.ndarray:
        y = np.asarray(x, dtype=complex)[self.topology.perm_array(ell)]
        return _act(y, self._column_nodes(ell)) * self._loss[ell - 1]

    def forward(self, w, up_to_column: int) -> np.ndarray:
        """Physically propagate ``w`` through columns ``1..up_to_column``."""
        x = np.asarray(w, dtype=complex)
        for ell in range(1, up_to_column + 1):
            x = self.apply_column(x, ell)
        return x

    def column_input(self, w, ell: int) -> np.ndarray:
        """Field entering the nodes of column ``ell``: ``P_ell`` applied after columns ``1..ell-1``."""
        return self.forward(w, ell - 1)[self.topology.perm_array(ell)]

    def bottom_powers(self, u, ell: int, normalize_by: float = 1.0) -> np.ndarray:
        """Detector powers of the active nodes of column ``ell`` given its input field ``u``."""
        n_active = self.topology.columns[ell - 1].n_active
        out = _act(np.asarray(u), self._column_nodes(ell)) * self._loss[ell - 1]
        p = np.abs(out[1 : 2 * n_active : 2]) ** 2 / normalize_by
        floor = self.error_model.detector_floor
        if floor > 0:
            p = np.where(p < floor, 0.0, p)
        self.readings_taken += 1
        return p

    def inject_and_read(self, w, ell: int) -> list[DetectorReading]:
        """Inject ``w`` and read the bottom detectors of column ``ell``."""
        w = np.asarray(w, dtype=complex)
        if not 1 <= ell <= self.topology.depth:
            raise ValueError(f"column must lie in 1..{self.topology.depth}")
        p = self.bottom_powers(self.column_input(w, ell), ell, normalize_by=float(np.vdot(w, w).real))
        return [DetectorReading(node=m + 1, port=2 * m + 1, power=float(v)) for m, v in enumerate(p)]

    def matrix(self) -> np.ndarray:
        """Full physical operator including losses, output permutation and ``gamma``."""
        x = self.forward(np.eye(self.topology.n, dtype=complex), self.topology.depth)
        return apply_output(x, self.topology, self.gamma)

    # voltage drive

    def install_voltage_curves(self, seed: int, theta_span: float = np.pi + 0.5,
                               phi_span: float = TWO_PI + 0.5, v_max: float = 5.0):
        """Give every active node hidden cubic phase-vs-voltage curves.

        Coefficients are drawn with :meth:`VoltageCurve.random` from
        ``default_rng(seed)`` in column-major node order, theta shifter first.
        """
        rng = np.random.default_rng(seed)
        self.curves = {}
        for ell, col in enumerate(self.topology.columns, start=1):
            for m in range(1, col.n_active + 1):
                self.curves[("theta", m, ell)] = VoltageCurve.random(rng, theta_span, v_max)
                self.curves[("phi", m, ell)] = VoltageCurve.random(rng, phi_span, v_max)

    def apply_voltage(self, shifter, v):
        """Drive a phase shifter ``(kind, m, ell)`` through its hidden curve.

        Voltage-driven settings bypass the split-range clamp; ``v`` may be an
        array when ``shifter`` is ``(kind, ell)``, addressing every active
        node of the column at once.
        """
        if len(shifter) == 2:
            kind, ell = shifter
            n_active = self.topology.columns[ell - 1].n_active
            v = np.broadcast_to(np.asarray(v, dtype=float), (n_active,))
            for m in range(1, n_active + 1):
                self.apply_voltage((kind, m, ell), v[m - 1])
            return
        kind, m, ell = shifter
        curve = self.curves.get((kind, m, ell))
        if curve is None:
            raise KeyError(f"no voltage curve for shifter {shifter}")
        if not 0.0 <= v <= curve.v_max:
            raise ValueError(f"voltage {v} outside drive range [0, {curve.v_max}]")
        phase = curve(v)
        if kind == "theta":
            self.alpha[m - 1, ell - 1] = phase
        elif kind == "phi":
            self.beta[m - 1, ell - 1] = np.mod(phase, TWO_PI)
        else:
            raise KeyError(f"unknown shifter kind {kind!r}")
