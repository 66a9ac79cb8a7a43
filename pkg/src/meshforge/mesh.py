"""Transfer matrices of nodes, columns and whole feedforward meshes.

The node convention is

    T2(theta, phi) = i * [[e^{i phi} sin(theta/2),  cos(theta/2)],
                          [e^{i phi} cos(theta/2), -sin(theta/2)]]

so ``theta = pi`` is the bar state and ``theta = 0`` the cross state.  Mesh
operators are ``U = Gamma(gamma) P_final U_L ... U_1`` with column ``1``
acting first on the input vector, and ``U_ell = T(theta_ell, phi_ell) P_ell``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import ColumnedTopology

__all__ = [
    "NodeVariant",
    "STANDARD",
    "DIFFERENTIAL",
    "TDC",
    "NodePhases",
    "MeshParams",
    "power",
    "node_matrix",
    "node_matrices",
    "embed_node",
    "permutation_matrix",
    "column_matrix",
    "apply_column",
    "apply_column_transpose",
    "apply_output",
    "mesh_matrix",
    "propagate",
    "unitarity_error",
]

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class NodeVariant:
    """Physical realization of a tunable beamsplitter node.

    ``standard``: phase shifter on the top input followed by a tunable
    coupler.  ``differential``: two phase shifters limited to ``pi`` (top arm
    for ``phi < pi``, bottom arm otherwise).  ``tdc``: a tunable directional
    coupler with coupling-length product ``kappa*L`` in ``tdc_range``.
    """

    kind: str = "standard"
    tdc_range: tuple[float, float] = (0.0, np.pi)

    def __post_init__(self):
        if self.kind not in ("standard", "differential", "tdc"):
            raise ValueError(f"unknown node variant {self.kind!r}")

    def theta_range(self) -> tuple[float, float]:
        """Split settings reachable by the coupler itself."""
        if self.kind != "tdc":
            return 0.0, np.pi
        k0, k1 = self.tdc_range
        # theta = pi - 2 kappa L
        return max(0.0, np.pi - 2 * k1), min(np.pi, np.pi - 2 * k0)


STANDARD = NodeVariant("standard")
DIFFERENTIAL = NodeVariant("differential")
TDC = NodeVariant("tdc")


@dataclass(frozen=True)
class NodePhases:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(np.mod(self.phi, TWO_PI)))


def power(v) -> float:
    v = np.asarray(v)
    return float(np.vdot(v, v).real)


def node_matrices(theta, phi, variant: NodeVariant = STANDARD) -> np.ndarray:
    """Vectorized node matrices with shape ``theta.shape + (2, 2)``.

    No range checks: effective (e.g. crosstalk-shifted) settings outside
    ``[0, pi]`` are evaluated with the same formula.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(theta / 2)
    c = np.cos(theta / 2)
    out = np.empty(np.broadcast(theta, phi).shape + (2, 2), dtype=complex)
    if variant.kind == "standard":
        e = np.exp(1j * phi)
        out[..., 0, 0] = 1j * e * s
        out[..., 0, 1] = 1j * c
        out[..., 1, 0] = 1j * e * c
        out[..., 1, 1] = -1j * s
    elif variant.kind == "differential":
        phi = np.mod(phi, TWO_PI)
        lower = phi < np.pi
        top = np.exp(1j * np.where(lower, phi, 0.0))
        bottom = np.exp(1j * np.where(lower, 0.0, TWO_PI - phi))
        out[..., 0, 0] = 1j * top * s
        out[..., 0, 1] = 1j * bottom * c
        out[..., 1, 0] = 1j * top * c
        out[..., 1, 1] = -1j * bottom * s
    else:
        kl = (np.pi - theta) / 2
        e = np.exp(1j * (phi + np.pi / 2))
        ck, sk = np.cos(kl), np.sin(kl)
        out[..., 0, 0] = ck * e
        out[..., 0, 1] = 1j * sk
        out[..., 1, 0] = 1j * sk * e
        out[..., 1, 1] = ck
    return out


def node_matrix(phases, variant: NodeVariant = STANDARD) -> np.ndarray:
    """2x2 transmission matrix of one node.

    ``phases`` is a :class:`NodePhases` or a ``(theta, phi)`` pair (validated
    the same way).
    """
    if not isinstance(phases, NodePhases):
        phases = NodePhases(*phases)
    return node_matrices(phases.theta, phases.phi, variant)


def embed_node(t2, m: int, n_dim: int) -> np.ndarray:
    """Embed a 2x2 block on waveguides ``(2m-1, 2m)`` (1-based) of an identity."""
    if m < 1 or 2 * m > n_dim:
        raise IndexError(f"node index m={m} does not fit in N={n_dim}")
    out = np.eye(n_dim, dtype=complex)
    out[2 * m - 2 : 2 * m, 2 * m - 2 : 2 * m] = t2
    return out


def permutation_matrix(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.intp)
    n = perm.size
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError(f"not a permutation: {perm.tolist()}")
    return np.eye(n, dtype=complex)[perm]


def _act(y, t):
    """Apply a bank of node matrices ``t`` (M, 2, 2) to the paired rows of ``y``."""
    m = t.shape[0]
    top = y[0 : 2 * m : 2]
    bot = y[1 : 2 * m : 2]
    if y.ndim == 2:
        t = t[:, None]
    new_top = t[..., 0, 0] * top + t[..., 0, 1] * bot
    new_bot = t[..., 1, 0] * top + t[..., 1, 1] * bot
    out = y.copy()
    out[0 : 2 * m : 2] = new_top
    out[1 : 2 * m : 2] = new_bot
    return out


def apply_column(x, perm, theta, phi, variant: NodeVariant = STANDARD, t=None) -> np.ndarray:
    """``U_ell @ x`` for a vector ``(N,)`` or a stack of columns ``(N, K)``."""
    y = np.asarray(x, dtype=complex)[np.asarray(perm)]
    if t is None:
        t = node_matrices(theta, phi, variant)
    return _act(y, t)


def apply_column_transpose(x, perm, theta, phi, variant: NodeVariant = STANDARD, t=None) -> np.ndarray:
    """``U_ell^T @ x`` (plain transpose, no conjugation)."""
    if t is None:
        t = node_matrices(theta, phi, variant)
    y = _act(np.asarray(x, dtype=complex), np.swapaxes(t, -1, -2))
    out = np.empty_like(y)
    out[np.asarray(perm)] = y
    return out


def column_matrix(perm, theta, phi, variant: NodeVariant = STANDARD) -> np.ndarray:
    """``U_N^(ell) = T_N(theta_ell, phi_ell) P_N^(ell)`` as a dense matrix."""
    perm = np.asarray(perm, dtype=np.intp)
    n = perm.size
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError(f"not a permutation: {perm.tolist()}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if theta.shape != (n // 2,) or phi.shape != (n // 2,):
        raise ValueError(f"column needs {n // 2} settings per parameter")
    return apply_column(np.eye(n, dtype=complex), perm, theta, phi, variant)


@dataclass(frozen=True, eq=False)
class MeshParams:
    """Ideal settings: ``theta``/``phi`` with shape ``(M, L)``, ``gamma`` with shape ``(N,)``."""

    theta: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        phi = np.mod(np.array(self.phi, dtype=float), TWO_PI)
        gamma = np.mod(np.array(self.gamma, dtype=float), TWO_PI)
        if theta.ndim != 2 or theta.shape != phi.shape:
            raise ValueError(f"theta and phi must share an (M, L) shape, got {theta.shape} and {phi.shape}")
        if gamma.ndim != 1:
            raise ValueError("gamma must be a vector")
        if np.any(theta < -1e-12) or np.any(theta > np.pi + 1e-12):
            raise ValueError("theta must lie in [0, pi]")
        theta = np.clip(theta, 0.0, np.pi)
        for a in (theta, phi, gamma):
            a.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def for_topology(cls, topology: ColumnedTopology, theta, phi, gamma=None) -> "MeshParams":
        """Build params, forcing synthetic slots to the bar state ``theta = phi = pi``."""
        mask = topology.active_mask()
        theta = np.where(mask, np.asarray(theta, dtype=float), np.pi)
        phi = np.where(mask, np.asarray(phi, dtype=float), np.pi)
        if gamma is None:
            gamma = np.zeros(topology.n)
        return cls(theta, phi, gamma)

    @classmethod
    def bar(cls, topology: ColumnedTopology) -> "MeshParams":
        shape = (topology.m, topology.depth)
        return cls(np.full(shape, np.pi), np.full(shape, np.pi), np.zeros(topology.n))

    def check(self, topology: ColumnedTopology):
        expected = (topology.m, topology.depth)
        if self.theta.shape != expected or self.gamma.shape != (topology.n,):
            raise ValueError(
                f"params have theta {self.theta.shape} / gamma {self.gamma.shape}; "
                f"topology needs {expected} / ({topology.n},)"
            )

    def with_gamma(self, gamma) -> "MeshParams":
        return MeshParams(self.theta, self.phi, gamma)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "phi": self.phi.tolist(),
            "gamma": self.gamma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeshParams":
        return cls(np.array(data["theta"], dtype=float), np.array(data["phi"], dtype=float),
                   np.array(data["gamma"], dtype=float))


def _columns(topology, params, variant, stop):
    for ell in range(1, stop + 1):
        yield ell, topology.perm_array(ell), node_matrices(params.theta[:, ell - 1], params.phi[:, ell - 1], variant)


def apply_output(x, topology: ColumnedTopology, gamma) -> np.ndarray:
    """``D_N x = Gamma(gamma) P_N x``."""
    x = np.asarray(x)
    y = x[np.asarray(topology.final_perm)]
    phase = np.exp(1j * np.asarray(gamma))
    return phase[:, None] * y if y.ndim == 2 else phase * y


def propagate(topology: ColumnedTopology, params: MeshParams, v_in, up_to_column: int | None = None,
              variant: NodeVariant = STANDARD, apply_output_phases: bool = False,
              column_loss=None) -> np.ndarray:
    """Propagate ``v_in`` through columns ``1..up_to_column``.

    ``up_to_column=0`` returns the input unchanged.  The output permutation
    and phases are applied only when ``apply_output_phases`` is set and all
    ``L`` columns have been traversed.  ``v_in`` may also be an ``(N, K)``
    stack of input vectors.
    """
    params.check(topology)
    L = topology.depth
    k = L if up_to_column is None else up_to_column
    if not 0 <= k <= L:
        raise ValueError(f"up_to_column must lie in 0..{L}")
    x = np.asarray(v_in, dtype=complex)
    if x.shape[0] != topology.n:
        raise ValueError(f"input has {x.shape[0]} modes; mesh has {topology.n}")
    x = x.copy()
    for ell, perm, t in _columns(topology, params, variant, k):
        x = apply_column(x, perm, None, None, t=t)
        if column_loss is not None:
            x = x * column_loss[ell - 1]
    if apply_output_phases and k == L:
        x = apply_output(x, topology, params.gamma)
    return x


def mesh_matrix(topology: ColumnedTopology, params: MeshParams, variant: NodeVariant = STANDARD,
                column_loss=None) -> np.ndarray:
    """Full operator ``D_N U_L ... U_1``; optional per-column amplitude factors."""
    return propagate(topology, params, np.eye(topology.n, dtype=complex), variant=variant,
                     apply_output_phases=True, column_loss=column_loss)


def unitarity_error(u) -> float:
    u = np.asarray(u)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))
