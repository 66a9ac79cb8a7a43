"""Canned settings for nullification-set studies and the step-count table."""

from __future__ import annotations

import numpy as np

from .decompose import decompose_rectangular, haar_unitary
from .mesh import MeshParams
from .topology import ColumnedTopology, butterfly, node_count, optical_depth, rectangular, triangular

__all__ = [
    "PRESETS",
    "preset_params",
    "random_phase_params",
    "band_profile",
    "band_flatness",
    "reversal_symmetry",
    "speedup_row",
    "ARCHITECTURES",
]

PRESETS = ("bar", "cross", "phase-random", "haar")
ARCHITECTURES = {"rectangular": rectangular, "triangular": triangular, "butterfly": butterfly}


def random_phase_params(topology: ColumnedTopology, rng: np.random.Generator) -> MeshParams:
    """Uniform ``theta`` in [0, pi] and ``phi`` in [0, 2 pi) on every active node."""
    shape = (topology.m, topology.depth)
    theta = rng.uniform(0.0, np.pi, shape)
    phi = rng.uniform(0.0, 2 * np.pi, shape)
    return MeshParams.for_topology(topology, theta, phi)


def preset_params(name: str, topology: ColumnedTopology, rng: np.random.Generator | None = None) -> MeshParams:
    """Settings for one of :data:`PRESETS`.

    ``haar`` decomposes a Haar-random unitary and is only defined for the
    rectangular grid.
    """
    shape = (topology.m, topology.depth)
    if name == "bar":
        return MeshParams.bar(topology)
    if name == "cross":
        return MeshParams.for_topology(topology, np.zeros(shape), np.zeros(shape))
    if rng is None:
        raise ValueError(f"preset {name!r} needs a random generator")
    if name == "phase-random":
        return random_phase_params(topology, rng)
    if name == "haar":
        return decompose_rectangular(haar_unitary(topology.n, rng), topology)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


def band_profile(u, anti: bool = False) -> np.ndarray:
    """Mean ``|U_ij|^2`` over each diagonal ``j - i`` (or anti-diagonal ``i + j``)."""
    p = np.abs(np.asarray(u)) ** 2
    n = p.shape[0]
    i, j = np.indices(p.shape)
    key = (i + j) if anti else (j - i + n - 1)
    sums = np.bincount(key.ravel(), weights=p.ravel(), minlength=2 * n - 1)
    counts = np.bincount(key.ravel(), minlength=2 * n - 1)
    return sums / counts


def band_flatness(u) -> float:
    """Coefficient of variation of the diagonal band means (0 for a flat matrix)."""
    prof = band_profile(u)
    return float(np.std(prof) / np.mean(prof))


def reversal_symmetry(powers) -> dict:
    """Deviations of a power map from the reversal relations it may obey.

    Keys: ``"both"`` (invariant under reversing both axes), ``"transpose"``,
    ``"rows_complement"`` (row reversal gives ``1 - map``) and
    ``"modes_complement"`` (mode reversal gives ``1 - map``).
    """
    p = np.asarray(powers, dtype=float)
    out = {
        "both": float(np.max(np.abs(p[::-1, ::-1] - p))),
        "rows_complement": float(np.max(np.abs(p[::-1] - (1 - p)))),
        "modes_complement": float(np.max(np.abs(p[:, ::-1] - (1 - p)))),
    }
    out["transpose"] = float(np.max(np.abs(p.T - p))) if p.shape[0] == p.shape[1] else float("inf")
    return out


def speedup_row(architecture: str, n: int) -> tuple[int, int, float]:
    """``(node count, columns, node count / columns)`` for a generated architecture."""
    try:
        build = ARCHITECTURES[architecture]
    except KeyError:
        raise ValueError(f"unknown architecture {architecture!r}") from None
    topo = build(n)
    nodes, depth = node_count(topo), optical_depth(topo)
    return nodes, depth, nodes / depth
