"""Factorization of a unitary onto the rectangular grid, and random targets."""

from __future__ import annotations

import numpy as np

from .errors import NonUnitaryError
from .mesh import MeshParams, unitarity_error
from .topology import ColumnedTopology, rectangular

__all__ = ["haar_unitary", "decompose_rectangular"]


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: QR of a complex Gaussian with R-diagonal phases removed."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _null_right(x, y):
    # [x, y] @ T^H has a zero first entry
    theta = 2 * np.arctan2(abs(y), abs(x))
    phi = np.angle(-x * np.conj(y)) if y != 0 and x != 0 else 0.0
    return theta, phi


def _null_left(x, y):
    # T @ [x, y] has a zero second entry
    theta = 2 * np.arctan2(abs(x), abs(y))
    phi = np.angle(y * np.conj(x)) if y != 0 and x != 0 else 0.0
    return theta, phi


def _t2(theta, phi):
    s, c = np.sin(theta / 2), np.cos(theta / 2)
    e = np.exp(1j * phi)
    return 1j * np.array([[e * s, c], [e * c, -s]])


def _clements_nodes(u: np.ndarray):
    """Clements elimination with the mesh's node convention.

    Returns ``(d, nodes)`` where ``nodes`` is a list of ``(row, theta, phi)``
    acting on rows ``(row, row + 1)`` in application order and
    ``u = diag(d) @ T_last ... T_first``.
    """
    n = u.shape[0]
    v = u.astype(complex).copy()
    right = []
    left = []
    for i in range(n - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                a = i - j
                r = n - 1 - j
                theta, phi = _null_right(v[r, a], v[r, a + 1])
                v[:, a : a + 2] = v[:, a : a + 2] @ _t2(theta, phi).conj().T
                right.append((a, theta, phi))
        else:
            for j in range(1, i + 2):
                b = n + j - i - 2
                col = j - 1
                theta, phi = _null_left(v[b - 1, col], v[b, col])
                v[b - 1 : b + 1, :] = _t2(theta, phi) @ v[b - 1 : b + 1, :]
                left.append((b - 1, theta, phi))

    d = np.diagonal(v).copy()
    # move each left node through the diagonal: T^H diag(d1, d2) = diag(-e^{-i phi} d2, -d2) T(theta, arg(d1/d2))
    moved = []
    for a, theta, phi in reversed(left):
        d1, d2 = d[a], d[a + 1]
        moved.append((a, theta, float(np.angle(d1 / d2))))
        d[a] = -np.exp(-1j * phi) * d2
        d[a + 1] = -d2
    # u = diag(d) T'_1 ... T'_p R_q ... R_1
    nodes = right + moved
    return d, nodes


def _schedule(nodes, n: int):
    """Assign each node to the earliest grid column of matching parity."""
    last = np.zeros(n, dtype=int)
    placed = []
    for a, theta, phi in nodes:
        ell = max(last[a], last[a + 1]) + 1
        if (ell % 2 == 1) != (a % 2 == 0):
            ell += 1
        last[a] = last[a + 1] = ell
        placed.append((ell, a, theta, phi))
    return placed


def decompose_rectangular(u, topology: ColumnedTopology | None = None, tol: float = 1e-8) -> MeshParams:
    """Settings that make :func:`rectangular` ``(N)`` implement ``u`` exactly.

    Clements-style alternating row/column Givens eliminations give the node
    settings on physical rows; the diagonal phases picked up by synthetic bar
    nodes and by pushing the left-hand nodes through the residual diagonal are
    absorbed column by column into the following ``phi`` values and finally
    into ``gamma``.

    Raises:
        NonUnitaryError: if ``||U^H U - I||_F > tol``.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("expected a square matrix")
    err = unitarity_error(u)
    if err > tol:
        raise NonUnitaryError(err)
    n = u.shape[0]
    topo = topology or rectangular(n)
    frames = topo.frames()
    L = topo.depth

    d, nodes = _clements_nodes(u)
    placed = _schedule(nodes, n)
    theta = np.full((topo.m, L), np.pi)
    phi = np.full((topo.m, L), np.pi)
    by_column = [[] for _ in range(L)]
    for ell, a, th, ph in placed:
        if ell > L:
            raise RuntimeError(f"node on rows ({a}, {a + 1}) scheduled past the last column")
        by_column[ell - 1].append((a, th, ph))

    # f: diagonal accumulated between the ideal node columns and the real ones
    f = np.ones(n, dtype=complex)
    for ell in range(1, L + 1):
        s = frames[ell]
        slot_of = np.argsort(s)
        n_active = topo.columns[ell - 1].n_active
        paired = np.zeros(n, dtype=bool)
        for a, th, ph in by_column[ell - 1]:
            k = slot_of[a]
            if k % 2 or slot_of[a + 1] != k + 1 or k // 2 >= n_active:
                raise RuntimeError(f"rows ({a}, {a + 1}) do not form an active node of column {ell}")
            m = k // 2
            fa, fb = f[a], f[a + 1]
            theta[m, ell - 1] = th
            phi[m, ell - 1] = ph + np.angle(fa / fb)
            f[a] = f[a + 1] = fb
            paired[a] = paired[a + 1] = True
        if len(by_column[ell - 1]) != n_active:
            raise RuntimeError(f"column {ell} received {len(by_column[ell - 1])} nodes, expected {n_active}")
        # synthetic bar slots contribute -i on their rows; an unpaired last slot contributes 1
        for k in range(2 * n_active, 2 * topo.m):
            f[s[k]] /= -1j
    gamma = np.angle(d * f)
    return MeshParams(theta, phi, gamma)
