"""Feedforward netlists and their compact, column-wise representation.

A :class:`Netlist` describes an arbitrary feedforward mesh as a set of 2x2
couplings between abstract links.  :func:`compactify` traverses it
breadth-first and groups nodes by the time step at which both of their inputs
become available.  Each group is a column of mutually independent nodes and
the number of groups is the optical depth of the mesh.

Column slots and node indices
-----------------------------
Inside a :class:`ColumnedTopology` every column is stored as a permutation
``perm`` (``y[i] = x[perm[i]]``, 0-based) followed by a bank of
``M = n // 2`` two-port slots.  Active nodes occupy slots
``(0, 1), (2, 3), ...`` and the remaining slots hold synthetic bar nodes.
Node addresses ``(m, ell)`` are 1-based everywhere in the public API.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import CycleError, DanglingLinkError, NetlistError

__all__ = [
    "Coupling",
    "Netlist",
    "Column",
    "ColumnedTopology",
    "compactify",
    "rectangular",
    "triangular",
    "butterfly",
    "optical_depth",
    "node_count",
    "to_netlist",
    "random_netlist",
    "cyclify",
]

Link = Hashable


@dataclass(frozen=True)
class Coupling:
    node_id: Hashable
    inputs: tuple[Link, Link]
    outputs: tuple[Link, Link]


@dataclass(frozen=True)
class Netlist:
    """A feedforward mesh as a list of couplings between links.

    ``inputs`` defaults to the links ``1..n_inputs``; ``outputs`` lists the
    ``n_inputs`` links that leave the device, in output-port order.
    """

    n_inputs: int
    couplings: tuple[Coupling, ...]
    outputs: tuple[Link, ...]
    inputs: tuple[Link, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.inputs:
            object.__setattr__(self, "inputs", tuple(range(1, self.n_inputs + 1)))
        else:
            object.__setattr__(self, "inputs", tuple(self.inputs))

    @property
    def node_ids(self):
        return [c.node_id for c in self.couplings]

    def validate(self):
        """Check the producer/consumer invariants.

        Raises:
            NetlistError: on duplicate node ids or wrong port counts.
            DanglingLinkError: if a link does not have exactly one producer and
                exactly one consumer.
        """
        if self.n_inputs < 2:
            raise NetlistError("a mesh needs at least two waveguides")
        if len(self.inputs) != self.n_inputs or len(self.outputs) != self.n_inputs:
            raise NetlistError(
                f"expected {self.n_inputs} device inputs and outputs, "
                f"got {len(self.inputs)} and {len(self.outputs)}"
            )
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1}, key=str)
            raise NetlistError(f"duplicate node ids: {dupes}")

        producers = defaultdict(list)
        consumers = defaultdict(list)
        for link in self.inputs:
            producers[link].append("<input>")
        for link in self.outputs:
            consumers[link].append("<output>")
        for c in self.couplings:
            if len(c.inputs) != 2 or len(c.outputs) != 2:
                raise NetlistError(f"node {c.node_id!r} must have two inputs and two outputs")
            for link in c.outputs:
                producers[link].append(c.node_id)
            for link in c.inputs:
                consumers[link].append(c.node_id)

        bad = [
            link
            for link in set(producers) | set(consumers)
            if len(producers[link]) != 1 or len(consumers[link]) != 1
        ]
        if bad:
            bad.sort(key=str)
            detail = ", ".join(
                f"{link!r} (producers={producers[link]}, consumers={consumers[link]})" for link in bad
            )
            raise DanglingLinkError(f"links violate single producer/consumer: {detail}", bad)


@dataclass(frozen=True)
class Column:
    perm: tuple[int, ...]
    n_active: int


@dataclass(frozen=True)
class ColumnedTopology:
    """Compiled feedforward mesh: ``L`` columns plus a final output permutation."""

    n: int
    columns: tuple[Column, ...]
    final_perm: tuple[int, ...]
    node_labels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "final_perm", tuple(int(p) for p in self.final_perm))
        if self.n < 2:
            raise ValueError("n must be at least 2")
        for ell, col in enumerate(self.columns, start=1):
            _check_perm(col.perm, self.n, f"column {ell} permutation")
            if not 1 <= col.n_active <= self.n // 2:
                raise ValueError(f"column {ell} has {col.n_active} nodes; need 1..{self.n // 2}")
        _check_perm(self.final_perm, self.n, "final permutation")
        if not self.node_labels:
            labels = {}
            k = 0
            for ell, col in enumerate(self.columns, start=1):
                for m in range(1, col.n_active + 1):
                    labels[(m, ell)] = k
                    k += 1
            object.__setattr__(self, "node_labels", labels)

    @property
    def m(self) -> int:
        """Slots per column, ``floor(n / 2)``."""
        return self.n // 2

    @property
    def depth(self) -> int:
        return len(self.columns)

    @property
    def column_sizes(self) -> tuple[int, ...]:
        return tuple(c.n_active for c in self.columns)

    @property
    def num_nodes(self) -> int:
        return sum(self.column_sizes)

    def perm_array(self, ell: int) -> np.ndarray:
        return np.asarray(self.columns[ell - 1].perm, dtype=np.intp)

    def active_mask(self) -> np.ndarray:
        """Boolean ``(M, L)`` mask of physical (non-synthetic) node slots."""
        mask = np.zeros((self.m, self.depth), dtype=bool)
        for ell, col in enumerate(self.columns):
            mask[: col.n_active, ell] = True
        return mask

    def frames(self) -> list[np.ndarray]:
        """Slot-to-input-waveguide maps ``s_0 .. s_L``.

        ``frames()[ell][i]`` is the device waveguide whose label is carried
        by slot ``i`` after column ``ell``, treating node outputs as staying
        in their input slots.  For grid meshes this is the physical row.
        """
        s = np.arange(self.n)
        out = [s]
        for col in self.columns:
            s = s[np.asarray(col.perm)]
            out.append(s)
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "depth": self.depth,
            "columns": [{"perm": list(c.perm), "n_active": c.n_active} for c in self.columns],
            "final_perm": list(self.final_perm),
            "node_labels": [
                {"m": m, "column": ell, "node": _jsonable(node)}
                for (m, ell), node in sorted(self.node_labels.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ColumnedTopology":
        labels = {(d["m"], d["column"]): d["node"] for d in data.get("node_labels", [])}
        return cls(
            n=int(data["n"]),
            columns=tuple(Column(tuple(c["perm"]), int(c["n_active"])) for c in data["columns"]),
            final_perm=tuple(data["final_perm"]),
            node_labels=labels,
        )


def _jsonable(x):
    return x if isinstance(x, (int, str)) else str(x)


def _check_perm(perm, n, what):
    if len(perm) != n or sorted(int(p) for p in perm) != list(range(n)):
        raise ValueError(f"{what} is not a bijection on 0..{n - 1}: {list(perm)}")


def optical_depth(t: ColumnedTopology) -> int:
    return t.depth


def node_count(t: ColumnedTopology) -> int:
    return t.num_nodes


def _sort_ids(ids):
    try:
        return sorted(ids)
    except TypeError:
        return sorted(ids, key=str)


def _cycle_members(candidates, successors):
    """Nodes among ``candidates`` that can reach themselves."""
    members = set()
    for start in candidates:
        stack = list(successors[start])
        seen = set()
        while stack:
            node = stack.pop()
            if node == start:
                members.add(start)
                break
            if node in seen or node not in candidates:
                continue
            seen.add(node)
            stack.extend(successors[node])
    return members


def compactify(netlist: Netlist) -> ColumnedTopology:
    """Compile a netlist into its minimal-depth column representation.

    Each node lands in column ``1 + max(column of its two producers)``, with
    device inputs counting as column 0.  Within a column, nodes are placed in
    ascending node-id order, each node's first input on the upper slot.
    Waveguides that skip the column keep their previous relative order and
    are routed to the slots above ``2 * M_ell``.

    Raises:
        DanglingLinkError: if the netlist violates the link invariants.
        CycleError: if some node is reachable from its own output.
    """
    netlist.validate()
    n = netlist.n_inputs
    by_id = {c.node_id: c for c in netlist.couplings}
    producer = {}
    for c in netlist.couplings:
        for link in c.outputs:
            producer[link] = c.node_id
    consumer_nodes = defaultdict(list)
    for c in netlist.couplings:
        for link in c.inputs:
            consumer_nodes[link].append(c.node_id)

    available = set(netlist.inputs)
    pending = {c.node_id: sum(link not in available for link in c.inputs) for c in netlist.couplings}
    ready = [nid for nid, k in pending.items() if k == 0]
    layers = []
    while ready:
        layer = _sort_ids(ready)
        layers.append(layer)
        ready = []
        for nid in layer:
            for link in by_id[nid].outputs:
                for succ in consumer_nodes[link]:
                    pending[succ] -= 1
                    if pending[succ] == 0:
                        ready.append(succ)

    visited = {nid for layer in layers for nid in layer}
    if len(visited) != len(by_id):
        stuck = set(by_id) - visited
        successors = {
            nid: [s for link in by_id[nid].outputs for s in consumer_nodes[link]] for nid in by_id
        }
        on_cycle = _cycle_members(stuck, successors)
        raise CycleError(on_cycle or stuck)

    frame = list(netlist.inputs)
    columns = []
    labels = {}
    for ell, layer in enumerate(layers, start=1):
        if len(layer) > n // 2:
            raise NetlistError(f"column {ell} would hold {len(layer)} nodes on {n} waveguides")
        position = {link: i for i, link in enumerate(frame)}
        perm = []
        new_frame = []
        used = set()
        for m, nid in enumerate(layer, start=1):
            c = by_id[nid]
            for link_in, link_out in zip(c.inputs, c.outputs):
                perm.append(position[link_in])
                used.add(position[link_in])
                new_frame.append(link_out)
            labels[(m, ell)] = nid
        for i, link in enumerate(frame):
            if i not in used:
                perm.append(i)
                new_frame.append(link)
        columns.append(Column(tuple(perm), len(layer)))
        frame = new_frame

    position = {link: i for i, link in enumerate(frame)}
    final_perm = tuple(position[link] for link in netlist.outputs)
    return ColumnedTopology(n=n, columns=tuple(columns), final_perm=final_perm, node_labels=labels)


def _from_frames(n: int, frames: Sequence[np.ndarray], sizes: Sequence[int]) -> ColumnedTopology:
    """Build a topology from per-column slot->waveguide maps (``frames[0]`` = identity)."""
    columns = []
    for ell in range(1, len(frames)):
        inv_prev = np.argsort(frames[ell - 1])
        perm = inv_prev[frames[ell]]
        columns.append(Column(tuple(int(p) for p in perm), int(sizes[ell - 1])))
    final_perm = np.argsort(frames[-1])
    return ColumnedTopology(n=n, columns=tuple(columns), final_perm=tuple(int(p) for p in final_perm))


def _grid_frame(n: int, ell: int) -> np.ndarray:
    # odd columns couple rows (0,1),(2,3)...; even columns couple (1,2),(3,4)... with row 0 wrapped to the end
    s = np.arange(n)
    return s if ell % 2 == 1 else np.roll(s, -1)


def _grid_sizes(n: int, num_columns: int, size_of) -> list[int]:
    return [size_of(ell) for ell in range(1, num_columns + 1)]


def _grid_topology(n: int, sizes: list[int]) -> ColumnedTopology:
    kept = [(ell, k) for ell, k in enumerate(sizes, start=1) if k > 0]
    # dropping an empty column leaves the two neighbouring frames adjacent; the
    # generators only drop trailing columns, so the frame sequence stays valid
    frames = [np.arange(n)] + [_grid_frame(n, ell) for ell, _ in kept]
    return _from_frames(n, frames, [k for _, k in kept])


def rectangular(n: int) -> ColumnedTopology:
    """Rectangular (Clements-style) grid on ``n`` waveguides.

    ``L = n`` columns alternating between full columns of ``M`` nodes and
    offset columns of ``M - 1`` nodes (even ``n``); for odd ``n`` every
    column holds ``M`` nodes.  Empty columns (``n = 2``) are dropped.
    """
    if n < 2:
        raise ValueError("rectangular mesh needs n >= 2")
    m = n // 2
    if n % 2 == 0:
        sizes = _grid_sizes(n, n, lambda ell: m - 1 + ell % 2)
    else:
        sizes = [m] * n
    return _grid_topology(n, sizes)


def triangular(n: int) -> ColumnedTopology:
    """Triangular (Reck-style) grid: ``2n - 3`` columns on the rectangular permutation family."""
    if n < 3:
        raise ValueError("triangular mesh needs n >= 3")
    num = 2 * n - 3
    sizes = _grid_sizes(n, num, lambda ell: math.ceil(min(ell, 2 * n - 2 - ell) / 2))
    return _grid_topology(n, sizes)


def butterfly(n: int) -> ColumnedTopology:
    """Radix-2 butterfly: stage ``ell`` couples waveguides differing in bit ``ell - 1``."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"butterfly mesh needs n to be a power of two, got {n}")
    depth = n.bit_length() - 1
    frames = [np.arange(n)]
    for ell in range(1, depth + 1):
        bit = 1 << (ell - 1)
        lows = [i for i in range(n) if not i & bit]
        frames.append(np.array([w for lo in lows for w in (lo, lo | bit)]))
    return _from_frames(n, frames, [n // 2] * depth)


def to_netlist(t: ColumnedTopology) -> Netlist:
    """Expand a columned topology back into an explicit netlist.

    Links are integers: device inputs ``1..n``, node outputs numbered from
    ``n + 1`` in creation order.  Node ids are taken from ``t.node_labels``.
    """
    frame = list(range(1, t.n + 1))
    next_link = t.n + 1
    couplings = []
    for ell, col in enumerate(t.columns, start=1):
        frame = [frame[p] for p in col.perm]
        for m in range(1, col.n_active + 1):
            a, b = frame[2 * m - 2], frame[2 * m - 1]
            outs = (next_link, next_link + 1)
            next_link += 2
            couplings.append(Coupling(t.node_labels[(m, ell)], (a, b), outs))
            frame[2 * m - 2], frame[2 * m - 1] = outs
    outputs = tuple(frame[p] for p in t.final_perm)
    return Netlist(n_inputs=t.n, couplings=tuple(couplings), outputs=outputs)


def random_netlist(n: int, n_nodes: int, rng: np.random.Generator) -> Netlist:
    """Random feedforward netlist built by repeatedly coupling two live links."""
    live = list(range(1, n + 1))
    next_link = n + 1
    couplings = []
    for k in range(n_nodes):
        i, j = rng.choice(len(live), size=2, replace=False)
        a, b = live[i], live[j]
        outs = (next_link, next_link + 1)
        next_link += 2
        couplings.append(Coupling(k, (a, b), outs))
        live[i], live[j] = outs
    order = rng.permutation(len(live))
    return Netlist(n_inputs=n, couplings=tuple(couplings), outputs=tuple(live[i] for i in order))


def cyclify(netlist: Netlist, rng: np.random.Generator) -> Netlist:
    """Rewire a netlist so that it contains a cycle while keeping the link invariants.

    Picks a node ``x`` and a node ``y`` reachable from it (possibly ``x``
    itself), then swaps one of ``x``'s input links with one of ``y``'s
    output links.
    """
    by_id = {c.node_id: c for c in netlist.couplings}
    consumers = {}
    for c in netlist.couplings:
        for link in c.inputs:
            consumers[link] = c.node_id
    ids = list(by_id)
    x = ids[rng.integers(len(ids))]
    reachable = [x]
    stack = [x]
    seen = {x}
    while stack:
        node = stack.pop()
        for link in by_id[node].outputs:
            nxt = consumers.get(link)
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                reachable.append(nxt)
                stack.append(nxt)
    y = reachable[rng.integers(len(reachable))]
    xi = int(rng.integers(2))
    yo = int(rng.integers(2))
    link_in = by_id[x].inputs[xi]
    link_out = by_id[y].outputs[yo]

    def swap(links, old, new):
        return tuple(new if link == old else link for link in links)

    new_couplings = []
    for c in netlist.couplings:
        inputs = c.inputs
        if c.node_id == x:
            inputs = tuple(link_out if k == xi else link for k, link in enumerate(c.inputs))
        elif link_out in c.inputs:
            inputs = swap(c.inputs, link_out, link_in)
        new_couplings.append(Coupling(c.node_id, inputs, c.outputs))
    outputs = swap(netlist.outputs, link_out, link_in)
    return Netlist(n_inputs=netlist.n_inputs, couplings=tuple(new_couplings), outputs=outputs,
                   inputs=netlist.inputs)
