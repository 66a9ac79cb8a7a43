"""File formats: CMX complex matrices, JSON documents, CSV grids, schemas."""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .topology import Coupling, Netlist

__all__ = [
    "write_cmx",
    "read_cmx",
    "format_cmx",
    "parse_cmx",
    "dumps",
    "write_json",
    "read_json",
    "write_csv_grid",
    "load_schema",
    "validate",
    "netlist_from_dict",
    "netlist_to_dict",
    "config_hash",
]


def format_cmx(matrix) -> str:
    """``CMX rows cols`` header, then one line per row of ``re im`` pairs.

    ``%.16e`` carries 17 significant digits, enough to round-trip doubles.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("CMX holds two-dimensional matrices")
    lines = [f"CMX {a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(f"{z.real:.16e} {z.imag:.16e}" for z in row))
    return "\n".join(lines) + "\n"


def parse_cmx(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 3 or tokens[0] != "CMX":
        raise ValueError("missing 'CMX rows cols' header")
    try:
        rows, cols = int(tokens[1]), int(tokens[2])
        values = np.array([float(t) for t in tokens[3:]])
    except ValueError as exc:
        raise ValueError(f"malformed CMX data: {exc}") from None
    if rows < 0 or cols < 0 or values.size != 2 * rows * cols:
        raise ValueError(f"CMX header announces {rows}x{cols} entries but {values.size // 2} were found")
    if not np.all(np.isfinite(values)):
        raise ValueError("CMX entries must be finite")
    return (values[0::2] + 1j * values[1::2]).reshape(rows, cols)


def write_cmx(path, matrix):
    Path(path).write_text(format_cmx(matrix))


def read_cmx(path) -> np.ndarray:
    return parse_cmx(Path(path).read_text())


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_default, allow_nan=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv_grid(path, grid, row_label: str = "row", col_prefix: str = "c"):
    """Write a 2D real array with a header row and a 1-based index column."""
    grid = np.asarray(grid, dtype=float)
    header = [row_label] + [f"{col_prefix}{j + 1}" for j in range(grid.shape[1])]
    lines = [",".join(header)]
    for i, row in enumerate(grid, start=1):
        lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("meshforge").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(document, schema_name: str):
    """Raise ``jsonschema.ValidationError`` if ``document`` violates the named schema."""
    jsonschema.validate(document, load_schema(schema_name))


def netlist_from_dict(data: dict) -> Netlist:
    validate(data, "netlist")
    couplings = tuple(
        Coupling(c["id"], tuple(c["inputs"]), tuple(c["outputs"])) for c in data["couplings"]
    )
    return Netlist(
        n_inputs=int(data["n_inputs"]),
        couplings=couplings,
        outputs=tuple(data["outputs"]),
        inputs=tuple(data.get("inputs", ())),
    )


def netlist_to_dict(netlist: Netlist) -> dict:
    return {
        "n_inputs": netlist.n_inputs,
        "inputs": list(netlist.inputs),
        "outputs": list(netlist.outputs),
        "couplings": [
            {"id": c.node_id, "inputs": list(c.inputs), "outputs": list(c.outputs)}
            for c in netlist.couplings
        ],
    }


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(canonical.encode()).hexdigest()
