"""Command-line interface.

Exit codes: 0 success, 1 usage or parse error, 2 domain error (cycle,
non-unitary target, non-nullifiable node, calibration failure), 3 internal
error.  ``MESHFORGE_LOG`` sets the log level (e.g. ``DEBUG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .calibration import flash, parallel_calibrate
from .decompose import decompose_rectangular, haar_unitary
from .errors import CycleError, DanglingLinkError, MeshforgeError, NonNullifiableError, NonUnitaryError
from .hardware import ErrorModel, PhysicalMesh
from .io import (
    config_hash,
    dumps,
    netlist_from_dict,
    read_cmx,
    read_json,
    validate,
    write_cmx,
    write_csv_grid,
    write_json,
)
from .mesh import DIFFERENTIAL, STANDARD, TDC, MeshParams, mesh_matrix
from .metrics import fidelity
from .nullification import nullification_set
from .presets import ARCHITECTURES, PRESETS, preset_params, random_phase_params, reversal_symmetry, speedup_row
from .program import align_output_phases, parallel_nullify
from .topology import ColumnedTopology, compactify, node_count, optical_depth

log = logging.getLogger("meshforge")

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_INTERNAL = 0, 1, 2, 3
VARIANTS = {"standard": STANDARD, "differential": DIFFERENTIAL, "tdc": TDC}
DEFAULTS = {"architecture": "rectangular", "n": 8, "seed": 0, "mode": "closed-form", "out": "."}
TOOL = {"name": "meshforge", "version": __version__}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=("closed-form", "sweep"), help="nulling mode")
    common.add_argument("--arch", help="rectangular | triangular | butterfly | netlist:<path>")
    common.add_argument("--n", type=int, help="number of waveguides")

    parser = _Parser(prog="meshforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"meshforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", parents=[common], help="compactify a netlist into columns")
    p.add_argument("netlist", nargs="?", help="netlist JSON (default: generate --arch)")
    p = sub.add_parser("decompose", parents=[common], help="rectangular-mesh settings for a unitary")
    p.add_argument("target", help="target matrix (.cmx)")
    p = sub.add_parser("nullset", parents=[common], help="nullification set of given settings")
    p.add_argument("params", nargs="?", help="params JSON (default: --preset)")
    p.add_argument("--preset", choices=PRESETS, help="canned settings")
    sub.add_parser("program", parents=[common], help="program a simulated chip by parallel nulling")
    sub.add_parser("calibrate", parents=[common], help="calibrate a simulated chip column by column")
    p = sub.add_parser("random", parents=[common], help="random target matrix or settings")
    p.add_argument("--kind", choices=("haar", "phase-random"), default="haar")
    sub.add_parser("speedup", parents=[common], help="node count versus programming steps")
    return parser


def _effective_config(args) -> dict:
    config = dict(DEFAULTS)
    if args.config:
        loaded = read_json(args.config)
        validate(loaded, "config")
        config.update(loaded)
    for key, flag in (("seed", "seed"), ("out", "out"), ("mode", "mode"), ("architecture", "arch"), ("n", "n")):
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    validate(config, "config")
    return config


def _topology(config) -> ColumnedTopology:
    arch = config["architecture"]
    if arch.startswith("netlist:"):
        return compactify(netlist_from_dict(read_json(arch.split(":", 1)[1])))
    if arch not in ARCHITECTURES:
        raise UsageError(f"unknown architecture {arch!r}")
    return ARCHITECTURES[arch](config["n"])


def _outdir(config) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stamp(doc: dict, config: dict) -> dict:
    doc = dict(doc)
    doc["tool"] = TOOL
    doc["config"] = config
    doc["config_sha256"] = config_hash(config)
    return doc


def _load_params(path) -> tuple[MeshParams, dict]:
    data = read_json(path)
    validate(data, "params")
    return MeshParams.from_dict(data), data


def _target(config, topo, rng):
    """Target settings: from file, a decomposed Haar unitary, or random phases."""
    target = config.get("target")
    if target is None:
        target = "haar" if config["architecture"] == "rectangular" else "phase-random"
    if target == "haar":
        if config["architecture"] != "rectangular":
            raise UsageError("haar targets need the rectangular architecture")
        return decompose_rectangular(haar_unitary(topo.n, rng), topo)
    if target == "phase-random":
        return random_phase_params(topo, rng)
    if target.endswith(".cmx"):
        return decompose_rectangular(read_cmx(target), topo)
    params, _ = _load_params(target)
    return params


def cmd_compile(args, config):
    if args.netlist:
        data = read_json(args.netlist)
        topo = compactify(netlist_from_dict(data))
    else:
        topo = _topology(config)
    doc = topo.to_dict()
    doc["num_nodes"] = node_count(topo)
    doc["column_sizes"] = list(topo.column_sizes)
    doc["tool"] = TOOL
    validate(doc, "topology")
    write_json(_outdir(config) / "topology.json", doc)
    print(json.dumps({"depth": optical_depth(topo), "nodes": node_count(topo),
                      "column_sizes": list(topo.column_sizes)}))
    return EXIT_OK


def cmd_decompose(args, config):
    u = read_cmx(args.target)
    topo = ARCHITECTURES["rectangular"](u.shape[0])
    params = decompose_rectangular(u, topo)
    err = float(np.linalg.norm(mesh_matrix(topo, params) - u))
    doc = params.to_dict()
    doc.update(architecture="rectangular", n=topo.n, rebuild_error=err, tool=TOOL)
    validate(doc, "params")
    write_json(_outdir(config) / "params.json", doc)
    print(f"rebuild error (Frobenius): {err:.3e}")
    return EXIT_OK


def cmd_nullset(args, config):
    if args.params:
        params, data = _load_params(args.params)
        arch = data.get("architecture", config["architecture"])
        topo = _topology(dict(config, architecture=arch, n=len(params.gamma)))
        preset = None
    else:
        if args.preset is None:
            raise UsageError("nullset needs a params file or --preset")
        topo = _topology(config)
        preset = args.preset
        params = preset_params(preset, topo, np.random.default_rng(config["seed"]))
    params.check(topo)
    nset = nullification_set(topo, params)
    out = _outdir(config)
    write_cmx(out / "nullset.cmx", nset.vectors)
    write_csv_grid(out / "nullset_power.csv", nset.powers(), row_label="column", col_prefix="mode")
    summary = _stamp({"n": topo.n, "depth": topo.depth, "identity_error": nset.identity_error(),
                      "preset": preset, "symmetry": reversal_symmetry(nset.powers())}, config)
    validate(summary, "nullset")
    write_json(out / "nullset.json", summary)
    print(f"{topo.depth} vectors, max |propagate(w, ell) - o| = {summary['identity_error']:.3e}")
    return EXIT_OK


def _physical(config, topo, params=None):
    em = ErrorModel.from_dict(config.get("error_model", {}))
    variant = VARIANTS[config.get("variant", "standard")]
    seed = config["seed"]
    if config.get("initial", "random") == "programmed" and params is not None:
        chip = PhysicalMesh.from_params(topo, params, variant=variant, error_model=em, seed=seed)
    else:
        chip = PhysicalMesh.randomized(topo, seed=seed + 1, variant=variant, error_model=em)
    if em.drift_sigma > 0:
        chip.inject_drift(em.drift_sigma, seed + 2)
    return chip


def cmd_program(args, config):
    topo = _topology(config)
    params = _target(config, topo, np.random.default_rng(config["seed"]))
    params.check(topo)
    chip = _physical(config, topo, params)
    nset = nullification_set(topo, params)
    report = parallel_nullify(chip, nset, config["mode"], strict=False)
    target = mesh_matrix(topo, params)
    align_output_phases(chip, target)
    doc = report.to_dict()
    doc.update(nodes=node_count(topo), depth=topo.depth,
               fidelity_after_output_alignment=fidelity(target, chip.matrix()))
    doc["error"] = None
    status = EXIT_OK
    if report.flagged:
        doc["error"] = {"type": NonNullifiableError.__name__, "flagged": [list(f) for f in report.flagged]}
        status = EXIT_DOMAIN
    doc = _stamp(doc, config)
    validate(doc, "report")
    write_json(_outdir(config) / "report.json", doc)
    print(f"fidelity {report.fidelity_before:.12f} -> {report.fidelity_after:.12f} "
          f"using {report.inputs_consumed} inputs")
    if status:
        print(f"NonNullifiableError: nodes (m, column) {report.flagged} not nulled", file=sys.stderr)
    return status


def cmd_calibrate(args, config):
    topo = _topology(config)
    cal = config.get("calibration", {})
    chip = PhysicalMesh.randomized(topo, seed=config["seed"] + 1, error_model=ErrorModel())
    chip.install_voltage_curves(config["seed"] + 3, theta_span=cal.get("theta_span", np.pi + 0.5),
                                phi_span=cal.get("phi_span", 2 * np.pi + 0.5), v_max=cal.get("v_max", 5.0))
    model = parallel_calibrate(chip, samples=cal.get("samples", 256))
    coeff_err = max(
        float(np.max(np.abs(np.subtract(model.coeffs[k], c.coeffs)) / np.abs(c.coeffs)))
        for k, c in chip.curves.items()
    )
    params = _target(config, topo, np.random.default_rng(config["seed"]))
    flash(chip, model, params)
    fid = fidelity(mesh_matrix(topo, params), chip.matrix())
    doc = _stamp({"model": model.to_dict(),
                  "verification": {"flash_fidelity": fid, "max_relative_coefficient_error": coeff_err}}, config)
    validate(doc, "calibration")
    write_json(_outdir(config) / "calibration.json", doc)
    print(f"calibrated {len(model.coeffs)} shifters; flash fidelity {fid:.12f}")
    return EXIT_OK


def cmd_random(args, config):
    rng = np.random.default_rng(config["seed"])
    n = config["n"]
    out = _outdir(config)
    if args.kind == "haar":
        path = out / f"haar{n}.cmx"
        write_cmx(path, haar_unitary(n, rng))
    else:
        topo = _topology(config)
        doc = random_phase_params(topo, rng).to_dict()
        doc.update(architecture=config["architecture"], n=n, tool=TOOL)
        path = out / f"phase_random{n}.json"
        write_json(path, doc)
    print(path)
    return EXIT_OK


def cmd_speedup(args, config):
    archs = [args.arch] if args.arch else list(ARCHITECTURES)
    rows = []
    for arch in archs:
        nodes, depth, ratio = speedup_row(arch, config["n"])
        rows.append({"architecture": arch, "n": config["n"], "nodes": nodes, "steps": depth, "speedup": ratio})
        print(f"{arch:<12} N={config['n']:<4} nodes={nodes:<6} steps={depth:<5} speedup={ratio:g}")
    if args.out:
        write_json(_outdir(config) / "speedup.json", {"rows": rows, "tool": TOOL})
    return EXIT_OK


COMMANDS = {
    "compile": cmd_compile,
    "decompose": cmd_decompose,
    "nullset": cmd_nullset,
    "program": cmd_program,
    "calibrate": cmd_calibrate,
    "random": cmd_random,
    "speedup": cmd_speedup,
}


def _error_doc(exc) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, CycleError):
        doc["nodes"] = exc.nodes
    elif isinstance(exc, DanglingLinkError):
        doc["links"] = exc.links
    elif isinstance(exc, NonUnitaryError):
        doc["deviation"] = exc.deviation
    return doc


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MESHFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        config = _effective_config(args)
        return COMMANDS[args.command](args, config)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except MeshforgeError as exc:
        sys.stderr.write(dumps(_error_doc(exc)))
        return EXIT_DOMAIN
    except (UsageError, jsonschema.ValidationError, json.JSONDecodeError, OSError, ValueError, KeyError) as exc:
        message = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        sys.stderr.write(dumps({"error": type(exc).__name__, "message": message}))
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        sys.stderr.write(dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
