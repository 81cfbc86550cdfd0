"""Command line interface.

Exit codes: 0 success (or convergence guaranteed), 2 criterion not
guaranteed / WR not converged / failed validation, 1 usage or solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .field import BUILTINS, FieldModelError, builtin_field_model, couple_field_models, export_matrix_model, load_matrix_model, validate_assumptions
from .io import Table
from .mna import MnaSystem
from .monolithic import solve_monolithic
from .netlist import NetlistError, parse_netlist
from .solver import SolveOptions, SolverError, make_grid
from .topology import GUARANTEED, analyze
from .wr import CONVERGED, WrOptions, gauss_seidel_wr

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_GUARANTEED = 2

DEFAULTS = {
    "window": [0.0, 0.8],
    "dt_field": 1e-2,
    "dt_circuit": 1e-2,
    "wr_tol": 1e-6,
    "k_max": 50,
    "blowup_factor": 1e6,
    "windows": 1,
    "newton_tol": 1e-10,
    "newton_max": 20,
    "probe": "n3",
    "mode": "both",
    "output": None,
    "seed": 0,
    "field": None,
}


def load_field(ref, base_dir="."):
    """A builtin name or a directory holding ``M.mtx``, ``K.mtx``, ``X.mtx``."""
    if ref in BUILTINS:
        return builtin_field_model(ref)
    path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
    if os.path.isdir(path):
        return load_matrix_model(path)
    raise FieldModelError(f"field reference {ref!r} is neither a builtin nor a model directory")


def load_config(path):
    with open(path) as fh:
        config = json.load(fh)
    unknown = set(config) - set(DEFAULTS) - {"netlist"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(DEFAULTS)
    merged.update(config)
    merged["base_dir"] = os.path.dirname(os.path.abspath(path))
    return merged


def build_problem(netlist_path, field_override=None, base_dir="."):
    if not os.path.isabs(netlist_path):
        netlist_path = os.path.join(base_dir, netlist_path)
    with open(netlist_path) as fh:
        netlist = parse_netlist(fh.read())
    circuit = MnaSystem(netlist)
    if not circuit.n_m:
        return netlist, circuit, None
    net_dir = os.path.dirname(os.path.abspath(netlist_path))
    refs = dict(netlist.fields)
    if isinstance(field_override, str):
        refs = {fid: field_override for fid in refs}
        net_dir = base_dir
    elif isinstance(field_override, dict):
        refs.update(field_override)
    models = {fid: load_field(ref, net_dir) for fid, ref in refs.items() if any(p.value == fid for p in netlist.ports)}
    field = couple_field_models(models, [(p.value, p.coil) for p in netlist.ports])
    return netlist, circuit, field


def run_simulation(config, mode):
    """Run the configured solves and return ``(table, status_line, exit_code)``."""
    netlist, circuit, field = build_problem(config["netlist"], config.get("field"), config.get("base_dir", "."))
    probe = config["probe"]
    row = circuit.node_index(probe)
    t_start, t_end = config["window"]
    f_opts = SolveOptions(dt=config["dt_field"], newton_tol=config["newton_tol"], newton_max=config["newton_max"])
    c_opts = SolveOptions(dt=config["dt_circuit"], newton_tol=config["newton_tol"], newton_max=config["newton_max"])
    wr_opts = WrOptions(
        window=(t_start, t_end),
        wr_tol=config["wr_tol"],
        k_max=config["k_max"],
        blowup_factor=config["blowup_factor"],
        windows=config["windows"],
        field_opts=f_opts,
        circuit_opts=c_opts,
    )
    grid = make_grid(t_start, t_end, config["dt_circuit"])

    jobs = {}
    with ThreadPoolExecutor(max_workers=2) as pool:
        if mode in ("mono", "both"):
            jobs["mono"] = pool.submit(solve_monolithic, field, circuit, None, None, grid, c_opts)
        if mode in ("wr", "both"):
            jobs["wr"] = pool.submit(gauss_seidel_wr, field, circuit, None, None, wr_opts)
        results = {name: job.result() for name, job in jobs.items()}

    columns = ["t"]
    data = [grid]
    if "mono" in results:
        columns.append("mon")
        data.append(results["mono"].x(grid)[:, row])
    status_line = "status: monolithic done"
    code = EXIT_OK
    if "wr" in results:
        wr = results["wr"]
        for it in wr.iterates:
            if it.k < 1:
                continue
            if not it.x.is_finite():
                break
            columns.append(str(it.k))
            data.append(it.x(grid)[:, row])
        deltas = ", ".join(f"{d:.3e}" for d in wr.deltas)
        status_line = f"status: {wr.status} deltas: [{deltas}]"
        if wr.status.kind != CONVERGED:
            code = EXIT_NOT_GUARANTEED
    return Table(columns, np.column_stack(data)), status_line, code


def cmd_analyze(args):
    with open(args.netlist) as fh:
        netlist = parse_netlist(fh.read())
    report = analyze(netlist)
    print(report.to_json(indent=2) if args.json else report.to_text())
    return EXIT_OK if report.prediction == GUARANTEED else EXIT_NOT_GUARANTEED


def cmd_simulate(args):
    config = load_config(args.config)
    overrides = {
        "probe": args.probe,
        "output": args.out,
        "wr_tol": args.wr_tol,
        "k_max": args.k_max,
        "windows": args.windows,
    }
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if args.dt is not None:
        config["dt_field"] = config["dt_circuit"] = args.dt
    if args.out is not None:
        out = args.out
    elif config["output"]:
        out = os.path.join(config["base_dir"], config["output"])
    else:
        out = None
    mode = args.mode or config["mode"]

    table, status_line, code = run_simulation(config, mode)
    text = table.to_csv()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    print(status_line, file=sys.stderr)
    return code


def cmd_validate(args):
    if args.model in BUILTINS:
        model = builtin_field_model(args.model)
    else:
        model = load_matrix_model(args.model, strict=False)
    report = validate_assumptions(model, samples=args.samples, seed=args.seed, monotone_samples=args.monotone_samples)
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_NOT_GUARANTEED


def cmd_export_model(args):
    model = builtin_field_model(args.model)
    paths = export_matrix_model(model, args.directory)
    for path in paths.values():
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="fieldwr", description="Field/circuit waveform relaxation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="predict WR convergence from the circuit topology")
    p.add_argument("netlist")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run WR and/or monolithic simulation, emit CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=("wr", "mono", "both"))
    p.add_argument("--probe")
    p.add_argument("--out")
    p.add_argument("--dt", type=float)
    p.add_argument("--wr-tol", type=float)
    p.add_argument("--k-max", type=int)
    p.add_argument("--windows", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check the structural assumptions of a field model")
    p.add_argument("model", help="builtin name or directory with M.mtx, K.mtx, X.mtx")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--monotone-samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-model", help="write a builtin field model as MatrixMarket files")
    p.add_argument("model", choices=sorted(BUILTINS))
    p.add_argument("directory")
    p.set_defaults(func=cmd_export_model)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (NetlistError, FieldModelError, SolverError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
