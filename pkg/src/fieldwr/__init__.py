"""Waveform relaxation for coupled eddy-current field / circuit DAEs."""

from .estimators import GaussSeidelWR, MonolithicSolver
from .field import (
    FieldModel,
    assemble_fe,
    builtin_field_model,
    equivalent_inductance,
    eval_field_residual,
    load_matrix_model,
    validate_assumptions,
)
from .mna import MnaSystem
from .monolithic import solve_monolithic
from .netlist import build_incidence, parse_netlist, serialize
from .solver import SolveOptions, Waveform, integrate_circuit, integrate_field, newton, waveform_sup_diff
from .topology import algebraic_criterion, analyze, check_assumption2c, find_cvr_path
from .wr import WrOptions, gauss_seidel_wr, iterate_history_export

__version__ = "0.1.0"

__all__ = [
    "FieldModel",
    "GaussSeidelWR",
    "MnaSystem",
    "MonolithicSolver",
    "SolveOptions",
    "Waveform",
    "WrOptions",
    "algebraic_criterion",
    "analyze",
    "assemble_fe",
    "build_incidence",
    "builtin_field_model",
    "check_assumption2c",
    "equivalent_inductance",
    "eval_field_residual",
    "find_cvr_path",
    "gauss_seidel_wr",
    "integrate_circuit",
    "integrate_field",
    "iterate_history_export",
    "load_matrix_model",
    "newton",
    "parse_netlist",
    "serialize",
    "solve_monolithic",
    "validate_assumptions",
    "waveform_sup_diff",
]
