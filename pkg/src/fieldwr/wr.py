"""Gauss-Seidel waveform relaxation between field and circuit.

Iteration ``k`` first solves the field with the previous port voltage
``v_c^{k-1}``, yielding ``i_m^k``, then the circuit driven by ``i_m^k``,
yielding ``x^k`` and ``v_c^k``. The initial guess ``v_c^0`` is the initial
port voltage held constant over the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .io import Table
from .solver import (
    NonConvergenceError,
    SolveOptions,
    Waveform,
    concatenate,
    consistent_initial_values,
    integrate_circuit,
    integrate_field,
    make_grid,
    waveform_sup_diff,
)
from .validation import check_coupling, check_positive, check_window

CONVERGED = "Converged"
DIVERGED = "Diverged"
MAX_ITERATIONS = "MaxIterations"


class WrStatus(NamedTuple):
    kind: str
    k: int

    def __str__(self):
        if self.kind == MAX_ITERATIONS:
            return MAX_ITERATIONS
        return f"{self.kind}({self.k})"


@dataclass(frozen=True)
class WrOptions:
    window: tuple = (0.0, 0.8)
    wr_tol: float = 1e-6
    k_max: int = 50
    blowup_factor: float = 1e6
    windows: int = 1
    field_opts: SolveOptions = SolveOptions()
    circuit_opts: SolveOptions = SolveOptions()
    store: str = "all"

    def __post_init__(self):
        check_window(self.window)
        check_positive(self.wr_tol, "wr_tol")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if not self.blowup_factor > 1:
            raise ValueError("blowup_factor must exceed 1")
        if self.windows < 1:
            raise ValueError("windows must be at least 1")
        if self.store not in ("all", "last"):
            raise ValueError("store must be 'all' or 'last'")


@dataclass
class Iterate:
    k: int
    a: Waveform
    i_m: Waveform
    x: Waveform
    v_c: Waveform


@dataclass
class WindowResult:
    window: tuple
    status: WrStatus
    iterates: list
    deltas: list


@dataclass
class WrResult:
    status: WrStatus
    iterates: list
    deltas: list
    windows: list = field(default_factory=list)
    circuit: object = None

    @property
    def n_iter(self):
        return self.status.k

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def converged(self):
        return self.status.kind == CONVERGED


def _constant_iterate(k, grid_f, grid_c, a0, i_m0, x0, v_c0):
    return Iterate(
        k,
        Waveform.constant(grid_f, a0),
        Waveform.constant(grid_f, i_m0),
        Waveform.constant(grid_c, x0),
        Waveform.constant(grid_c, v_c0),
    )


def _run_window(field_model, circuit, x0, a0, i_m0, window, opts):
    grid_f = make_grid(*window, opts.field_opts.dt)
    grid_c = make_grid(*window, opts.circuit_opts.dt)
    v_c0 = circuit.port_voltage(x0)
    iterates = [_constant_iterate(0, grid_f, grid_c, a0, i_m0, x0, v_c0)]
    deltas = []
    previous = iterates[0]
    status = WrStatus(MAX_ITERATIONS, opts.k_max)
    for k in range(1, opts.k_max + 1):
        try:
            if circuit.n_m:
                a, i_m = integrate_field(field_model, previous.v_c, a0, grid_f, opts.field_opts, i_m0)
            else:
                a = Waveform(grid_f, np.zeros((len(grid_f), len(a0))))
                i_m = Waveform(grid_f, np.zeros((len(grid_f), 0)))
            x, v_c = integrate_circuit(circuit, i_m, x0, grid_c, opts.circuit_opts)
        except NonConvergenceError as exc:
            # overflow of a diverging iteration ends the run cleanly
            if k > 1 and exc.x is not None and not np.isfinite(exc.x).all():
                status = WrStatus(DIVERGED, k)
                break
            raise NonConvergenceError(f"WR iteration {k}: {exc}", exc.x, exc.residual_norm, exc.step) from None
        current = Iterate(k, a, i_m, x, v_c)
        finite = all(w.is_finite() for w in (a, i_m, x, v_c))
        delta = waveform_sup_diff(v_c, previous.v_c) if finite else float("inf")
        deltas.append(delta)
        iterates.append(current)
        if opts.store == "last" and len(iterates) > 2:
            del iterates[1:-2]
        if not finite:
            status = WrStatus(DIVERGED, k)
            break
        scale = 1.0 + (float(np.max(np.abs(v_c.values))) if v_c.dim else 0.0)
        if delta <= opts.wr_tol * scale:
            status = WrStatus(CONVERGED, k)
            break
        if k >= 2 and delta > opts.blowup_factor * deltas[0]:
            status = WrStatus(DIVERGED, k)
            break
        previous = current
    return WindowResult(window, status, iterates, deltas)


def gauss_seidel_wr(field_model, circuit, x0=None, a0=None, opts=None):
    """Run Gauss-Seidel waveform relaxation on the coupled system.

    Parameters
    ----------
    field_model : FieldModel or None
        ``None`` is allowed when the circuit has no field ports.
    circuit : MnaSystem
    x0, a0 : array, optional
        Initial circuit and field states. A missing ``x0`` is projected onto
        the algebraic constraints; a given one must already satisfy them.
    opts : WrOptions

    Returns
    -------
    WrResult
        With several sub-windows, iterate ``k`` is the concatenation of each
        window's iterate ``k`` (a window that stopped earlier contributes its
        last iterate) and ``deltas[k-1]`` is the largest ``delta_k`` over the
        windows.
    """
    opts = opts or WrOptions()
    check_coupling(field_model, circuit)
    t_start, t_end = check_window(opts.window)
    x0, a0, i_m0 = consistent_initial_values(field_model, circuit, x0, a0, t_start)

    edges = np.linspace(t_start, t_end, opts.windows + 1)
    results = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        res = _run_window(field_model, circuit, x0, a0, i_m0, (lo, hi), opts)
        results.append(res)
        if res.status.kind != CONVERGED:
            break
        last = res.iterates[-1]
        x0, a0, i_m0 = last.x.values[-1], last.a.values[-1], last.i_m.values[-1]

    if len(results) == 1:
        only = results[0]
        return WrResult(only.status, only.iterates, only.deltas, results, circuit)

    failed = [r for r in results if r.status.kind != CONVERGED]
    n_iter = max(r.status.k for r in results)
    status = failed[0].status if failed else WrStatus(CONVERGED, n_iter)
    if opts.store == "last":
        iterates = [_join([r.iterates[-1] for r in results], n_iter)]
    else:
        iterates = [_join([r.iterates[min(k, len(r.iterates) - 1)] for r in results], k) for k in range(n_iter + 1)]
    deltas = [max((r.deltas[k] if k < len(r.deltas) else 0.0) for r in results) for k in range(n_iter)]
    return WrResult(status, iterates, deltas, results, circuit)


def _join(parts, k):
    return Iterate(
        k,
        concatenate([p.a for p in parts]),
        concatenate([p.i_m for p in parts]),
        concatenate([p.x for p in parts]),
        concatenate([p.v_c for p in parts]),
    )


def iterate_history_export(result, probe, circuit=None):
    """Probe-node potential of every stored iterate.

    Columns are ``t`` followed by one column per iterate ``k >= 1``; a
    result without iterations yields ``t`` and the initial guess ``0``.
    """
    circuit = circuit if circuit is not None else result.circuit
    row = circuit.node_index(probe)
    stored = [it for it in result.iterates if it.k >= 1] or result.iterates[:1]
    times = stored[-1].x.times
    columns = ["t"] + [str(it.k) for it in stored]
    data = np.column_stack([times] + [it.x(times)[:, row] for it in stored])
    return Table(columns, data)
