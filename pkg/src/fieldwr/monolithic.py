"""Reference solution: implicit Euler on the fully coupled DAE.

The unknown of each step stacks ``(a, i_m, x, v_c)`` and the residual stacks
the field rows, the field port rows ``X^T a' - v_c``, the circuit rows and
the circuit port rows ``P^T x - v_c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import (
    Factorized,
    NonConvergenceError,
    SingularMatrixError,
    SolveOptions,
    Waveform,
    consistent_initial_values,
    fd_jacobian,
    newton,
)
from .validation import check_coupling, check_grid


@dataclass
class CoupledSolution:
    a: Waveform
    i_m: Waveform
    x: Waveform
    v_c: Waveform


class _Stack:
    def __init__(self, field_model, circuit):
        self.field = field_model
        self.circuit = circuit
        self.n_a = field_model.n_dof if circuit.n_m else 0
        self.m = circuit.n_m
        self.n_x = circuit.size
        sizes = [self.n_a, self.m, self.n_x, self.m]
        self.offsets = np.cumsum([0] + sizes)
        self.size = int(self.offsets[-1])

    def split(self, z):
        o = self.offsets
        return z[o[0] : o[1]], z[o[1] : o[2]], z[o[2] : o[3]], z[o[3] : o[4]]

    def residual(self, t, z, z_old, dt):
        a, i_m, x, v_c = self.split(z)
        a_old, _, x_old, _ = self.split(z_old)
        parts = []
        if self.m:
            da = (a - a_old) / dt
            parts.append(self.field.M @ da + self.field.Ka(a) - self.field.X @ i_m)
            parts.append(self.field.X.T @ da - v_c)
        parts.append(self.circuit.euler_residual(t, x, x_old, dt, i_m))
        if self.m:
            parts.append(self.circuit.P.T @ x - v_c)
        return np.concatenate(parts)

    def matrix(self, t, z, z_old, dt):
        a, _, x, _ = self.split(z)
        _, _, x_old, _ = self.split(z_old)
        Jc = sp.csr_matrix(self.circuit.euler_matrix(t, x, x_old, dt))
        if not self.m:
            return Jc
        F = self.field
        X = sp.csr_matrix(F.X)
        P = sp.csr_matrix(self.circuit.P)
        eye = sp.identity(self.m, format="csr")
        return sp.bmat(
            [
                [F.M / dt + F.dKa(a), -X, None, None],
                [X.T / dt, None, None, -eye],
                [None, P, Jc, None],
                [None, None, P.T, -eye],
            ],
            format="csc",
        )


def solve_monolithic(field_model, circuit, x0=None, a0=None, grid=None, opts=None):
    """Integrate the coupled field/circuit DAE as one system.

    ``grid`` defaults to ``[0, 0.8]`` with the step of ``opts``. Initial
    values are handled as in :func:`fieldwr.wr.gauss_seidel_wr`.
    """
    opts = opts or SolveOptions()
    check_coupling(field_model, circuit)
    if grid is None:
        grid = np.linspace(0.0, 0.8, int(round(0.8 / opts.dt)) + 1)
    grid = check_grid(grid)
    x0, a0, i_m0 = consistent_initial_values(field_model, circuit, x0, a0, grid[0])

    stack = _Stack(field_model, circuit)
    if not circuit.n_m:
        a0 = np.zeros(0)
    z = np.empty((len(grid), stack.size))
    z[0] = np.concatenate([a0, i_m0, x0, circuit.port_voltage(x0)])

    linear = circuit.is_linear and circuit.e_mode == "full" and (not circuit.n_m or field_model.is_linear)
    cache = {}

    def static_jacobian(t, dt):
        key = round(dt, 15)
        if key not in cache:
            cache[key] = Factorized(stack.matrix(t, z[0], z[0], dt))
        return cache[key]

    for k in range(1, len(grid)):
        t, dt = grid[k], grid[k] - grid[k - 1]
        z_old = z[k - 1]

        def residual(v, t=t, z_old=z_old, dt=dt):
            return stack.residual(t, v, z_old, dt)

        if opts.jacobian == "finite-difference":
            jac = lambda v, res=residual: fd_jacobian(res, v)
        elif linear:
            jac = lambda v, t=t, dt=dt: static_jacobian(t, dt)
        else:
            jac = lambda v, t=t, z_old=z_old, dt=dt: stack.matrix(t, v, z_old, dt)
        try:
            z[k] = newton(residual, jac, z_old, opts).x
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"monolithic step {k} (t={t:g}): {exc}", exc.x, exc.residual_norm, k) from None
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"monolithic step {k} (t={t:g}): {exc}") from None

    o = stack.offsets
    return CoupledSolution(
        a=Waveform(grid, z[:, o[0] : o[1]]),
        i_m=Waveform(grid, z[:, o[1] : o[2]]),
        x=Waveform(grid, z[:, o[2] : o[3]]),
        v_c=Waveform(grid, z[:, o[3] : o[4]]),
    )
