"""Estimator-style front ends for the coupled solvers.

``fit`` runs the simulation on a ``(field, circuit)`` pair and stores the
outcome in trailing-underscore attributes; ``predict`` evaluates the final
circuit trajectory at arbitrary times. Hyperparameters are plain constructor
arguments so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .monolithic import solve_monolithic
from .solver import SolveOptions, make_grid
from .wr import WrOptions, gauss_seidel_wr, iterate_history_export


class _CoupledSolver(BaseEstimator):
    def _solve_options(self, dt):
        return SolveOptions(dt=dt, newton_tol=self.newton_tol, newton_max=self.newton_max, jacobian=self.jacobian)

    def predict(self, t, probe=None):
        """Circuit state (or one node potential) at times ``t``."""
        check_is_fitted(self, "x_")
        x = self.x_(np.asarray(t, dtype=float))
        if probe is None:
            return x
        return x[..., self.circuit_.node_index(probe)]


class GaussSeidelWR(_CoupledSolver):
    """Gauss-Seidel waveform relaxation.

    Parameters
    ----------
    t_start, t_end : float
        Simulation window in seconds.
    dt : float
        Step of both subsystems unless ``dt_field``/``dt_circuit`` is set.
    wr_tol : float
        Relative sup-norm tolerance on successive port-voltage waveforms.
    k_max : int
    blowup_factor : float
        Divergence is declared once ``delta_k > blowup_factor * delta_1``.
    windows : int
        Number of sequential sub-windows.

    Attributes
    ----------
    result_ : WrResult
    status_ : WrStatus
    n_iter_ : int
    deltas_ : ndarray
    x_ : Waveform
        Circuit state of the final iterate.
    """

    def __init__(
        self,
        t_start=0.0,
        t_end=0.8,
        dt=1e-2,
        dt_field=None,
        dt_circuit=None,
        wr_tol=1e-6,
        k_max=50,
        blowup_factor=1e6,
        windows=1,
        newton_tol=1e-10,
        newton_max=20,
        jacobian="analytic",
        store="all",
    ):
        self.t_start = t_start
        self.t_end = t_end
        self.dt = dt
        self.dt_field = dt_field
        self.dt_circuit = dt_circuit
        self.wr_tol = wr_tol
        self.k_max = k_max
        self.blowup_factor = blowup_factor
        self.windows = windows
        self.newton_tol = newton_tol
        self.newton_max = newton_max
        self.jacobian = jacobian
        self.store = store

    def _options(self):
        return WrOptions(
            window=(self.t_start, self.t_end),
            wr_tol=self.wr_tol,
            k_max=self.k_max,
            blowup_factor=self.blowup_factor,
            windows=self.windows,
            field_opts=self._solve_options(self.dt_field or self.dt),
            circuit_opts=self._solve_options(self.dt_circuit or self.dt),
            store=self.store,
        )

    def fit(self, field, circuit, x0=None, a0=None):
        result = gauss_seidel_wr(field, circuit, x0, a0, self._options())
        self.circuit_ = circuit
        self.result_ = result
        self.status_ = result.status
        self.n_iter_ = result.status.k
        self.deltas_ = np.asarray(result.deltas)
        self.x_ = result.final.x
        return self

    def history(self, probe):
        check_is_fitted(self, "result_")
        return iterate_history_export(self.result_, probe)


class MonolithicSolver(_CoupledSolver):
    """Implicit Euler on the fully coupled system.

    Attributes
    ----------
    solution_ : CoupledSolution
    x_ : Waveform
    """

    def __init__(self, t_start=0.0, t_end=0.8, dt=1e-2, newton_tol=1e-10, newton_max=20, jacobian="analytic"):
        self.t_start = t_start
        self.t_end = t_end
        self.dt = dt
        self.newton_tol = newton_tol
        self.newton_max = newton_max
        self.jacobian = jacobian

    def fit(self, field, circuit, x0=None, a0=None):
        grid = make_grid(self.t_start, self.t_end, self.dt)
        self.circuit_ = circuit
        self.solution_ = solve_monolithic(field, circuit, x0, a0, grid, self._solve_options(self.dt))
        self.x_ = self.solution_.x
        return self
