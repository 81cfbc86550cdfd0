"""Implicit Euler integration of the field and circuit subsystems.

Coupling signals travel between the subsystems as :class:`Waveform` objects,
piecewise linear in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import eval_field_residual
from .validation import check_grid, check_positive


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class NonConvergenceError(SolverError):
    """Newton did not reach the tolerance. Carries the last iterate."""

    def __init__(self, message, x=None, residual_norm=None, step=None):
        self.x = x
        self.residual_norm = residual_norm
        self.step = step
        super().__init__(message)


class InconsistentInitialValueError(SolverError):
    pass


class Waveform:
    """Samples on a strictly increasing time grid, linear in between.

    Evaluation outside the grid clamps to the nearest end sample.
    """

    def __init__(self, times, values):
        self.times = check_grid(times)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1) if len(values) == len(self.times) else values.reshape(1, -1)
        if values.shape[0] != len(self.times):
            raise ValueError(f"{values.shape[0]} samples for {len(self.times)} grid points")
        self.values = values

    @classmethod
    def constant(cls, times, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(times, np.tile(value, (len(np.atleast_1d(times)), 1)))

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def t_start(self):
        return self.times[0]

    @property
    def t_end(self):
        return self.times[-1]

    def __len__(self):
        return len(self.times)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.times) == 1:
            out = np.repeat(self.values, len(t), axis=0)
        else:
            idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
            t0, t1 = self.times[idx], self.times[idx + 1]
            w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)[:, None]
            out = (1 - w) * self.values[idx] + w * self.values[idx + 1]
        return out[0] if scalar else out

    def column(self, j):
        return Waveform(self.times, self.values[:, j])

    def is_finite(self):
        return bool(np.isfinite(self.values).all())

    def __repr__(self):
        return f"Waveform(n={len(self.times)}, dim={self.dim}, t=[{self.t_start:g}, {self.t_end:g}])"


def waveform_sup_diff(w1, w2):
    """Largest max-norm difference of two waveforms over the union of their grids."""
    if w1.dim != w2.dim:
        raise ValueError(f"signal dimensions differ: {w1.dim} vs {w2.dim}")
    if w1.dim == 0:
        return 0.0
    grid = np.union1d(w1.times, w2.times)
    return float(np.max(np.abs(w1(grid) - w2(grid))))


def concatenate(waveforms):
    """Join waveforms on consecutive windows; shared end points appear once."""
    times = [waveforms[0].times]
    values = [waveforms[0].values]
    for w in waveforms[1:]:
        skip = 1 if np.isclose(w.times[0], times[-1][-1]) else 0
        times.append(w.times[skip:])
        values.append(w.values[skip:])
    return Waveform(np.concatenate(times), np.vstack(values))


def make_grid(t_start, t_end, dt):
    """Uniform grid from ``t_start`` to ``t_end`` with steps no larger than ``dt``."""
    check_positive(dt, "dt")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    n = int(np.ceil((t_end - t_start) / dt - 1e-9))
    return np.linspace(t_start, t_end, n + 1)


@dataclass(frozen=True)
class SolveOptions:
    dt: float = 1e-2
    newton_tol: float = 1e-10
    newton_max: int = 20
    jacobian: str = "analytic"

    def __post_init__(self):
        check_positive(self.dt, "dt")
        check_positive(self.newton_tol, "newton_tol")
        if self.newton_max < 1:
            raise ValueError("newton_max must be at least 1")
        if self.jacobian not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")


# Newton


class Factorized:
    """Sparse LU of a square matrix."""

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None

    def solve(self, b):
        if self._lu is None:
            return np.zeros_like(b)
        return self._lu.solve(b)


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float


def newton(residual, jacobian, guess, opts=None):
    """Damped Newton iteration.

    ``jacobian(x)`` returns a matrix or an object with a ``solve`` method
    (e.g. a cached :class:`Factorized`). Stops when
    ``|r| <= newton_tol * (1 + |r0|)``, or when a full step is below
    ``newton_tol * (1 + |x|)`` so that the residual is at roundoff level.
    Each step is halved up to 8 times while the residual norm does not
    decrease.
    """
    opts = opts or SolveOptions()
    x = np.array(guess, dtype=float)
    r = residual(x)
    norm = norm0 = float(np.linalg.norm(r))
    target = opts.newton_tol * (1.0 + norm0)
    if norm <= target:
        return NewtonResult(x, 0, norm)
    for it in range(1, opts.newton_max + 1):
        J = jacobian(x)
        solver = J if hasattr(J, "solve") else Factorized(J)
        dx = solver.solve(-r)
        lam = 1.0
        x_try = x + dx
        r_try = residual(x_try)
        n_try = float(np.linalg.norm(r_try))
        halvings = 0
        while not n_try < norm and halvings < 8:
            lam *= 0.5
            halvings += 1
            x_try = x + lam * dx
            r_try = residual(x_try)
            n_try = float(np.linalg.norm(r_try))
        x, r, norm = x_try, r_try, n_try
        if not np.isfinite(norm):
            break
        if norm <= target:
            return NewtonResult(x, it, norm)
        if np.linalg.norm(dx, np.inf) <= opts.newton_tol * (1.0 + np.linalg.norm(x, np.inf)):
            return NewtonResult(x, it, norm)
    raise NonConvergenceError(
        f"Newton did not converge: residual {norm:.3e} > {target:.3e}", x=x, residual_norm=norm
    )


def fd_jacobian(residual, x, r=None):
    """Dense central-difference Jacobian, step ``1e-6 * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    if r is None:
        r = residual(x)
    J = np.empty((len(r), len(x)))
    for i in range(len(x)):
        h = 1e-6 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (residual(xp) - residual(xm)) / (2 * h)
    return J


# initial values


def _null_basis(A, rtol=1e-10):
    if A.size == 0:
        return np.eye(A.shape[1])
    u, s, vt = np.linalg.svd(A)
    rank = int(np.count_nonzero(s > rtol * max(s[0], 1e-300))) if len(s) else 0
    return vt[rank:].T


def circuit_algebraic_residual(sys, x, i_m, t):
    """Residual of the circuit equations on the left null space of ``E(x)``."""
    x = np.asarray(x, dtype=float)
    W = _null_basis(sys.E(x).T)
    r = sys.f(t, x)
    if sys.n_m:
        r = r + sys.P @ np.atleast_1d(i_m)
    return W.T @ r


def project_consistent(sys, x0, i_m0=None, t0=0.0, tol=1e-8, max_iter=20):
    """Solve the algebraic circuit rows at ``t0`` with the differential part
    of ``x0`` held fixed.

    Raises :class:`InconsistentInitialValueError` if the algebraic residual
    stays above ``tol``.
    """
    x = np.array(x0, dtype=float)
    if i_m0 is None:
        i_m0 = np.zeros(sys.n_m)
    E = sys.E(x)
    W = _null_basis(E.T)
    Q = _null_basis(E)
    if W.shape[1] == 0:
        return x

    def res(z):
        r = sys.f(t0, x + Q @ z)
        if sys.n_m:
            r = r + sys.P @ np.atleast_1d(i_m0)
        return W.T @ r

    z = np.zeros(Q.shape[1])
    r = res(z)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol:
            break
        _, df = sys.jacobians(t0, x + Q @ z, np.zeros(sys.size))
        dz = np.linalg.lstsq(W.T @ df @ Q, -r, rcond=None)[0]
        z = z + dz
        r = res(z)
    if not np.linalg.norm(r) <= tol:
        raise InconsistentInitialValueError(
            f"algebraic circuit residual {np.linalg.norm(r):.3e} exceeds {tol:g} after projection"
        )
    return x + Q @ z


def field_algebraic_residual(model, a, i_m):
    rows = model.algebraic_rows()
    r = model.Ka(a) - model.X @ np.atleast_1d(i_m)
    return r[rows]


# subsystem integrators


def integrate_field(model, v_c, a0, grid, opts=None, i_m0=None):
    """Implicit Euler on the field DAE driven by the port voltage ``v_c``.

    Returns waveforms of the vector potential ``a`` and the port currents
    ``i_m`` on ``grid``.
    """
    opts = opts or SolveOptions()
    grid = check_grid(grid)
    n, m = model.n_dof, model.n_ports
    a_hist = np.empty((len(grid), n))
    i_hist = np.empty((len(grid), m))
    a_hist[0] = a0
    i_hist[0] = model.port_current(a0) if i_m0 is None else i_m0

    cache = {}

    def static_jacobian(dt):
        key = round(dt, 15)
        if key not in cache:
            cache[key] = Factorized(_field_matrix(model, np.zeros(n), dt))
        return cache[key]

    for k in range(1, len(grid)):
        dt = grid[k] - grid[k - 1]
        a_old = a_hist[k - 1]
        vk = v_c(grid[k])

        def residual(z, a_old=a_old, dt=dt, vk=vk):
            return eval_field_residual(model, z[:n], a_old, dt, z[n:], vk)

        if opts.jacobian == "finite-difference":
            jac = lambda z, res=residual: fd_jacobian(res, z)
        elif model.is_linear:
            jac = lambda z, dt=dt: static_jacobian(dt)
        else:
            jac = lambda z, dt=dt: _field_matrix(model, z[:n], dt)

        guess = np.concatenate([a_old, i_hist[k - 1]])
        try:
            sol = newton(residual, jac, guess, opts).x
        except NonConvergenceError as exc:
            exc.step = k
            raise NonConvergenceError(f"field step {k} (t={grid[k]:g}): {exc}", exc.x, exc.residual_norm, k) from None
        a_hist[k] = sol[:n]
        i_hist[k] = sol[n:]
    return Waveform(grid, a_hist), Waveform(grid, i_hist)


def _field_matrix(model, a, dt):
    X = sp.csr_matrix(model.X)
    m = model.n_ports
    return sp.bmat(
        [[model.M / dt + model.dKa(a), -X], [X.T / dt, sp.csr_matrix((m, m))]], format="csc"
    )


def integrate_circuit(sys, i_m, x0, grid, opts=None):
    """Implicit Euler on the MNA DAE with the port currents ``i_m`` imposed.

    Returns waveforms of the circuit state ``x`` and the port voltages
    ``v_c = P^T x`` on ``grid``.
    """
    opts = opts or SolveOptions()
    grid = check_grid(grid)
    x_hist = np.empty((len(grid), sys.size))
    x_hist[0] = x0
    cache = {}

    def static_jacobian(t, dt):
        key = round(dt, 15)
        if key not in cache:
            z = np.zeros(sys.size)
            cache[key] = Factorized(sys.euler_matrix(t, z, z, dt))
        return cache[key]

    linear = sys.is_linear and sys.e_mode == "full"
    for k in range(1, len(grid)):
        t, dt = grid[k], grid[k] - grid[k - 1]
        x_old = x_hist[k - 1]
        ik = i_m(t) if sys.n_m else np.zeros(0)

        def residual(x, t=t, x_old=x_old, dt=dt, ik=ik):
            return sys.euler_residual(t, x, x_old, dt, ik)

        if opts.jacobian == "finite-difference":
            jac = lambda x, res=residual: fd_jacobian(res, x)
        elif linear:
            jac = lambda x, t=t, dt=dt: static_jacobian(t, dt)
        else:
            jac = lambda x, t=t, x_old=x_old, dt=dt: sys.euler_matrix(t, x, x_old, dt)
        try:
            x_hist[k] = newton(residual, jac, x_old, opts).x
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"circuit step {k} (t={t:g}): {exc}", exc.x, exc.residual_norm, k) from None
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"circuit step {k} (t={t:g}): {exc}") from None
    v_c = x_hist @ sys.P
    return Waveform(grid, x_hist), Waveform(grid, v_c)


def consistent_initial_values(field, circuit, x0=None, a0=None, t0=0.0, tol=1e-8):
    """Return ``(x0, a0, i_m0)`` satisfying the algebraic equations at ``t0``.

    A missing ``x0`` is projected from zero; a given one is only checked.
    """
    n_a = field.n_dof if field is not None else 0
    a0 = np.zeros(n_a) if a0 is None else np.asarray(a0, dtype=float).reshape(-1)
    if len(a0) != n_a:
        raise ValueError(f"a0 has length {len(a0)}, expected {n_a}")
    if circuit.n_m:
        i_m0 = field.port_current(a0)
        r = field_algebraic_residual(field, a0, i_m0)
        scale = 1.0 + float(np.linalg.norm(field.Ka(a0)))
        if r.size and np.linalg.norm(r) > tol * scale:
            raise InconsistentInitialValueError(
                f"field initial value violates the algebraic rows (residual {np.linalg.norm(r):.3e})"
            )
    else:
        i_m0 = np.zeros(0)
    if x0 is None:
        x0 = project_consistent(circuit, np.zeros(circuit.size), i_m0, t0, tol)
    else:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if len(x0) != circuit.size:
            raise ValueError(f"x0 has length {len(x0)}, expected {circuit.size}")
        r = circuit_algebraic_residual(circuit, x0, i_m0, t0)
        if r.size and np.linalg.norm(r) > tol:
            raise InconsistentInitialValueError(
                f"circuit initial value violates the algebraic equations (residual {np.linalg.norm(r):.3e}); "
                "use project_consistent"
            )
    return x0, a0, i_m0
