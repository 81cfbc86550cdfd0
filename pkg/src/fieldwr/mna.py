"""Modified nodal analysis of the circuit side.

The circuit unknown is ``x = (e, i_L, i_V)`` and the DAE reads::

    E(x) x' + f(t, x) + P i_m = 0,      v_c = P^T x

with ``E(x) = diag(A_C C(A_C^T e) A_C^T, -L(i_L), 0)``, ``P = (A_m, 0, 0)``.
The field port current ``i_m`` is counted like any other branch current
leaving the port's from-node, so a field device with a positive inductance is
passive as seen from the circuit.
"""

from __future__ import annotations

import numpy as np

from .netlist import build_incidence


class MnaSystem:
    """Evaluators for ``E(x)``, ``f(t, x)`` and ``P`` of a parsed netlist.

    Parameters
    ----------
    netlist : Netlist
    laws : dict, optional
        Nonlinear branch laws keyed by element name. For resistors the
        callable maps branch voltage to branch current, for capacitors it
        maps branch voltage to capacitance, and for inductors branch current
        to inductance. Unlisted elements use the constant netlist value.
    e_mode : {"full", "frozen"}, optional
        How ``E(x)`` enters the implicit Euler residual. ``"frozen"``
        evaluates it at the previous state (simplified Newton). Defaults to
        ``"full"`` for constant laws and ``"frozen"`` otherwise.
    """

    def __init__(self, netlist, laws=None, e_mode=None):
        self.netlist = netlist
        self.inc = build_incidence(netlist)
        self.laws = dict(laws or {})
        known = {el.name: el.kind for el in netlist.elements}
        for name in self.laws:
            if known.get(name) not in ("R", "C", "L"):
                raise ValueError(f"law registered for {name!r}, which is not an R, C or L element")

        inc = self.inc
        self.G = np.array([netlist.element(n).value for n in inc.names["R"]], dtype=float)
        self.C = np.array([netlist.element(n).value for n in inc.names["C"]], dtype=float)
        self.L = np.array([netlist.element(n).value for n in inc.names["L"]], dtype=float)
        self.q_i = [netlist.sources[netlist.element(n).value] for n in inc.names["I"]]
        self.q_v = [netlist.sources[netlist.element(n).value] for n in inc.names["V"]]

        self.n_e = len(inc.nodes)
        self.n_L = inc.A_L.shape[1]
        self.n_V = inc.A_V.shape[1]
        self.n_m = inc.A_m.shape[1]
        self.size = self.n_e + self.n_L + self.n_V

        self._AC = inc.A_C.astype(float)
        self._AR = inc.A_R.astype(float)
        self._AL = inc.A_L.astype(float)
        self._AV = inc.A_V.astype(float)
        self._AI = inc.A_I.astype(float)

        self.P = np.zeros((self.size, self.n_m))
        self.P[: self.n_e] = inc.A_m

        if e_mode is None:
            e_mode = "full" if self.is_linear else "frozen"
        if e_mode not in ("full", "frozen"):
            raise ValueError(f"e_mode must be 'full' or 'frozen', got {e_mode!r}")
        self.e_mode = e_mode

    @property
    def is_linear(self):
        return not self.laws

    def split(self, x):
        x = np.asarray(x, dtype=float)
        e = x[: self.n_e]
        i_L = x[self.n_e : self.n_e + self.n_L]
        i_V = x[self.n_e + self.n_L :]
        return e, i_L, i_V

    def node_index(self, node):
        return self.inc.row(node)

    def _branch_values(self, kind, values, args):
        names = self.inc.names[kind]
        out = values.copy()
        for j, name in enumerate(names):
            law = self.laws.get(name)
            if law is not None:
                out[j] = law(args[j])
        return out

    def capacitances(self, e):
        return self._branch_values("C", self.C, self._AC.T @ e)

    def inductances(self, i_L):
        return self._branch_values("L", self.L, i_L)

    def resistor_currents(self, e):
        u = self._AR.T @ e
        return self._branch_values("R", self.G * u, u)

    def source_currents(self, t):
        return np.array([float(q(t)) for q in self.q_i])

    def source_voltages(self, t):
        return np.array([float(q(t)) for q in self.q_v])

    def E(self, x):
        e, i_L, _ = self.split(x)
        out = np.zeros((self.size, self.size))
        out[: self.n_e, : self.n_e] = (self._AC * self.capacitances(e)) @ self._AC.T
        k = self.n_e + self.n_L
        out[self.n_e : k, self.n_e : k] = -np.diag(self.inductances(i_L))
        return out

    def f(self, t, x):
        e, i_L, i_V = self.split(x)
        kcl = self._AR @ self.resistor_currents(e) + self._AL @ i_L + self._AV @ i_V
        kcl = kcl + self._AI @ self.source_currents(t)
        return np.concatenate([kcl, self._AL.T @ e, self._AV.T @ e - self.source_voltages(t)])

    def _linear_df(self):
        n, k = self.n_e, self.n_e + self.n_L
        J = np.zeros((self.size, self.size))
        J[:n, :n] = (self._AR * self.G) @ self._AR.T
        J[:n, n:k] = self._AL
        J[:n, k:] = self._AV
        J[n:k, :n] = self._AL.T
        J[k:, :n] = self._AV.T
        return J

    def jacobians(self, t, x, w):
        """``(d(E(x) w)/dx, df/dx)`` at ``(t, x)``.

        Analytic for constant laws; central differences with step
        ``1e-6 * (1 + |x_i|)`` as soon as any nonlinear law is registered.
        """
        x = np.asarray(x, dtype=float)
        if self.is_linear:
            return np.zeros((self.size, self.size)), self._linear_df()
        w = np.asarray(w, dtype=float)
        dEw = np.zeros((self.size, self.size))
        df = np.zeros((self.size, self.size))
        for i in range(self.size):
            h = 1e-6 * (1.0 + abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            dEw[:, i] = (self.E(xp) @ w - self.E(xm) @ w) / (2 * h)
            df[:, i] = (self.f(t, xp) - self.f(t, xm)) / (2 * h)
        return dEw, df

    # implicit Euler building blocks

    def euler_residual(self, t, x, x_old, dt, i_m):
        x = np.asarray(x, dtype=float)
        E = self.E(x_old if self.e_mode == "frozen" else x)
        r = E @ (x - x_old) / dt + self.f(t, x)
        if self.n_m:
            r = r + self.P @ np.atleast_1d(i_m)
        return r

    def euler_matrix(self, t, x, x_old, dt):
        """Jacobian of :meth:`euler_residual` with respect to ``x``."""
        x = np.asarray(x, dtype=float)
        if self.e_mode == "frozen":
            _, df = self.jacobians(t, x, np.zeros(self.size))
            return self.E(x_old) / dt + df
        dEw, df = self.jacobians(t, x, x - x_old)
        return (self.E(x) + dEw) / dt + df

    def port_voltage(self, x):
        return self.P.T @ np.asarray(x, dtype=float)


def eval_E(sys, x):
    return sys.E(x)


def eval_f(sys, t, x):
    return sys.f(t, x)


def eval_jacobians(sys, t, x, w=None):
    if w is None:
        w = np.zeros(sys.size)
    return sys.jacobians(t, x, w)
