"""Static convergence analysis of field/circuit couplings.

A field port whose terminals are joined by a path made only of capacitors,
voltage sources and resistors (a CVR path) cannot feed the derivative of its
current back into its own voltage. If every port has such a path, Gauss-Seidel
waveform relaxation is guaranteed to converge.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .netlist import build_incidence

GUARANTEED = "GuaranteedConvergent"
NOT_GUARANTEED = "NotGuaranteed"

CVR_KINDS = frozenset("CVR")

RANK_RTOL = 1e-10


def matrix_rank(A, rtol=RANK_RTOL):
    """Numerical rank with a tolerance relative to the largest singular value."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def find_cvr_path(netlist, port):
    """Shortest CVR path (in branch count) between the terminals of ``port``.

    Returns the node sequence from the port's from-node to its to-node, or
    ``None`` if the terminals are not joined by C, V and R branches alone.
    """
    el = netlist.element(port)
    if not el.is_port:
        raise ValueError(f"{port!r} is not a field port")
    start, goal = el.node_from, el.node_to
    if start == goal:
        return []

    adjacency = {}
    for other in netlist.elements:
        if other.kind in CVR_KINDS:
            adjacency.setdefault(other.node_from, []).append(other.node_to)
            adjacency.setdefault(other.node_to, []).append(other.node_from)

    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            path = [node]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for nxt in adjacency.get(node, ()):
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    return None


def algebraic_criterion(inc):
    """True iff every column of ``A_m`` lies in the span of ``(A_C A_V A_R)``."""
    if inc.A_m.shape[1] == 0:
        return True
    base = np.hstack([inc.A_C, inc.A_V, inc.A_R])
    return matrix_rank(base) == matrix_rank(np.hstack([base, inc.A_m]))


def check_assumption2c(inc):
    """Return ``(A_V full column rank, (A_C A_V A_R A_L) full row rank)``.

    The first flag fails on loops of voltage sources, the second on cutsets
    of current sources (and field ports).
    """
    v_ok = matrix_rank(inc.A_V) == inc.A_V.shape[1]
    stacked = np.hstack([inc.A_C, inc.A_V, inc.A_R, inc.A_L])
    row_ok = matrix_rank(stacked) == stacked.shape[0]
    return v_ok, row_ok


@dataclass(frozen=True)
class PortReport:
    name: str
    cvr_path: list | None

    @property
    def has_path(self):
        return self.cvr_path is not None


@dataclass(frozen=True)
class TopologyReport:
    ports: tuple
    assumption2c: tuple
    algebraic_criterion: bool

    @property
    def prediction(self):
        if all(p.has_path for p in self.ports):
            return GUARANTEED
        return NOT_GUARANTEED

    @property
    def criteria_agree(self):
        return (self.prediction == GUARANTEED) == self.algebraic_criterion

    def to_dict(self):
        return {
            "ports": [p.name for p in self.ports],
            "cvr_paths": {p.name: p.cvr_path for p in self.ports},
            "prediction": self.prediction,
            "assumption2c": {
                "voltage_sources_full_column_rank": bool(self.assumption2c[0]),
                "cvrl_full_row_rank": bool(self.assumption2c[1]),
            },
            "algebraic_criterion": bool(self.algebraic_criterion),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_text(self):
        lines = ["field ports:"]
        if not self.ports:
            lines.append("  (none)")
        for p in self.ports:
            if p.cvr_path is None:
                lines.append(f"  {p.name}: no parallel CVR path")
            elif not p.cvr_path:
                lines.append(f"  {p.name}: terminals coincide (trivial path)")
            else:
                lines.append(f"  {p.name}: parallel CVR path {' - '.join(p.cvr_path)}")
        v_ok, row_ok = self.assumption2c
        lines.append(f"no voltage-source loops (A_V full column rank): {_yes(v_ok)}")
        lines.append(f"no current-source cutsets (A_CVRL full row rank): {_yes(row_ok)}")
        lines.append(f"algebraic criterion (A_m in span of A_CVR): {_yes(self.algebraic_criterion)}")
        if not self.criteria_agree:
            lines.append("WARNING: graph and algebraic criteria disagree")
        if self.prediction == GUARANTEED:
            lines.append("prediction: GuaranteedConvergent (WR convergence is guaranteed)")
        else:
            lines.append(
                "prediction: NotGuaranteed (the sufficient criterion fails; "
                "WR may still converge or diverge)"
            )
        return "\n".join(lines)


def _yes(flag):
    return "yes" if flag else "no"


def analyze(netlist):
    inc = build_incidence(netlist)
    ports = tuple(PortReport(el.name, find_cvr_path(netlist, el.name)) for el in netlist.ports)
    return TopologyReport(
        ports=ports,
        assumption2c=check_assumption2c(inc),
        algebraic_criterion=algebraic_criterion(inc),
    )
