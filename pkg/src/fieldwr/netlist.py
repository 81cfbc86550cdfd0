"""Netlist front end: a small line-oriented circuit grammar and the MNA
incidence matrices built from it.

Grammar, one statement per line::

    # comment
    .source <id> <offset> (amp,omega,phase) ...
    .field  <id> <path-or-builtin>
    R1 n1 n2 <conductance>
    C1 n1 n2 <capacitance>
    L1 n1 n2 <inductance>
    V1 n1 n2 <source-id or constant>
    I1 n1 n2 <source-id or constant>
    M1 n1 n2 <field-id>[:<coil-index>]

The first listed node of an element is its ``+1`` (from) node. Node ``0`` is
ground.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

GROUND = "0"

KINDS = ("R", "C", "L", "V", "I", "M")


class NetlistError(ValueError):
    """Raised for malformed or invalid netlists."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SourceSpec:
    """Sum of sinusoids plus a constant offset.

    ``terms`` holds ``(amplitude, omega, phase)`` triples; the value at time
    ``t`` is ``offset + sum(amp * sin(omega * t + phase))``.
    """

    offset: float = 0.0
    terms: tuple = ()

    def __call__(self, t):
        value = self.offset
        for amp, omega, phase in self.terms:
            value = value + amp * np.sin(omega * t + phase)
        return value

    def derivative(self, t):
        value = 0.0 * np.asarray(t, dtype=float)
        for amp, omega, phase in self.terms:
            value = value + amp * omega * np.cos(omega * t + phase)
        return value


@dataclass(frozen=True)
class Element:
    name: str
    kind: str
    node_from: str
    node_to: str
    # float parameter for R/C/L, source id for V/I, field id for M
    value: object
    coil: int = 0

    @property
    def is_port(self):
        return self.kind == "M"


@dataclass
class Netlist:
    nodes: list
    elements: list
    sources: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    def element(self, name):
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(f"unknown element {name!r}")

    def of_kind(self, kind):
        return [el for el in self.elements if el.kind == kind]

    @property
    def ports(self):
        return self.of_kind("M")

    @property
    def non_ground_nodes(self):
        return [n for n in self.nodes if n != GROUND]


@dataclass(frozen=True)
class IncidenceSet:
    """Reduced incidence matrices per element kind.

    Rows follow ``nodes`` (ground excluded), columns follow ``names[kind]``.
    """

    nodes: tuple
    A_C: np.ndarray
    A_R: np.ndarray
    A_L: np.ndarray
    A_V: np.ndarray
    A_I: np.ndarray
    A_m: np.ndarray
    names: dict

    def __getitem__(self, kind):
        return getattr(self, "A_m" if kind == "M" else f"A_{kind}")

    def row(self, node):
        try:
            return self.nodes.index(node)
        except ValueError:
            raise KeyError(f"node {node!r} is ground or unknown") from None


_TERM_RE = re.compile(r"\(([^()]*)\)")


def _parse_float(token, lineno, what="value"):
    try:
        value = float(token)
    except ValueError:
        raise NetlistError(f"cannot parse {what} {token!r}", lineno) from None
    if not math.isfinite(value):
        raise NetlistError(f"{what} must be finite, got {token!r}", lineno)
    return value


def _parse_source(rest, lineno):
    parts = rest.split(None, 1)
    if not parts:
        raise NetlistError(".source needs an id", lineno)
    sid = parts[0]
    body = parts[1] if len(parts) > 1 else ""
    head = body.split("(", 1)[0].strip()
    offset = _parse_float(head, lineno, "source offset") if head else 0.0
    terms = []
    tail = body[len(body.split("(", 1)[0]):]
    if _TERM_RE.sub("", tail).strip():
        raise NetlistError(f"malformed source terms {tail.strip()!r}", lineno)
    for match in _TERM_RE.finditer(tail):
        fields = [s for s in match.group(1).replace(",", " ").split()]
        if len(fields) != 3:
            raise NetlistError("source term must be (amp,omega,phase)", lineno)
        terms.append(tuple(_parse_float(f, lineno, "source term") for f in fields))
    return sid, SourceSpec(offset, tuple(terms))


def parse_netlist(text):
    """Parse netlist text into a validated :class:`Netlist`."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode()
    if not isinstance(text, str):
        text = text.read()

    elements = []
    sources = {}
    fields = {}
    nodes = [GROUND]
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("."):
            directive, _, rest = line.partition(" ")
            directive = directive.lower()
            if directive == ".source":
                sid, spec = _parse_source(rest.strip(), lineno)
                if sid in sources:
                    raise NetlistError(f"duplicate source {sid!r}", lineno)
                sources[sid] = spec
            elif directive == ".field":
                parts = rest.split()
                if len(parts) != 2:
                    raise NetlistError(".field needs <id> <path-or-builtin>", lineno)
                if parts[0] in fields:
                    raise NetlistError(f"duplicate field {parts[0]!r}", lineno)
                fields[parts[0]] = parts[1]
            else:
                raise NetlistError(f"unknown directive {directive!r}", lineno)
            continue

        tokens = line.split()
        if len(tokens) != 4:
            raise NetlistError(
                f"expected '<NAME> <node+> <node-> <value>', got {len(tokens)} fields",
                lineno,
            )
        name, n_from, n_to, value = tokens
        kind = name[0].upper()
        if kind not in KINDS:
            raise NetlistError(f"unknown element kind {name[0]!r} in {name!r}", lineno)
        if name in seen:
            raise NetlistError(f"duplicate element name {name!r}", lineno)
        if n_from == n_to and kind != "M":
            raise NetlistError(f"element {name!r} connects node {n_from!r} to itself", lineno)

        coil = 0
        if kind in "RCL":
            param = _parse_float(value, lineno)
            if param <= 0:
                raise NetlistError(f"parameter of {name!r} must be positive, got {value}", lineno)
        elif kind in "VI":
            param = value
            try:
                const = float(value)
            except ValueError:
                pass
            else:
                # literal value: an implicit constant source named after the element
                param = name
                if name in sources:
                    raise NetlistError(f"duplicate source {name!r}", lineno)
                sources[name] = SourceSpec(const)
        else:
            param, _, coil_txt = value.partition(":")
            if coil_txt:
                try:
                    coil = int(coil_txt)
                except ValueError:
                    raise NetlistError(f"bad coil index in {value!r}", lineno) from None
                if coil < 0:
                    raise NetlistError(f"bad coil index in {value!r}", lineno)

        seen[name] = lineno
        for node in (n_from, n_to):
            if node not in nodes:
                nodes.append(node)
        elements.append(Element(name, kind, n_from, n_to, param, coil))

    if not elements:
        raise NetlistError("empty netlist")

    netlist = Netlist(nodes, elements, sources, fields)
    for el in elements:
        lineno = seen[el.name]
        if el.kind in "VI" and el.value not in sources:
            raise NetlistError(f"{el.name!r} references undeclared source {el.value!r}", lineno)
        if el.kind == "M" and el.value not in fields:
            raise NetlistError(f"{el.name!r} references undeclared field {el.value!r}", lineno)
    _check_connected(netlist)
    return netlist


def _check_connected(netlist):
    adjacency = {n: set() for n in netlist.nodes}
    for el in netlist.elements:
        adjacency[el.node_from].add(el.node_to)
        adjacency[el.node_to].add(el.node_from)
    if GROUND not in adjacency or len(adjacency[GROUND]) == 0:
        raise NetlistError("ground node '0' is not connected to any element")
    reached = {GROUND}
    queue = deque([GROUND])
    while queue:
        for nxt in adjacency[queue.popleft()]:
            if nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    missing = [n for n in netlist.nodes if n not in reached]
    if missing:
        raise NetlistError(f"nodes not connected to ground: {', '.join(missing)}")


def _format_float(value):
    return repr(float(value))


def serialize(netlist):
    """Emit netlist text that :func:`parse_netlist` maps back to ``netlist``."""
    lines = []
    for sid, spec in netlist.sources.items():
        terms = " ".join(
            f"({_format_float(a)},{_format_float(w)},{_format_float(p)})" for a, w, p in spec.terms
        )
        lines.append(f".source {sid} {_format_float(spec.offset)} {terms}".rstrip())
    for fid, ref in netlist.fields.items():
        lines.append(f".field {fid} {ref}")
    for el in netlist.elements:
        if el.kind in "RCL":
            value = _format_float(el.value)
        elif el.kind == "M":
            value = f"{el.value}:{el.coil}" if el.coil else str(el.value)
        else:
            value = str(el.value)
        lines.append(f"{el.name} {el.node_from} {el.node_to} {value}")
    return "\n".join(lines) + "\n"


def build_incidence(netlist):
    """Build the reduced incidence matrices of ``netlist``.

    Rows are the non-ground nodes in order of first appearance.
    """
    nodes = tuple(netlist.non_ground_nodes)
    index = {n: i for i, n in enumerate(nodes)}
    mats = {}
    names = {}
    for kind in KINDS:
        group = netlist.of_kind(kind)
        A = np.zeros((len(nodes), len(group)), dtype=int)
        for j, el in enumerate(group):
            if el.node_from != GROUND:
                A[index[el.node_from], j] += 1
            if el.node_to != GROUND:
                A[index[el.node_to], j] -= 1
        mats[kind] = A
        names[kind] = tuple(el.name for el in group)
    return IncidenceSet(
        nodes=nodes,
        A_C=mats["C"],
        A_R=mats["R"],
        A_L=mats["L"],
        A_V=mats["V"],
        A_I=mats["I"],
        A_m=mats["M"],
        names=names,
    )


def read_netlist(path):
    with open(path) as fh:
        return parse_netlist(fh.read())
