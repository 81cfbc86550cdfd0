import pathlib
import random

import pytest

from fieldwr.field import builtin_field_model
from fieldwr.mna import MnaSystem
from fieldwr.netlist import parse_netlist

ROOT = pathlib.Path(__file__).resolve().parent.parent
BENCHMARKS = ROOT / "benchmarks"

# acceptance results, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def benchmark_text(which):
    return (BENCHMARKS / f"circuit_{which}.net").read_text()


@pytest.fixture(scope="session")
def netlist_a():
    return parse_netlist(benchmark_text("a"))


@pytest.fixture(scope="session")
def netlist_b():
    return parse_netlist(benchmark_text("b"))


@pytest.fixture(scope="session")
def circuit_a(netlist_a):
    return MnaSystem(netlist_a)


@pytest.fixture(scope="session")
def circuit_b(netlist_b):
    return MnaSystem(netlist_b)


@pytest.fixture(scope="session")
def transformer():
    return builtin_field_model("transformer-lite")


def random_netlist_text(rng, n_nodes, n_extra=None, kinds="RCLVIM"):
    """Connected random circuit on nodes 0..n_nodes-1 with random element kinds.

    A random spanning tree guarantees connectivity; extra branches are drawn
    between random distinct node pairs.
    """
    nodes = ["0"] + [f"n{i}" for i in range(1, n_nodes)]
    edges = []
    order = nodes[:]
    rng.shuffle(order)
    for i in range(1, len(order)):
        edges.append((order[rng.randrange(i)], order[i]))
    if n_extra is None:
        n_extra = rng.randrange(0, 2 * n_nodes)
    for _ in range(n_extra):
        a, b = rng.sample(nodes, 2)
        edges.append((a, b))
    lines = [".source s 0 (1,3,0)", ".field F transformer-lite"]
    counts = {}
    for a, b in edges:
        kind = rng.choice(kinds)
        counts[kind] = counts.get(kind, 0) + 1
        name = f"{kind}{counts[kind]}"
        if kind in "RCL":
            value = f"{rng.uniform(0.1, 10.0):.6g}"
        elif kind in "VI":
            value = "s"
        else:
            value = "F"
        lines.append(f"{name} {a} {b} {value}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def py_rng():
    return random.Random(1234)
