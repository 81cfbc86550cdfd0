import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldwr.mna import MnaSystem, eval_E, eval_f, eval_jacobians
from fieldwr.netlist import parse_netlist

from .conftest import random_netlist_text


def test_benchmark_a_sizes(circuit_a):
    assert (circuit_a.n_e, circuit_a.n_L, circuit_a.n_V, circuit_a.n_m) == (3, 1, 1, 1)
    assert circuit_a.size == 5


def test_benchmark_a_E(circuit_a):
    # node order n3, n4, n2 then i_L, i_V
    expect = np.zeros((5, 5))
    expect[:3, :3] = [[1, 0, -1], [0, 0, 0], [-1, 0, 1]]
    expect[3, 3] = -5.0
    np.testing.assert_array_equal(eval_E(circuit_a, np.zeros(5)), expect)


def test_benchmark_a_f(circuit_a):
    np.testing.assert_allclose(eval_f(circuit_a, 0.0, np.zeros(5)), 0.0, atol=1e-15)
    f = eval_f(circuit_a, np.pi / 4, np.zeros(5))
    i_s = np.sin(np.pi / 2) + 5 * np.sin(5 * np.pi)
    v_s = np.sin(np.pi / 4) + np.sin(5 * np.pi)
    n3, n4 = circuit_a.node_index("n3"), circuit_a.node_index("n4")
    assert f[n3] == pytest.approx(i_s, abs=1e-12)
    assert f[n4] == pytest.approx(-i_s, abs=1e-12)
    assert f[4] == pytest.approx(-v_s, abs=1e-12)


def test_benchmark_a_linear_parts(circuit_a):
    x = np.array([0.3, -1.2, 2.0, 0.7, -0.4])
    n3, n4, n2 = (circuit_a.node_index(n) for n in ("n3", "n4", "n2"))
    f = eval_f(circuit_a, 0.0, x)
    # KCL at n2: resistor to ground, inductor n4->n2 enters, capacitor only in E
    assert f[n2] == pytest.approx(x[n2] * 1.0 - x[3])
    assert f[n4] == pytest.approx(x[3])
    assert f[n3] == pytest.approx(-x[4])
    assert f[3] == pytest.approx(x[n4] - x[n2])
    assert f[4] == pytest.approx(-x[n3])


def test_port_matrix(circuit_a, circuit_b):
    x = np.arange(1.0, 6.0)
    assert circuit_a.port_voltage(x) == pytest.approx([-x[circuit_a.node_index("n2")]])
    assert circuit_b.port_voltage(x) == pytest.approx([-x[circuit_b.node_index("n4")]])


def test_single_resistor():
    sys = MnaSystem(parse_netlist("R1 1 0 2.0"))
    assert sys.size == 1
    np.testing.assert_array_equal(sys.E(np.zeros(1)), [[0.0]])
    assert sys.f(0.0, np.array([3.0])) == pytest.approx([6.0])


def test_nonlinear_resistor_jacobian():
    sys = MnaSystem(parse_netlist("R1 1 0 1\nC1 1 0 1\n"), laws={"R1": lambda u: u**3 + u})
    assert not sys.is_linear and sys.e_mode == "frozen"
    _, df = eval_jacobians(sys, 0.0, np.array([0.5]))
    assert df[0, 0] == pytest.approx(3 * 0.5**2 + 1, rel=1e-6)


def test_nonlinear_capacitor_E():
    law = lambda u: 1.0 + u**2
    sys = MnaSystem(parse_netlist("C1 1 0 1\nR1 1 0 1\n"), laws={"C1": law})
    assert sys.E(np.array([0.0]))[0, 0] == pytest.approx(1.0)
    assert sys.E(np.array([2.0]))[0, 0] == pytest.approx(5.0)
    dEw, _ = sys.jacobians(0.0, np.array([2.0]), np.array([1.0]))
    assert dEw[0, 0] == pytest.approx(4.0, rel=1e-6)


def test_law_on_source_rejected():
    with pytest.raises(ValueError, match="not an R, C or L"):
        MnaSystem(parse_netlist(".source s 0 (1,1,0)\nV1 1 0 s\nR1 1 0 1\n"), laws={"V1": abs})


def test_linear_jacobian_matches_finite_differences(circuit_b):
    x = np.linspace(-1.0, 1.0, circuit_b.size)
    _, df = circuit_b.jacobians(0.3, x, np.zeros_like(x))
    h = 1e-6
    fd = np.column_stack(
        [(circuit_b.f(0.3, x + h * e) - circuit_b.f(0.3, x - h * e)) / (2 * h) for e in np.eye(len(x))]
    )
    np.testing.assert_allclose(df, fd, atol=1e-8)


def test_euler_matrix_is_residual_jacobian(circuit_a):
    rng = np.random.default_rng(0)
    x, x_old = rng.normal(size=5), rng.normal(size=5)
    J = circuit_a.euler_matrix(0.2, x, x_old, 0.01)
    dx = rng.normal(size=5)
    r1 = circuit_a.euler_residual(0.2, x + dx, x_old, 0.01, [0.5])
    r0 = circuit_a.euler_residual(0.2, x, x_old, 0.01, [0.5])
    np.testing.assert_allclose(r1 - r0, J @ dx, atol=1e-10)


def _linear_system(seed, n):
    text = random_netlist_text(random.Random(seed), n, kinds="RCLVI")
    return MnaSystem(parse_netlist(text))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10))
def test_capacitance_block_is_symmetric_psd(seed, n):
    sys = _linear_system(seed, n)
    block = sys.E(np.zeros(sys.size))[: sys.n_e, : sys.n_e]
    np.testing.assert_allclose(block, block.T)
    assert np.linalg.eigvalsh(block).min() >= -1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10), st.integers(0, 2**16))
def test_resistive_part_is_monotone(seed, n, draw):
    sys = _linear_system(seed, n)
    rng = np.random.default_rng(draw)
    e1, e2 = rng.normal(size=(2, sys.n_e))
    g1 = sys._AR @ sys.resistor_currents(e1)
    g2 = sys._AR @ sys.resistor_currents(e2)
    assert (e1 - e2) @ (g1 - g2) >= -1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 10), st.floats(0.0, 5.0))
def test_f_is_affine_in_state(seed, n, t):
    sys = _linear_system(seed, n)
    rng = np.random.default_rng(seed % 1000)
    x, y = rng.normal(size=(2, sys.size))
    f0 = sys.f(t, np.zeros(sys.size))
    lhs = sys.f(t, 2 * x - y) - f0
    rhs = 2 * (sys.f(t, x) - f0) - (sys.f(t, y) - f0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
