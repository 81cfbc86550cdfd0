"""Input validation helpers shared by the solvers and estimators."""

import math

import numpy as np


def check_positive(value, name):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_grid(times):
    """Return ``times`` as a strictly increasing 1-D float array."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if not np.isfinite(times).all():
        raise ValueError("time grid contains non-finite values")
    if len(times) > 1 and not (np.diff(times) > 0).all():
        raise ValueError("time grid must be strictly increasing")
    return times


def check_window(window):
    t_start, t_end = (float(v) for v in window)
    if not (math.isfinite(t_start) and math.isfinite(t_end) and t_end > t_start):
        raise ValueError(f"window must satisfy t_end > t_start, got {window!r}")
    return t_start, t_end


def check_state(x, size, name="state"):
    if x is None:
        return np.zeros(size)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (size,):
        raise ValueError(f"{name} has length {len(x)}, expected {size}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_coupling(field, circuit):
    """Ensure the field model provides one coil column per circuit port."""
    if circuit.n_m == 0:
        return
    if field is None:
        raise ValueError("circuit has field ports but no field model was given")
    if field.n_ports != circuit.n_m:
        raise ValueError(f"field model has {field.n_ports} coupled coils, circuit has {circuit.n_m} ports")
    for el in circuit.netlist.ports:
        if el.node_from == el.node_to:
            raise ValueError(f"field port {el.name!r} is shorted (both terminals on {el.node_from!r})")
