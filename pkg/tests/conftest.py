import numpy as np
import pytest

import actionwave as aw


def on_axis(grid, values):
    """Snap requested times onto the output axis."""
    ax = grid.time
    return np.array(sorted({ax.times[ax.index_of(t)] for t in np.atleast_1d(values)}))


def stencil_store(grid, centers, extra=()):
    """Stored-slice plan: a (t-dt, t, t+dt) triplet per center, plus extras."""
    ax = grid.time
    out = set(np.atleast_1d(extra))
    for t in np.atleast_1d(centers):
        k = ax.index_of(t)
        out |= {ax.times[k - 1], ax.times[k], ax.times[k + 1]}
    return np.array(sorted(out))


def build_kernel(scenario, overrides=None, centers=(), extra=(), fan_overrides=None):
    setup, ic, grid = aw.make_scenario(scenario, overrides)
    fan = aw.scenario_fan(scenario, {**(overrides or {}), **(fan_overrides or {})})
    store = stencil_store(grid, centers, extra=extra) if len(np.atleast_1d(centers)) \
        else on_axis(grid, extra)
    fan_data = aw.integrate_fan(setup, ic, fan, grid, store_times=store)
    branches = aw.build_branch_fields(fan_data, grid)
    pfield = aw.assemble_propagator(branches, setup, ic)
    return setup, ic, grid, fan_data, pfield


# analytic reference waves: independently derived, each validated by the
# finite-difference residual operator in test_verify before use elsewhere

def free_kernel_exact(x, t, x_o=0.0, m=1.0, hbar=1.0):
    amp = np.sqrt(m / (2.0 * np.pi * hbar * t))
    return amp * np.exp(1j * (m * (x - x_o) ** 2 / (2.0 * hbar * t) - np.pi / 4.0))


def mehler_magnitude_sq(t, m=1.0, omega=1.0, hbar=1.0):
    return m * omega / (2.0 * np.pi * hbar * abs(np.sin(omega * t)))


def mehler_phase(x, t, x_o, m=1.0, omega=1.0, hbar=1.0):
    s = np.sin(omega * t)
    return (m * omega / (2.0 * s)) * ((x * x + x_o * x_o) * np.cos(omega * t)
                                      - 2.0 * x * x_o) / hbar


@pytest.fixture(scope="session")
def free_bundle():
    return build_kernel("free", centers=[0.3, 0.6], extra=[0.5, 1.0])


@pytest.fixture(scope="session")
def harmonic_bundle():
    mag_times = np.linspace(0.1, 0.9 * np.pi, 9)
    return build_kernel("harmonic", centers=[0.5, 1.5],
                        extra=list(mag_times) + [np.pi + 0.5])


@pytest.fixture(scope="session")
def linear_bundle():
    return build_kernel("linear", centers=[0.5], extra=[0.9, 1.0])


@pytest.fixture(scope="session")
def quartic_bundle():
    return build_kernel("quartic", centers=[0.3, 0.45], extra=[0.2])
