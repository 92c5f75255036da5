import numpy as np
import pytest

import actionwave as aw
from actionwave.propagator import CalibrationError

from conftest import build_kernel, free_kernel_exact, mehler_magnitude_sq, on_axis


def test_calibration_values():
    setup, ic, _ = aw.make_scenario("free")
    rho_o = aw.calibrate_rho_o(setup, ic)
    assert rho_o == pytest.approx(1.0 / (2 * np.pi * 1e-3))
    assert rho_o == pytest.approx(159.15494309189535)
    setup_p, ic_p, _ = aw.make_scenario("free", {"p_o": 1.0})
    assert aw.calibrate_rho_o(setup_p, ic_p) == pytest.approx(1.0 / (2 * np.pi))


def test_calibration_2d_product():
    setup2 = aw.PhysicalSetup(dimension=2, mass=(1.0, 3.0), hbar=1.0,
                              potential=aw.PotentialSpec("free"))
    ic = aw.InitialCondition("position", 0.0, 1e-3)
    rho = aw.calibrate_rho_o(setup2, ic)
    per_axis = lambda m: m / (2 * np.pi * 1e-3)
    assert rho == pytest.approx(per_axis(1.0) * per_axis(3.0))


def test_unresolved_auto_raises():
    setup, ic, _ = aw.make_scenario("free")
    with pytest.raises(CalibrationError):
        aw.resolve_rho_o(setup, ic, allow_auto=False)


def test_explicit_rho_honored(free_bundle):
    setup, ic, grid, fan, _ = free_bundle
    branches = aw.build_branch_fields(fan, grid)
    pf = aw.assemble_propagator(branches, setup, ic, rho_o=2.0)
    assert pf.normalization["rho_o"] == 2.0
    k = pf.slice_index(on_axis(grid, [0.5])[0])
    t = pf.times[k]
    sel = pf.mask[k]
    assert np.allclose(np.abs(pf.psi[k][sel]) ** 2, 2.0 * ic.epsilon / t, rtol=1e-9)


def test_free_kernel_magnitude(free_bundle):
    _, _, grid, _, pf = free_bundle
    k = pf.slice_index(on_axis(grid, [1.0])[0])
    sel = pf.mask[k]
    assert np.allclose(np.abs(pf.psi[k][sel]) ** 2, 1.0 / (2 * np.pi), rtol=1e-10)


def test_free_kernel_matches_analytic(free_bundle):
    _, ic, grid, _, pf = free_bundle
    k = pf.slice_index(on_axis(grid, [1.0])[0])
    t = pf.times[k]
    sel = pf.mask[k] & (np.abs(pf.x) <= 2.0)
    ref = free_kernel_exact(pf.x[sel], t)
    l2, linf, _ = aw.compare_waves(ref, pf.psi[k][sel])
    assert linf <= 1e-3          # acceptance bound
    assert linf <= 1e-6          # measured construction floor


def test_free_kernel_epsilon_extrapolation():
    fields, eps_values = [], [4e-3, 2e-3, 1e-3]
    for eps in eps_values:
        _, _, grid, _, pf = build_kernel("free", {"epsilon": eps}, extra=[1.0])
        k = pf.slice_index(on_axis(grid, [1.0])[0])
        fields.append(pf.psi[k])
        x, t, mask = pf.x, pf.times[k], pf.mask[k]
    ext = aw.richardson_extrapolate(fields, eps_values)
    sel = mask & (np.abs(x) <= 2.0) & np.isfinite(ext)
    _, linf, _ = aw.compare_waves(free_kernel_exact(x[sel], t), ext[sel])
    assert linf <= 1e-6


def test_harmonic_kernel_magnitude_pre_caustic(harmonic_bundle):
    _, _, grid, _, pf = harmonic_bundle
    worst = 0.0
    for t_req in np.linspace(0.1, 0.9 * np.pi, 9):
        k = pf.slice_index(on_axis(grid, [t_req])[0])
        t = pf.times[k]
        sel = pf.mask[k]
        target = mehler_magnitude_sq(t)
        worst = max(worst, float(np.max(
            np.abs(np.abs(pf.psi[k][sel]) ** 2 - target) / target)))
    assert worst <= 1e-3


def test_harmonic_maslov_branch_factor(harmonic_bundle):
    _, _, grid, _, pf = harmonic_bundle
    k = pf.slice_index(on_axis(grid, [np.pi + 0.5])[0])
    assert all(b.nu == 1 for b in pf.branches.slices[k])
    k_pre = pf.slice_index(on_axis(grid, [1.5])[0])
    assert all(b.nu == 0 for b in pf.branches.slices[k_pre])


def test_phase_consistency(free_bundle, harmonic_bundle, quartic_bundle):
    for bundle in (free_bundle, harmonic_bundle, quartic_bundle):
        _, _, grid, fan, pf = bundle
        k = len(fan.times) // 2
        assert aw.phase_consistency_deviation(pf, k) <= 1e-8


def test_linear_kernel_action_spot_value(linear_bundle):
    # phi(x, t; 0) = m x^2/2t + f t x/2 - f^2 t^3/24m, frozen from the
    # symbolic Hamilton-Jacobi solution of V = -f x
    _, _, grid, _, pf = linear_bundle
    k = pf.slice_index(on_axis(grid, [0.9])[0])
    t = pf.times[k]
    b = pf.branches.slices[k][0]
    x = pf.x[b.nodes]
    j = int(np.argmin(np.abs(x - 0.7)))
    expect = x[j] ** 2 / (2 * t) + t * x[j] / 2 - t ** 3 / 24
    assert b.phi[j] == pytest.approx(expect, abs=1e-9)
    if abs(t - 0.9) < 1e-12 and abs(x[j] - 0.7) < 1e-12:
        assert b.phi[j] == pytest.approx(0.5568472222222223, abs=1e-9)


def test_semigroup_free_kernel():
    """Kernel composition over an intermediate time equals the direct kernel.

    Trapezoid quadrature over the intermediate position with a two-term
    stationary-phase endpoint correction for the truncated Fresnel tails.
    """
    over = {"n": 6401, "x_min": -8.0, "x_max": 8.0,
            "fan_min": -20.0, "fan_max": 20.0, "fan_n": 12001}
    setup, ic, grid, fan, pf = build_kernel("free", over, extra=[0.5, 1.0])
    t1 = t2 = on_axis(grid, [0.5])[0]
    tsum = on_axis(grid, [1.0])[0]
    k1, ks = pf.slice_index(t1), pf.slice_index(tsum)
    # truncate the intermediate-position integral inside full kernel coverage;
    # the stationary-phase endpoint terms account for the Fresnel tails
    ycov = pf.mask[k1] & (np.abs(pf.x) <= 6.0)
    ys = pf.x[ycov]
    xs = np.arange(-2.0, 2.0 + 0.01, 0.02)
    fam = aw.build_kernel_family(setup, ic.epsilon, ys, aw.FanSpec(-20, 20, 12001),
                                 aw.SpaceTimeGrid(
                                     axes=(aw.SpatialAxis(-2.0, 2.0, xs.size),),
                                     time=grid.time),
                                 np.array([t2]))
    h = ys[1] - ys[0]
    w = np.full(ys.size, h)
    w[0] = w[-1] = 0.5 * h
    vals = np.where(fam.mask[0], fam.psi[0], 0.0)
    comp = vals.T @ (w * pf.psi[k1][ycov])
    thpp = (1.0 / t1 + 1.0 / t2)
    for edge_sign, j in ((+1, ys.size - 1), (-1, 0)):
        yb = ys[j]
        fb = vals[j, :] * pf.psi[k1][ycov][j]
        thp = (yb - xs) / t2 + yb / t1
        tail = -fb / (1j * thp) + fb * thpp / thp ** 3
        comp += edge_sign * tail
    target = free_kernel_exact(xs, tsum) * np.exp(-1j * np.pi / 4)
    sel = np.isfinite(comp)
    _, linf, _ = aw.compare_waves(target[sel], comp[sel])
    assert linf <= 1e-4


def test_richardson_needs_two_levels():
    with pytest.raises(ValueError):
        aw.richardson_extrapolate([np.zeros(3)], [1e-3])
