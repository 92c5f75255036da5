import numpy as np
import pytest

import actionwave as aw
from actionwave.dynamics import FanGapError

from conftest import build_kernel, on_axis


def test_free_characteristic_spot_values():
    setup, ic, grid = aw.make_scenario("free")
    ch = aw.integrate_characteristic(setup, ic, 2.0, grid,
                                     store_times=on_axis(grid, [1.0]))
    k = -1
    assert ch.x[k] == pytest.approx(2.0, abs=1e-12)
    assert ch.p[k] == pytest.approx(2.0, abs=1e-12)
    assert ch.S[k] == pytest.approx(2.0, abs=1e-12)      # p^2 t / 2m from t=0


def test_harmonic_characteristic_action():
    setup, ic, grid = aw.make_scenario("harmonic")
    t_req = on_axis(grid, [np.pi / 2])
    ch = aw.integrate_characteristic(setup, ic, 0.0, grid, store_times=t_req)
    t = ch.times[-1]
    # x = cos t, S = -sin(2t)/4 for the rest-start path from x_o = 1
    assert ch.x[-1] == pytest.approx(np.cos(t), abs=1e-10)
    assert ch.S[-1] == pytest.approx(-np.sin(2 * t) / 4.0, abs=1e-10)


def test_harmonic_jacobian_and_first_caustic(harmonic_bundle):
    setup, ic, grid, fan, pf = harmonic_bundle
    for k, t in enumerate(fan.times):
        assert np.allclose(fan.J[k], np.sin(t), rtol=1e-9, atol=1e-12)
    assert fan.caustic_times.size >= 1
    assert fan.caustic_times[0] == pytest.approx(np.pi, abs=2 * grid.time.dt)


@pytest.mark.parametrize("bundle", ["free_bundle", "linear_bundle",
                                    "harmonic_bundle", "quartic_bundle"])
def test_energy_conservation(bundle, request):
    fan = request.getfixturevalue(bundle)[3]
    assert fan.energy_drift() <= 1e-8


@pytest.mark.parametrize("bundle", ["free_bundle", "linear_bundle",
                                    "harmonic_bundle", "quartic_bundle"])
def test_transport_equivalence(bundle, request):
    fan = request.getfixturevalue(bundle)[3]
    assert fan.transport_deviation() <= 1e-6


def test_lap_along_path_free_and_harmonic(free_bundle, harmonic_bundle):
    fan_free = free_bundle[3]
    k = int(np.argmin(np.abs(fan_free.times - 0.5)))
    assert np.allclose(fan_free.lap[k], 1.0 / fan_free.times[k], rtol=1e-9)
    fan_h = harmonic_bundle[3]
    k = int(np.argmin(np.abs(fan_h.times - 0.5)))
    t = fan_h.times[k]
    assert np.allclose(fan_h.lap[k], 1.0 / np.tan(t), rtol=1e-8)


def test_free_density_transport(free_bundle):
    setup, ic, grid, fan, pf = free_bundle
    rho_o = pf.normalization["rho_o"]
    k = pf.slice_index(on_axis(grid, [0.5])[0])
    t = pf.times[k]
    for b in pf.branches.slices[k]:
        assert np.allclose(b.rho, rho_o * ic.epsilon / t, rtol=1e-9)


def test_momentum_dirac_plane_wave_density():
    setup, ic, grid, fan, pf = build_kernel("free", {"p_o": 2.0}, centers=[0.5])
    rho_o = pf.normalization["rho_o"]
    assert rho_o == pytest.approx(1.0 / (2 * np.pi))
    k = pf.slice_index(on_axis(grid, [0.5])[0])
    for b in pf.branches.slices[k]:
        assert np.allclose(b.rho, rho_o, rtol=1e-12)       # Delta phi = 0
        assert np.allclose(b.lap, 0.0, atol=1e-12)


def test_harmonic_density_transport(harmonic_bundle):
    setup, ic, grid, fan, pf = harmonic_bundle
    rho_o = pf.normalization["rho_o"]
    eps = ic.epsilon
    k = pf.slice_index(on_axis(grid, [1.5])[0])
    t = pf.times[k]
    expect = rho_o * np.sin(eps) / np.sin(t)
    for b in pf.branches.slices[k]:
        assert np.allclose(b.rho, expect, rtol=1e-9)


def test_branch_counts_free_single(free_bundle):
    _, _, grid, fan, pf = free_bundle
    for k in range(1, len(fan.times)):
        assert len(pf.branches.slices[k]) == 1
        assert pf.branch_count[k].max() == 1


def test_quartic_fold_branches():
    setup, ic, grid, fan, pf = build_kernel("quartic", {"t_max": 0.9},
                                            extra=[0.3, 0.8])
    k3 = pf.slice_index(on_axis(grid, [0.3])[0])
    assert len(pf.branches.slices[k3]) == 1
    k8 = pf.slice_index(on_axis(grid, [0.8])[0])
    assert len(pf.branches.slices[k8]) >= 3
    assert pf.branch_count[k8].max() >= 2
    # brute-force fan inspection: crossings of x(lambda) = x* count the branches
    x_star = 0.5
    xk = fan.x[k8]
    crossings = int(np.sum(np.diff(np.sign(xk - x_star)) != 0))
    assert crossings == int(pf.branch_count[k8][np.argmin(np.abs(pf.x - x_star))])


def test_harmonic_crossing_count_increments_at_k_pi():
    # the momentum fan of the harmonic position impulse has J ~ sin(omega t):
    # the caustic-crossing count rises by one at every t = k pi / omega
    setup, ic, grid = aw.make_scenario("harmonic", {"t_max": 8.0})
    fan = aw.FanSpec(-2.0, 2.0, 101)
    store = on_axis(grid, [1.0, 4.0, 7.5])
    f = aw.integrate_fan(setup, ic, fan, grid, store_times=store)
    expected = [int(np.floor(t / np.pi)) for t in store]
    for k, t in enumerate(f.times):
        if t < 0.5:
            continue
        j = int(np.argmin(np.abs(store - t)))
        assert np.all(f.nu[k] == expected[j]), (t, f.nu[k][0], expected[j])


def test_branch_monotone_in_lambda(quartic_bundle):
    _, _, grid, fan, pf = quartic_bundle
    for k in range(len(fan.times)):
        for b in pf.branches.slices[k]:
            lo = np.searchsorted(fan.lambdas, min(b.lam_range))
            hi = np.searchsorted(fan.lambdas, max(b.lam_range), side="right")
            xs = fan.x[k][lo:hi]
            diffs = np.diff(xs)
            assert np.all(diffs > 0) or np.all(diffs < 0)


def test_fan_gap_error_names_slice():
    setup, ic, grid = aw.make_scenario("free")
    fan = aw.FanSpec(-8.0, 8.0, 64)
    data = aw.integrate_fan(setup, ic, fan, grid, store_times=on_axis(grid, [1.0]))
    with pytest.raises(FanGapError, match="t="):
        aw.build_branch_fields(data, grid)


def test_quadratic_lap_spatially_constant(free_bundle, linear_bundle, harmonic_bundle):
    for bundle in (free_bundle, linear_bundle, harmonic_bundle):
        _, _, grid, fan, pf = bundle
        for k in range(1, len(fan.times)):
            for b in pf.branches.slices[k]:
                spread = float(np.max(b.lap) - np.min(b.lap))
                assert spread <= 1e-6 * abs(np.mean(b.lap)) + 1e-12


def test_quartic_lap_route_agreement_fine_grid():
    setup, ic, grid, fan, pf = build_kernel(
        "quartic", {"n": 2001, "x_min": -4.0, "x_max": 4.0},
        extra=[0.45], fan_overrides={"fan_n": 4001})
    k = pf.slice_index(on_axis(grid, [0.45])[0])
    mism = max(aw.laplacian_route_mismatch(b, grid, setup)
               for b in pf.branches.slices[k])
    assert mism <= 1e-4        # h = 0.004 keeps the stencil error below target


def test_lap_route_order_two_in_h():
    errs, hs = [], []
    for n in (401, 801, 1601):
        setup, ic, grid, fan, pf = build_kernel("quartic", {"n": n}, extra=[0.45])
        k = pf.slice_index(on_axis(grid, [0.45])[0])
        errs.append(max(aw.laplacian_route_mismatch(b, grid, setup)
                        for b in pf.branches.slices[k]))
        hs.append(grid.h)
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.7 <= order <= 2.3


def test_laplacian_action_needs_interior_nodes(free_bundle):
    setup, _, grid, fan, pf = free_bundle
    b = pf.branches.slices[1][0]
    narrow = type(b)(t=b.t, t_index=b.t_index, j=0, nu=0, orientation=1,
                     lam_range=b.lam_range, node_start=0, node_stop=3,
                     phi=b.phi[:3], lap=b.lap[:3], d_re=b.d_re[:3])
    with pytest.raises(ValueError):
        aw.laplacian_action(narrow, grid, setup)


def test_single_characteristic_matches_fan(free_bundle):
    setup, ic, grid, fan, pf = free_bundle
    i = 1500
    ch = aw.integrate_characteristic(setup, ic, float(fan.lambdas[i]), grid,
                                     store_times=fan.times)
    assert np.allclose(ch.x, fan.x[:, i], atol=1e-12)
    assert np.allclose(ch.S, fan.S[:, i], atol=1e-12)
