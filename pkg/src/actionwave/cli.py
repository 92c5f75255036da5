"""Scenario orchestration: construct -> audit -> report, as one command.

Exit codes: 0 when every enabled check passes its tolerance, 2 on check
failure, 1 on configuration errors.  Every check is listed in manifest.json
with its measured value and tolerance; disabled checks are listed as
skipped, never dropped.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import make_run_dir, read_csv_columns, write_csv, write_json
from .clock import ClockSpec, rescaled_density_check, solve_clock
from .dynamics import build_branch_fields, integrate_fan, laplacian_route_mismatch
from .model import (ComplexField, FanSpec, InitialCondition, ScenarioError,
                    make_scenario, scenario_fan, SCENARIO_IDS)
from .propagator import assemble_propagator, calibrate_rho_o
from .superpose import (InitialWave, build_kernel_family, fringe_spacing,
                        sample_initial_wave, superpose)
from .verify import (bohm_potential, bohm_stats, branch_bohm_stats,
                     compare_waves, continuity_residual, crank_nicolson_evolve,
                     hj_residual, l2_norm, madelung_decompose,
                     schrodinger_residual)

DEFAULT_TOLERANCES = {
    "energy_conservation": 1e-8,
    "transport_equivalence": 1e-6,
    "schrodinger_l2": 1e-3,
    "bohm_max": 1e-4,
    "lap_route": 2e-3,
    "residual_matches_bohm": 0.15,
    "l2_vs_oracle": 2e-2,
    "maslov_jump": 1e-2,
    "packet_vs_oracle": 1e-3,
    "norm_conservation": 1e-3,
    "fringe_rel": 2e-2,
    "chain_rule": 1e-6,
    "collapse": 1e-3,
    "clock_free_form": 1e-8,
}

# dotted CLI keys accepted as overrides, e.g. --grid.n 801
DOTTED_KEYS = {
    "grid.n": "n", "grid.x_min": "x_min", "grid.x_max": "x_max",
    "grid.dt": "dt", "grid.t_max": "t_max",
    "fan.n": "fan_n", "fan.min": "fan_min", "fan.max": "fan_max",
}

PACKET_DEFAULTS = {
    "free": dict(center=0.0, sigma=1.0, momentum=0.0, src_lo=-5.5, src_hi=5.5),
    "harmonic": dict(center=1.0, sigma=1.0, momentum=0.0, src_lo=-4.5, src_hi=6.5),
}
N_SOURCES = 257
SUP_FAN = FanSpec(-30.0, 30.0, 4001)


@dataclass
class RunConfig:
    scenario: str
    overrides: dict = field(default_factory=dict)
    toggles: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out: str = "runs"

    def resolved_toggles(self) -> dict:
        t = {"oracle": False,
             "superpose": self.scenario in ("free", "harmonic", "two-source"),
             "rescale": True}
        t.update(self.toggles)
        if "p_o" in self.overrides:
            t["superpose"] = False
        return t

    def resolved_tolerances(self) -> dict:
        t = dict(DEFAULT_TOLERANCES)
        t.update(self.tolerances)
        return t

    def to_json_dict(self) -> dict:
        # the artifact location is not part of the computational config
        return {"scenario": self.scenario, "overrides": self.overrides,
                "toggles": self.toggles, "tolerances": self.tolerances}


class Checks:
    """Named pass/fail records; disabled checks stay listed as skipped."""

    def __init__(self, tolerances):
        self.tol = tolerances
        self.rows = []

    def add(self, name, value, tol_key=None, note=""):
        tol = self.tol[tol_key or name]
        passed = bool(np.isfinite(value) and value <= tol)
        self.rows.append({"name": name, "enabled": True, "passed": passed,
                          "value": float(value), "tolerance": float(tol),
                          "note": note})
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: {value:.6g} (tol {tol:.3g}) {note}".rstrip())

    def skip(self, name, note):
        self.rows.append({"name": name, "enabled": False, "passed": None,
                          "value": None, "tolerance": None, "note": note})
        print(f"[skip] {name}: {note}")

    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.rows if r["enabled"])


def _fit_order(values, errors) -> float:
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(v[ok]), np.log(e[ok]), 1)[0])


def _on_axis(axis, values):
    return np.array(sorted({axis.times[axis.index_of(t)] for t in values}))


def _aligned_cn_axis(grid, pad_width: float, refine: int):
    """CN axis containing every grid node: pad by whole grid steps, refine
    each step by an integer factor."""
    h = grid.h
    pad = int(np.ceil(pad_width / h))
    n = (grid.axis.n + 2 * pad - 1) * refine + 1
    xg = np.linspace(grid.axis.x_min - pad * h, grid.axis.x_max + pad * h, n)
    idx = pad * refine + refine * np.arange(grid.axis.n)
    return xg, idx


def _subsample_field(wave, factor: int) -> ComplexField:
    return ComplexField(times=wave.times.copy(), x=wave.x[::factor].copy(),
                        psi=wave.psi[:, ::factor].copy(),
                        mask=wave.mask[:, ::factor].copy())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def run(config: RunConfig) -> tuple[int, Path | None]:
    try:
        setup, ic, grid = make_scenario(config.scenario, config.overrides)
        fan = scenario_fan(config.scenario, config.overrides)
        toggles = config.resolved_toggles()
        tolerances = config.resolved_tolerances()
    except (ScenarioError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1, None

    checks = Checks(tolerances)
    axis = grid.time
    eps, t_max, dt = axis.epsilon, axis.t_max, axis.dt
    scen = config.scenario
    quartic = setup.potential.kind == "quartic"
    harmonic = setup.potential.kind == "harmonic"
    omega = setup.potential.params[0] if harmonic else 1.0

    # --- store-time plan -------------------------------------------------
    if quartic:
        res_lo, res_hi = 0.2 * t_max, 0.9 * t_max
        x_window = (-1.5, 1.5)
    elif harmonic:
        res_lo, res_hi = 0.25, min(0.9 * np.pi / omega, t_max)
        x_window = (-2.5, 2.5)
    else:
        res_lo, res_hi = 0.25 * t_max, 0.85 * t_max
        x_window = (-2.0, 2.0)
    residual_times = _on_axis(axis, np.linspace(res_lo, res_hi, 10))
    dump_times = _on_axis(axis, np.linspace(eps, t_max, min(41, axis.n_t)))
    t_ref = residual_times[len(residual_times) // 2]
    maslov_pair = None
    if harmonic and toggles["oracle"] and t_max > np.pi / omega + 0.9 + 5 * dt:
        maslov_pair = _on_axis(axis, [np.pi / omega - 0.9, np.pi / omega + 0.9])
    # oracle surrogate compared where its envelope is widest (best conditioned)
    t_orc = np.pi / (2 * omega) if harmonic else 1.0
    t_orc = axis.times[axis.index_of(min(t_orc, 0.8 * t_max))]
    store = set(dump_times) | {t_ref, t_orc}
    for t in residual_times:
        k = axis.index_of(t)
        store |= {axis.times[k - 1], axis.times[k], axis.times[k + 1]}
    if maslov_pair is not None:
        store |= set(maslov_pair)
    store_times = np.array(sorted(store))

    # --- kernel construction ---------------------------------------------
    fan_data = integrate_fan(setup, ic, fan, grid, store_times=store_times)
    branches = build_branch_fields(fan_data, grid)
    pfield = assemble_propagator(branches, setup, ic)

    checks.add("energy_conservation", fan_data.energy_drift())
    checks.add("transport_equivalence", fan_data.transport_deviation())

    report = schrodinger_residual(pfield, setup, x_window=x_window)
    pair = madelung_decompose(pfield, hbar=setup.hbar)
    report.continuity_l2 = continuity_residual(pair, setup, x_window=x_window)["l2"]
    hjq = hj_residual(pair, setup, True, x_window=x_window)
    report.hjq_l2 = hjq["l2"]
    bmax, bmean = branch_bohm_stats(pfield, setup)
    report.bohm_max, report.bohm_mean = bmax, bmean
    report.detail["bohm_field_dump"] = "bohm_profile.csv"
    report.detail["mask_fraction_field"] = pfield.branches.mask_fraction()
    report.mask_fraction = report.detail["mask_fraction_field"]

    if quartic:
        # the un-rescaled quartic kernel leaves exactly the Bohm term in the
        # wave equation; audit that identity instead of a vanishing residual
        ratio = report.schrodinger_l2 / max(report.hjq_l2, 1e-300)
        checks.add("residual_matches_bohm", abs(ratio - 1.0),
                   note=f"schrodinger/hjq ratio {ratio:.4f}")
        checks.skip("schrodinger_l2", "quartic kernel carries its Bohm term "
                                      f"(measured {report.schrodinger_l2:.3g})")
        checks.skip("bohm_max", f"reported {bmax:.3g}; vanishing is claimed "
                                "only after time rescaling")
    else:
        checks.add("schrodinger_l2", report.schrodinger_l2)
        checks.add("bohm_max", bmax, note="branch densities")
    k_ref = pfield.slice_index(t_ref)
    lap_mis = max((laplacian_route_mismatch(b, grid, setup)
                   for b in branches.slices[k_ref]
                   if b.node_stop - b.node_start >= 5), default=float("nan"))
    checks.add("lap_route", lap_mis, note=f"at t={t_ref:.3g}")

    residuals = {"kernel": report.to_json_dict()}

    # --- oracle ------------------------------------------------------------
    oracle_bits = {}
    if toggles["oracle"]:
        sigma0 = 5.0 * np.sqrt(setup.hbar * eps / setup.m)
        xg, idx = _aligned_cn_axis(grid, 4.0, 2)
        g = (2 * np.pi * sigma0 ** 2) ** -0.25 \
            * np.exp(-(xg - (ic.point if ic.kind == "position" else 0.0)) ** 2
                     / (4 * sigma0 ** 2))
        if ic.kind == "momentum":
            checks.skip("l2_vs_oracle", "momentum impulse has no boxed oracle surrogate")
        else:
            cn = crank_nicolson_evolve(setup, g.astype(complex), xg, 0.0,
                                       np.array([t_orc]), 2.5e-4)
            k = pfield.slice_index(t_orc)
            # window follows the drifting classical center (mid-fan path)
            x_cl = float(fan_data.x[k][fan_data.n // 2])
            sel = pfield.mask[k] & (np.abs(pfield.x - x_cl) <= 1.5)
            a = cn.psi[0][idx][sel] / l2_norm(cn.psi[0][idx][sel], grid.h)
            b = pfield.psi[k][sel] / l2_norm(pfield.psi[k][sel], grid.h)
            l2, _, _ = compare_waves(a, b)
            note = f"narrow-Gaussian surrogate sigma0={sigma0:.4g} at t={t_orc:.3g}"
            if quartic:
                # pre-rescaling the anharmonic kernel keeps its Bohm term, so
                # a true-Schrodinger oracle must disagree; report, don't gate
                checks.skip("l2_vs_oracle",
                            f"measured {l2:.3g} ({note}); anharmonic kernel "
                            "deviates by its Bohm term before rescaling")
            else:
                checks.add("l2_vs_oracle", l2, note=note)
            oracle_bits["l2_vs_oracle"] = l2
            oracle_bits["norm_drift_per_step"] = cn.meta["norm_drift_per_step"]
        if maslov_pair is not None:
            jump = _maslov_jump(setup, ic, grid, pfield, maslov_pair, omega)
            checks.add("maslov_jump", jump, note="pi/2 drop across the focus vs oracle")
            oracle_bits["maslov_jump"] = jump
    else:
        checks.skip("l2_vs_oracle", "oracle disabled")
        if harmonic and t_max > np.pi / omega + 0.9 + 5 * dt:
            checks.skip("maslov_jump", "oracle disabled")

    # --- superposition ------------------------------------------------------
    packet_wave = None
    packet_summary = {}
    if toggles["superpose"] and scen == "two-source":
        srcs = tuple(config.overrides.get("sources", (-1.0, 1.0)))
        rel = float(config.overrides.get("rel_phase", 0.0))
        t_fr = _on_axis(axis, [min(1.0, 0.9 * t_max)])
        fam = build_kernel_family(setup, eps, np.asarray(srcs),
                                  FanSpec(-10, 10, 2001), grid, t_fr, method="direct")
        packet_wave = superpose(fam, InitialWave("two_point", x1=srcs[0], x2=srcs[1],
                                                 rel_phase=rel))
        delta = abs(srcs[1] - srcs[0])
        target = 2 * np.pi * setup.hbar * t_fr[0] / (setup.m * delta)
        fr = fringe_spacing(packet_wave, 0, (-3.2, 3.2))
        rel_err = abs(fr["mean_spacing"] - target) / target
        checks.add("fringe_rel", rel_err,
                   note=f"spacing {fr['mean_spacing']:.5g} target {target:.5g}")
        packet_summary = {"fringe": fr, "fringe_target": target,
                          "check_times": [float(t_fr[0])]}
    elif toggles["superpose"] and scen in PACKET_DEFAULTS:
        pk = PACKET_DEFAULTS[scen]
        check_times = _on_axis(axis, np.linspace(
            min(0.5, 0.45 * t_max), min(t_max, 0.8 * np.pi / omega), 5))
        fam = build_kernel_family(setup, eps,
                                  np.linspace(pk["src_lo"], pk["src_hi"], N_SOURCES),
                                  SUP_FAN, grid, check_times)
        psi0 = InitialWave("gaussian", center=pk["center"], sigma=pk["sigma"],
                           momentum=pk["momentum"])
        packet_wave = superpose(fam, psi0)
        norms = [l2_norm(packet_wave.psi[k], grid.h, packet_wave.mask[k])
                 for k in range(len(check_times))]
        checks.add("norm_conservation", float(np.max(np.abs(np.asarray(norms) - 1.0))),
                   note="superposed packet")
        packet_summary = {"norms": norms, "check_times": [float(t) for t in check_times],
                          "normalization": packet_wave.meta.get("normalization")}
        if toggles["oracle"]:
            xg, idx = _aligned_cn_axis(grid, 4.0, 2)
            g = sample_initial_wave(psi0, xg, hbar=setup.hbar)
            cn = crank_nicolson_evolve(setup, g, xg, 0.0, check_times, 2.5e-4)
            errs = []
            for a, t in enumerate(check_times):
                k = packet_wave.slice_index(t)
                sel = packet_wave.mask[k]
                l2, _, _ = compare_waves(cn.psi[a][idx][sel], packet_wave.psi[k][sel])
                errs.append(l2)
            checks.add("packet_vs_oracle", float(np.max(errs)),
                       note=f"worst over {len(errs)} check times")
            packet_summary["l2_vs_oracle"] = errs
        else:
            checks.skip("packet_vs_oracle", "oracle disabled")
    elif not toggles["superpose"]:
        checks.skip("norm_conservation", "superposition disabled")
        if scen == "two-source":
            checks.skip("fringe_rel", "superposition disabled")

    # --- clock rescaling -----------------------------------------------------
    clock_bits = {}
    if toggles["rescale"]:
        spec = ClockSpec("constant", (1.0,))
        clock = solve_clock(fan_data, spec)
        t_window = (eps, 0.9 * t_max if quartic else t_max)
        chk = rescaled_density_check(clock, fan_data, spec,
                                     pfield.normalization["rho_o"],
                                     t_window=t_window)
        checks.add("chain_rule", chk["formula_max_rel_err"])
        checks.add("collapse", chk["collapse"]["max_discrepancy"],
                   note=f"{chk['collapse']['pair_count']} pairs, "
                        f"delta {chk['collapse']['delta']:.3g}")
        if setup.potential.kind == "free" and ic.kind == "position":
            dev = 0.0
            for k, t in enumerate(fan_data.times):
                u = fan_data.usable(k)
                if np.any(u):
                    dev = max(dev, float(np.max(np.abs(
                        clock.tprime[k][u] - np.log(t / eps)))))
            checks.add("clock_free_form", dev, note="t' vs ln(t/eps)")
        clock_bits = chk
    else:
        checks.skip("chain_rule", "rescaling disabled")
        checks.skip("collapse", "rescaling disabled")

    # --- built-in grid-decimation convergence table --------------------------
    conv_rows = {"value": [], "schrodinger_l2": [], "bohm_max": [], "l2_vs_oracle": []}
    for f in (1, 2, 4):
        sub = _subsample_field(pfield, f)
        try:
            rep_f = schrodinger_residual(sub, setup, x_window=x_window)
            pair_f = madelung_decompose(sub, hbar=setup.hbar)
            k_mid = pair_f.rho.shape[0] // 2
            qf = bohm_potential(pair_f.rho[k_mid], setup, grid.h * f)
            bmax_f, _ = bohm_stats(qf)
        except ValueError:
            continue
        conv_rows["value"].append(grid.h * f)
        conv_rows["schrodinger_l2"].append(rep_f.schrodinger_l2)
        conv_rows["bohm_max"].append(bmax_f)
        conv_rows["l2_vs_oracle"].append(
            oracle_bits.get("l2_vs_oracle", float("nan")) if f == 1 else float("nan"))

    # --- artifacts ------------------------------------------------------------
    out_dir = make_run_dir(config.out, f"run-{scen}")
    _dump_characteristics(out_dir / "characteristics.csv", fan_data, dump_times)
    _dump_field(out_dir / "field_kernel.csv", pfield, dump_times, x_stride=4,
                branch_count=True)
    if packet_wave is not None:
        _dump_field(out_dir / "field_packet.csv", packet_wave, packet_wave.times,
                    x_stride=4, branch_count=False)
        write_json(out_dir / "packet_summary.json", packet_summary)
    _dump_bohm_profile(out_dir / "bohm_profile.csv", pfield, packet_wave,
                       setup, t_ref)
    if toggles["rescale"]:
        _dump_clock(out_dir / "clock.csv", fan_data, clock, dump_times)
        write_json(out_dir / "collapse.json", clock_bits)
    orders = [f"order {k} {_fit_order(conv_rows['value'], conv_rows[k]):.6g}"
              for k in ("schrodinger_l2", "bohm_max")]
    write_csv(out_dir / "convergence.csv", conv_rows, trailing_comments=orders)
    write_json(out_dir / "residuals.json", residuals)

    status = 0 if checks.all_passed() else 2
    manifest = {
        "tool": {"name": "actionwave", "version": __version__,
                 "numpy": np.__version__,
                 "python": ".".join(map(str, sys.version_info[:3]))},
        "seed": 0,
        "config": config.to_json_dict(),
        "resolved": {"toggles": toggles, "tolerances": tolerances,
                     "grid": {"x_min": grid.axis.x_min, "x_max": grid.axis.x_max,
                              "n": grid.axis.n, "epsilon": eps, "t_max": t_max,
                              "dt": dt},
                     "fan": {"min": fan.lam_min, "max": fan.lam_max, "n": fan.n,
                             "substeps": fan.substeps},
                     "normalization": pfield.normalization},
        "checks": checks.rows,
        "exit_status": status,
    }
    write_json(out_dir / "manifest.json", manifest)
    print(f"artifacts: {out_dir}")
    return status, out_dir


def _maslov_jump(setup, ic, grid, pfield, pair_times, omega) -> float:
    """Phase-offset drift of the constructed kernel against a Crank-Nicolson
    narrow-Gaussian surrogate across the first focus (target: none, once the
    -pi/2 branch factor is applied)."""
    sigma0 = 0.05
    xg, idx = _aligned_cn_axis(grid, 16.0, 2)
    g = (2 * np.pi * sigma0 ** 2) ** -0.25 \
        * np.exp(-(xg - ic.point) ** 2 / (4 * sigma0 ** 2))
    cn = crank_nicolson_evolve(setup, g.astype(complex), xg, 0.0,
                               np.asarray(pair_times), 1e-4)
    offsets = []
    for a, t in enumerate(pair_times):
        k = pfield.slice_index(t)
        pcn = cn.psi[a][idx]
        pk = pfield.psi[k]
        x_cl = ic.point * np.cos(omega * t)
        sel = np.isfinite(pk) & (np.abs(pfield.x - x_cl) <= 1.5)
        z = np.sum(np.abs(pcn[sel]) ** 2
                   * np.exp(1j * (np.angle(pcn[sel]) - np.angle(pk[sel]))))
        offsets.append(np.angle(z))
    jump = offsets[1] - offsets[0]
    return float(abs((jump + np.pi) % (2 * np.pi) - np.pi))


def _dump_characteristics(path, fan_data, dump_times, max_chars=27):
    stride = max(1, fan_data.n // max_chars)
    cols = {"lambda": [], "t": [], "x": [], "p": [], "S": [], "D": [], "J": []}
    t_set = set(np.round(dump_times, 12))
    for k, t in enumerate(fan_data.times):
        if round(float(t), 12) not in t_set:
            continue
        for i in range(0, fan_data.n, stride):
            cols["lambda"].append(fan_data.lambdas[i])
            cols["t"].append(t)
            cols["x"].append(fan_data.x[k][i])
            cols["p"].append(fan_data.p[k][i])
            cols["S"].append(fan_data.S[k][i])
            cols["D"].append(fan_data.d_re[k][i])
            cols["J"].append(fan_data.J[k][i])
    write_csv(path, cols)


def _dump_field(path, wave, dump_times, x_stride=4, branch_count=False):
    cols = {"t": [], "x": [], "re_psi": [], "im_psi": [], "abs2_psi": []}
    if branch_count:
        cols["branch_count"] = []
    t_set = set(np.round(dump_times, 12))
    for k, t in enumerate(wave.times):
        if round(float(t), 12) not in t_set:
            continue
        xs = wave.x[::x_stride]
        ps = wave.psi[k][::x_stride]
        for j in range(xs.size):
            v = ps[j] if np.isfinite(ps[j]) else complex(np.nan, np.nan)
            cols["t"].append(t)
            cols["x"].append(xs[j])
            cols["re_psi"].append(v.real)
            cols["im_psi"].append(v.imag)
            cols["abs2_psi"].append(abs(v) ** 2 if np.isfinite(ps[j]) else np.nan)
            if branch_count:
                cols["branch_count"].append(int(wave.branch_count[k][::x_stride][j]))
    write_csv(path, cols)


def _dump_bohm_profile(path, pfield, packet_wave, setup, t_ref):
    h = pfield.grid.h
    x = pfield.x
    q_kernel = np.full(x.size, np.nan)
    k = pfield.slice_index(t_ref)
    for b in pfield.branches.slices[k]:
        if b.rho is not None and b.rho.size >= 5:
            q = bohm_potential(b.rho, setup, h)
            seg = q_kernel[b.nodes]
            take = np.isfinite(q) & ~np.isfinite(seg)
            seg[take] = q[take]
            q_kernel[b.nodes] = seg
    q_packet = np.full(x.size, np.nan)
    if packet_wave is not None:
        kp = int(np.argmin(np.abs(packet_wave.times - t_ref)))
        pair = madelung_decompose(packet_wave, hbar=setup.hbar)
        qp = bohm_potential(pair.rho[kp], setup, h, floor_rel=1e-8)
        q_packet[np.isfinite(qp)] = qp[np.isfinite(qp)]
    write_csv(path, {"x": x, "q_kernel": q_kernel, "q_madelung": q_packet})


def _dump_clock(path, fan_data, clock, dump_times, max_chars=27):
    stride = max(1, fan_data.n // max_chars)
    rho_o = 1.0
    cols = {"lambda": [], "t": [], "t_prime": [], "rho": [], "rho_formula": []}
    t_set = set(np.round(dump_times, 12))
    for k, t in enumerate(fan_data.times):
        if round(float(t), 12) not in t_set:
            continue
        for i in range(0, fan_data.n, stride):
            if not clock.valid[k][i]:
                continue
            tp = clock.tprime[k][i]
            cols["lambda"].append(fan_data.lambdas[i])
            cols["t"].append(t)
            cols["t_prime"].append(tp)
            cols["rho"].append(rho_o * np.exp(-fan_data.d_re[k][i]))
            cols["rho_formula"].append(rho_o * np.exp(-clock.spec.integral(tp)))
    write_csv(path, cols)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_PARAMETERS = ("h", "dt", "eps", "fan_size")


def sweep(config: RunConfig, parameter: str, values) -> tuple[int, Path | None]:
    if parameter not in SWEEP_PARAMETERS:
        print(f"configuration error: parameter must be one of {SWEEP_PARAMETERS}",
              file=sys.stderr)
        return 1, None
    if len(values) < 3:
        print("configuration error: sweep needs at least 3 values", file=sys.stderr)
        return 1, None
    rows = {"value": [], "schrodinger_l2": [], "bohm_max": [],
            "l2_vs_oracle": [], "interp_error": []}
    try:
        for v in values:
            rows["value"].append(float(v))
            point = _sweep_point(config, parameter, float(v))
            for key in ("schrodinger_l2", "bohm_max", "l2_vs_oracle", "interp_error"):
                rows[key].append(point.get(key, float("nan")))
    except (ScenarioError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1, None
    out_dir = make_run_dir(config.out, f"sweep-{config.scenario}-{parameter}")
    orders = []
    for key in ("schrodinger_l2", "bohm_max", "l2_vs_oracle", "interp_error"):
        orders.append(f"order {key} {_fit_order(rows['value'], rows[key]):.6g}")
    write_csv(out_dir / "sweep.csv", rows, trailing_comments=orders)
    write_json(out_dir / "sweep.json",
               {"parameter": parameter, "values": [float(v) for v in values],
                "orders": {k: _fit_order(rows["value"], rows[k])
                           for k in ("schrodinger_l2", "bohm_max",
                                     "l2_vs_oracle", "interp_error")}})
    print(f"artifacts: {out_dir}")
    return 0, out_dir


def _sweep_point(config: RunConfig, parameter: str, value: float) -> dict:
    overrides = dict(config.overrides)
    scen = config.scenario
    out = {}
    if parameter == "h":
        span = float(overrides.get("x_max", 8.0)) - float(overrides.get("x_min", -8.0))
        overrides["n"] = int(round(span / value)) + 1
    elif parameter == "dt":
        overrides["dt"] = value
        overrides.setdefault("n", 3201)
    elif parameter == "eps":
        overrides["epsilon"] = value
    elif parameter == "fan_size":
        overrides["fan_n"] = int(value)
    setup, ic, grid = make_scenario(scen, overrides)
    fan = scenario_fan(scen, overrides)
    axis = grid.time
    t_ref = axis.times[axis.index_of(min(1.0, 0.8 * axis.t_max))]
    k_ref_t = axis.index_of(t_ref)
    store = np.array([axis.times[k_ref_t - 1], t_ref, axis.times[k_ref_t + 1]])
    fan_data = integrate_fan(setup, ic, fan, grid, store_times=store)
    branches = build_branch_fields(fan_data, grid)
    pfield = assemble_propagator(branches, setup, ic)
    rep = schrodinger_residual(pfield, setup, x_window=(-1.5, 1.5))
    out["schrodinger_l2"] = rep.schrodinger_l2
    out["bohm_max"] = branch_bohm_stats(pfield, setup)[0]

    if parameter == "eps" and ic.kind == "position":
        sigma0 = 5.0 * np.sqrt(setup.hbar * ic.epsilon / setup.m)
        xg, idx = _aligned_cn_axis(grid, 4.0, 2)
        g = (2 * np.pi * sigma0 ** 2) ** -0.25 \
            * np.exp(-(xg - ic.point) ** 2 / (4 * sigma0 ** 2))
        cn = crank_nicolson_evolve(setup, g.astype(complex), xg, 0.0,
                                   np.array([t_ref]), 2.5e-4)
        k = pfield.slice_index(t_ref)
        sel = pfield.mask[k] & (np.abs(pfield.x - ic.point) <= 1.5)
        a = cn.psi[0][idx][sel] / l2_norm(cn.psi[0][idx][sel], grid.h)
        b = pfield.psi[k][sel] / l2_norm(pfield.psi[k][sel], grid.h)
        out["l2_vs_oracle"], _, _ = compare_waves(a, b)
    if parameter == "fan_size":
        ref_fan = FanSpec(fan.lam_min, fan.lam_max, 2 * fan.n - 1, fan.substeps)
        ref_data = integrate_fan(setup, ic, ref_fan, grid, store_times=store)
        ref_branches = build_branch_fields(ref_data, grid)
        k = 1
        phi = np.full(grid.axis.n, np.nan)
        phi_ref = np.full(grid.axis.n, np.nan)
        for b in branches.slices[k]:
            phi[b.nodes] = b.phi
        for b in ref_branches.slices[k]:
            phi_ref[b.nodes] = b.phi
        sel = np.isfinite(phi) & np.isfinite(phi_ref)
        out["interp_error"] = float(np.max(np.abs(phi[sel] - phi_ref[sel])))
    return out


# ---------------------------------------------------------------------------
# oracle / audit
# ---------------------------------------------------------------------------

def oracle_cmd(config: RunConfig, sigma: float, center: float,
               momentum: float, times) -> tuple[int, Path | None]:
    try:
        setup, ic, grid = make_scenario(config.scenario, config.overrides)
        axis = grid.time
        store = _on_axis(axis, times if times else
                         np.linspace(axis.epsilon, axis.t_max, 9)[1:])
    except (ScenarioError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1, None
    xg, idx = _aligned_cn_axis(grid, 4.0, 2)
    psi0 = sample_initial_wave(InitialWave("gaussian", center=center, sigma=sigma,
                                           momentum=momentum), xg, hbar=setup.hbar)
    cn = crank_nicolson_evolve(setup, psi0, xg, 0.0, store, 2.5e-4)
    sub = ComplexField(times=cn.times, x=xg[idx], psi=cn.psi[:, idx],
                       mask=np.ones((store.size, idx.size), bool))
    out_dir = make_run_dir(config.out, f"oracle-{config.scenario}")
    _dump_field(out_dir / "field_oracle.csv", sub, store, x_stride=4)
    write_json(out_dir / "oracle.json",
               {"norm_drift_per_step": cn.meta["norm_drift_per_step"],
                "boundary_max": cn.meta["boundary_max"],
                "warnings": cn.meta["warnings"],
                "sigma": sigma, "center": center, "momentum": momentum,
                "times": [float(t) for t in store]})
    print(f"artifacts: {out_dir}")
    return 0, out_dir


def audit_cmd(config: RunConfig, csv_path: str) -> tuple[int, Path | None]:
    try:
        setup, _, _ = make_scenario(config.scenario, config.overrides)
        cols = read_csv_columns(csv_path)
        for need in ("t", "x", "re_psi", "im_psi"):
            if need not in cols:
                raise ScenarioError(f"wave CSV is missing column {need!r}")
    except (ScenarioError, ValueError, OSError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1, None
    times = np.unique(cols["t"])
    xs = np.unique(cols["x"])
    psi = np.full((times.size, xs.size), np.nan, dtype=complex)
    ti = np.searchsorted(times, cols["t"])
    xi = np.searchsorted(xs, cols["x"])
    psi[ti, xi] = cols["re_psi"] + 1j * cols["im_psi"]
    wave = ComplexField(times=times, x=xs, psi=psi, mask=np.isfinite(psi))
    report = schrodinger_residual(wave, setup)
    pair = madelung_decompose(wave, hbar=setup.hbar)
    report.continuity_l2 = continuity_residual(pair, setup)["l2"]
    report.hjq_l2 = hj_residual(pair, setup, True)["l2"]
    k_mid = pair.rho.shape[0] // 2
    q = bohm_potential(pair.rho[k_mid], setup, xs[1] - xs[0], floor_rel=1e-8)
    report.bohm_max, report.bohm_mean = bohm_stats(q)
    out_dir = make_run_dir(config.out, "audit")
    write_json(out_dir / "residuals.json", {"external": report.to_json_dict()})
    print(f"artifacts: {out_dir}")
    return 0, out_dir


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _extract_dotted(argv):
    """Pull --grid.n style pairs out of argv before argparse sees them."""
    rest, overrides = [], {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and tok[2:] in DOTTED_KEYS:
            if i + 1 >= len(argv):
                raise ScenarioError(f"missing value for {tok}")
            overrides[DOTTED_KEYS[tok[2:]]] = _parse_value(argv[i + 1])
            i += 2
        else:
            rest.append(tok)
            i += 1
    return rest, overrides


def _config_from_args(args, dotted) -> RunConfig:
    cfg = {}
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
    overrides = dict(cfg.get("overrides", {}))
    overrides.update(dotted)
    for kv in getattr(args, "set", None) or []:
        if "=" not in kv:
            raise ScenarioError(f"--set expects key=value, got {kv!r}")
        key, val = kv.split("=", 1)
        overrides[key] = _parse_value(val)
    if getattr(args, "t_max", None) is not None:
        overrides["t_max"] = args.t_max
    tolerances = dict(cfg.get("tolerances", {}))
    for kv in getattr(args, "tol", None) or []:
        key, val = kv.split("=", 1)
        if key not in DEFAULT_TOLERANCES:
            raise ScenarioError(f"unknown tolerance {key!r}")
        tolerances[key] = float(val)
    toggles = dict(cfg.get("toggles", {}))
    for name in ("oracle", "superpose", "rescale"):
        flag = getattr(args, name.replace("-", "_"), None)
        if flag is not None:
            toggles[name] = flag
    scenario = args.scenario or cfg.get("scenario")
    if not scenario:
        raise ScenarioError("no scenario given (flag or config file)")
    return RunConfig(scenario=scenario, overrides=overrides, toggles=toggles,
                     tolerances=tolerances, out=args.out or cfg.get("out", "runs"))


def _add_common(p):
    p.add_argument("--scenario", choices=SCENARIO_IDS)
    p.add_argument("--config", help="JSON config document (flags win)")
    p.add_argument("--out", help="artifact base directory (default runs/)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="scenario override, repeatable")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="tolerance override, repeatable")
    p.add_argument("--t-max", type=float, dest="t_max")


class _Parser(argparse.ArgumentParser):
    """Usage problems are configuration errors (exit 1), not check failures."""

    def error(self, message):
        raise ScenarioError(message)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, dotted = _extract_dotted(argv)
    except ScenarioError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1
    parser = _Parser(prog="actionwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="construct, audit, and report one scenario")
    _add_common(p_run)
    for name in ("oracle", "superpose", "rescale"):
        group = p_run.add_mutually_exclusive_group()
        group.add_argument(f"--{name}", dest=name, action="store_true", default=None)
        group.add_argument(f"--no-{name}", dest=name, action="store_false")

    p_sweep = sub.add_parser("sweep", help="refinement sweep with convergence orders")
    _add_common(p_sweep)
    p_sweep.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated sweep values")

    p_orc = sub.add_parser("oracle", help="Crank-Nicolson evolution only")
    _add_common(p_orc)
    p_orc.add_argument("--sigma", type=float, default=1.0)
    p_orc.add_argument("--center", type=float, default=0.0)
    p_orc.add_argument("--momentum", type=float, default=0.0)
    p_orc.add_argument("--times", help="comma-separated store times")

    p_aud = sub.add_parser("audit", help="residual report for an external wave CSV")
    _add_common(p_aud)
    p_aud.add_argument("--csv", required=True, help="wave CSV (t,x,re_psi,im_psi)")

    try:
        args = parser.parse_args(argv)
        config = _config_from_args(args, dotted)
    except (ScenarioError, ValueError, OSError, json.JSONDecodeError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1

    if args.command == "run":
        code, _ = run(config)
    elif args.command == "sweep":
        values = [float(v) for v in args.values.split(",")]
        code, _ = sweep(config, args.parameter, values)
    elif args.command == "oracle":
        times = [float(v) for v in args.times.split(",")] if args.times else None
        code, _ = oracle_cmd(config, args.sigma, args.center, args.momentum, times)
    else:
        code, _ = audit_cmd(config, args.csv)
    return code


if __name__ == "__main__":
    sys.exit(main())
