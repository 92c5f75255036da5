"""General waves from the propagator: quadrature over initial conditions.

psi(x, t) = sum_over_sources K(x, t; x_o) psi0(x_o) dx_o with trapezoid
weights on the source grid.  One kernel per source node; for quadratic
potentials (free, linear, harmonic) the whole family is synthesized exactly
from three base fans, because every trajectory quantity depends at most
quadratically on the source position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erfc

from .dynamics import integrate_fan
from .model import (FanSpec, InitialCondition, PhysicalSetup, ScenarioError,
                    SpaceTimeGrid, ComplexField)
from .propagator import calibrate_rho_o

__all__ = [
    "CoverageError",
    "InitialWave",
    "sample_initial_wave",
    "KernelFamily",
    "build_kernel_family",
    "superpose",
    "fringe_spacing",
]

TAIL_MASS_TOL = 1e-6
QUADRATIC_KINDS = ("free", "linear", "harmonic")


class CoverageError(RuntimeError):
    """Kernel family or grid does not cover the initial wave's support."""


@dataclass(frozen=True)
class InitialWave:
    """Initial wave profile in the position representation.

    kinds: 'gaussian' (center, sigma, momentum), 'two_point' (x1, x2,
    rel_phase), 'tabulated' (x and complex values in params).
    """

    kind: str
    center: float = 0.0
    sigma: float = 1.0
    momentum: float = 0.0
    x1: float = -1.0
    x2: float = 1.0
    rel_phase: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "two_point", "tabulated"):
            raise ScenarioError(f"unknown initial wave kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ScenarioError("gaussian width sigma must be positive")


def _gaussian_tail_mass(wave: InitialWave, x_min: float, x_max: float) -> float:
    a = (x_min - wave.center) / (np.sqrt(2.0) * wave.sigma)
    b = (x_max - wave.center) / (np.sqrt(2.0) * wave.sigma)
    return 0.5 * (erfc(b) + erfc(-a))


def sample_initial_wave(wave: InitialWave, x: np.ndarray,
                        hbar: float = 1.0) -> np.ndarray:
    """Complex samples of the initial wave on an axis, unit L2 norm under
    the trapezoid rule.  Raises CoverageError when more than TAIL_MASS_TOL
    of the probability mass falls outside the axis.
    """
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    if wave.kind == "gaussian":
        tail = _gaussian_tail_mass(wave, x[0], x[-1])
        if tail > TAIL_MASS_TOL:
            raise CoverageError(f"gaussian tail mass {tail:.2e} outside the axis")
        psi = np.exp(-(x - wave.center) ** 2 / (4.0 * wave.sigma ** 2))
        psi = psi.astype(complex) * np.exp(1j * wave.momentum * x / hbar)
    elif wave.kind == "two_point":
        missing = [p for p in (wave.x1, wave.x2) if p < x[0] or p > x[-1]]
        if missing:
            raise CoverageError(f"point sources outside the axis: {missing}")
        psi = np.zeros(x.size, dtype=complex)
        psi[int(np.argmin(np.abs(x - wave.x1)))] = 1.0
        psi[int(np.argmin(np.abs(x - wave.x2)))] = np.exp(1j * wave.rel_phase)
    else:
        tx, tv = np.asarray(wave.table[0], dtype=float), np.asarray(wave.table[1])
        psi = np.interp(x, tx, tv.real) + 1j * np.interp(x, tx, tv.imag)
        edge = max(abs(psi[0]), abs(psi[-1]))
        if edge ** 2 * (x[-1] - x[0]) > TAIL_MASS_TOL:
            raise CoverageError("tabulated wave does not decay inside the axis")
    w = np.full(x.size, dx)
    w[0] = w[-1] = 0.5 * dx
    norm = np.sqrt(np.sum(np.abs(psi) ** 2 * w))
    return psi / norm


@dataclass
class KernelFamily:
    """Propagator kernels for every source node, on shared check times."""

    setup: PhysicalSetup
    grid: SpaceTimeGrid
    sources: np.ndarray
    times: np.ndarray
    psi: np.ndarray            # (n_times, n_sources, n_x)
    mask: np.ndarray
    rho_o: float
    method: str

    def kernel(self, i: int) -> ComplexField:
        return ComplexField(times=self.times.copy(), x=self.grid.x.copy(),
                            psi=self.psi[:, i, :].copy(),
                            mask=self.mask[:, i, :].copy(),
                            meta={"source": float(self.sources[i])})


def _grid_kernel_slice(x_char, s_char, d_char, nu, x_nodes, rho_o, hbar):
    """Grid one kernel slice from per-characteristic samples (single branch)."""
    order = np.argsort(x_char)
    xs = x_char[order]
    keep = np.concatenate(([True], np.diff(xs) > 0))
    xs = xs[keep]
    s_s = s_char[order][keep]
    d_s = d_char[order][keep]
    lo = int(np.searchsorted(x_nodes, xs[0], side="left"))
    hi = int(np.searchsorted(x_nodes, xs[-1], side="right"))
    psi = np.full(x_nodes.size, np.nan, dtype=complex)
    if hi - lo >= 1 and xs.size >= 4:
        target = x_nodes[lo:hi]
        phi = CubicSpline(xs, s_s)(target)
        d_re = CubicSpline(xs, d_s)(target)
        psi[lo:hi] = (np.sqrt(rho_o * np.exp(-d_re))
                      * np.exp(1j * phi / hbar) * np.exp(-0.5j * np.pi * nu))
    return psi


def build_kernel_family(setup: PhysicalSetup, epsilon: float, sources,
                        fan: FanSpec, grid: SpaceTimeGrid, check_times,
                        method: str = "auto") -> KernelFamily:
    """Build position-impulse kernels for every source node.

    method 'synthesized' (default for quadratic potentials) integrates three
    base fans at source positions {c-w, c, c+w} and reconstructs any source
    exactly by quadratic combination, since trajectories of quadratic
    potentials depend affinely, and actions quadratically, on the source.
    method 'direct' integrates one fan per source (any potential).
    """
    sources = np.asarray(sources, dtype=float)
    check_times = np.asarray(check_times, dtype=float)
    if method == "auto":
        method = "synthesized" if setup.potential.kind in QUADRATIC_KINDS else "direct"
    rho_o = calibrate_rho_o(setup, InitialCondition("position", float(sources[0]), epsilon))
    x_nodes = grid.x
    n_t, n_s, n_x = check_times.size, sources.size, x_nodes.size
    psi = np.full((n_t, n_s, n_x), np.nan, dtype=complex)

    if method == "synthesized":
        if setup.potential.kind not in QUADRATIC_KINDS:
            raise ScenarioError("synthesized kernels require a quadratic potential")
        c = 0.5 * (sources.min() + sources.max())
        w = max(1.0, 0.5 * (sources.max() - sources.min()))
        base = {}
        for xo in (c - w, c, c + w):
            ic = InitialCondition("position", xo, epsilon)
            base[xo] = integrate_fan(setup, ic, fan, grid, store_times=check_times)
        f_m, f_c, f_p = base[c - w], base[c], base[c + w]
        times = f_c.times
        t_idx = [int(np.argmin(np.abs(times - t))) for t in check_times]
        for j, xo in enumerate(sources):
            s = (xo - c) / w
            # exact quadratic (Lagrange) weights at nodes -1, 0, +1
            wm, wc, wp = 0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)
            for a, k in enumerate(t_idx):
                x_char = wm * f_m.x[k] + wc * f_c.x[k] + wp * f_p.x[k]
                s_char = wm * f_m.S[k] + wc * f_c.S[k] + wp * f_p.S[k]
                # J, D and nu do not depend on the source for quadratic V
                psi[a, j] = _grid_kernel_slice(
                    x_char, s_char, f_c.d_re[k], int(f_c.nu[k][0]),
                    x_nodes, rho_o, setup.hbar)
    else:
        for j, xo in enumerate(sources):
            ic = InitialCondition("position", float(xo), epsilon)
            f = integrate_fan(setup, ic, fan, grid, store_times=check_times)
            t_idx = [int(np.argmin(np.abs(f.times - t))) for t in check_times]
            for a, k in enumerate(t_idx):
                u = f.usable(k)
                if not np.all(u):
                    # keep the dominant contiguous unmasked run
                    runs = np.split(np.arange(f.n), np.nonzero(np.diff(u))[0] + 1)
                    runs = [r for r in runs if u[r[0]]]
                    if not runs:
                        continue
                    r = max(runs, key=len)
                else:
                    r = np.arange(f.n)
                nus = f.nu[k][r]
                if nus.max() != nus.min():
                    r = r[nus == np.bincount(nus).argmax()]
                psi[a, j] = _grid_kernel_slice(
                    f.x[k][r], f.S[k][r], f.d_re[k][r], int(f.nu[k][r][0]),
                    x_nodes, rho_o, setup.hbar)
    mask = np.isfinite(psi)
    return KernelFamily(setup=setup, grid=grid, sources=sources.copy(),
                        times=check_times.copy(), psi=psi, mask=mask,
                        rho_o=rho_o, method=method)


def superpose(family: KernelFamily, psi0: InitialWave,
              weight_floor: float = 1e-12, normalize: bool = True) -> ComplexField:
    """Trapezoid quadrature of the kernel family against the initial wave.

    The result is normalized to unit L2 at the earliest stored slice and the
    factor recorded in meta['normalization'].  Nodes missing any kernel whose
    source carries significant weight are masked; a fully uncovered wave
    raises CoverageError listing the missing sources.
    """
    src = family.sources
    samples = sample_initial_wave(psi0, src, hbar=family.setup.hbar)
    dxo = src[1] - src[0] if src.size > 1 else 1.0
    w = np.full(src.size, dxo)
    w[0] = w[-1] = 0.5 * dxo
    weights = samples * w
    significant = np.abs(samples) ** 2 > weight_floor * np.max(np.abs(samples) ** 2)

    n_t, n_s, n_x = family.psi.shape
    psi = np.zeros((n_t, n_x), dtype=complex)
    mask = np.ones((n_t, n_x), dtype=bool)
    contrib = np.where(family.mask, family.psi, 0.0)
    for k in range(n_t):
        psi[k] = contrib[k].T @ weights
        mask[k] = np.all(family.mask[k][significant], axis=0)
    if not mask.any():
        missing = [float(s) for s in src[significant][:10]]
        raise CoverageError(f"kernel family does not cover the wave; sources {missing}")
    psi[~mask] = np.nan

    meta = {"sources": int(n_s), "dxo": float(dxo), "method": family.method}
    if normalize:
        h = family.grid.h
        k0 = 0
        norm = np.sqrt(np.nansum(np.where(mask[k0], np.abs(psi[k0]) ** 2, 0.0)) * h)
        psi = psi / norm
        meta["normalization"] = {"factor": float(1.0 / norm),
                                 "t_norm": float(family.times[k0])}
    out = ComplexField(times=family.times.copy(), x=family.grid.x.copy(),
                       psi=psi, mask=mask, meta=meta)
    out.validate()
    return out


def fringe_spacing(field: ComplexField, k: int, x_window) -> dict:
    """Mean spacing of interference peaks of |psi|^2 inside a window,
    located by brute-force local maxima with quadratic refinement."""
    x = field.x
    sel = (x >= x_window[0]) & (x <= x_window[1]) & field.mask[k]
    xs = x[sel]
    a2 = np.abs(field.psi[k][sel]) ** 2
    peaks = []
    for i in range(1, len(a2) - 1):
        if a2[i] > a2[i - 1] and a2[i] >= a2[i + 1]:
            denom = a2[i - 1] - 2 * a2[i] + a2[i + 1]
            shift = 0.5 * (a2[i - 1] - a2[i + 1]) / denom if denom != 0 else 0.0
            peaks.append(xs[i] + shift * (xs[1] - xs[0]))
    spacings = np.diff(peaks)
    if spacings.size == 0:
        raise ValueError("no fringe pair found in the window")
    return {"mean_spacing": float(np.mean(spacings)),
            "n_peaks": len(peaks),
            "spacings": [float(s) for s in spacings]}
