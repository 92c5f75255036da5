"""Hamiltonian characteristics and per-branch gridded action/density fields.

A fan of characteristics is launched from the Dirac initial point at t=0 and
integrated with a fixed-step RK4 (positions, momenta, accumulated action, and
the variational pair (dx, dp) whose dx component is the fan Jacobian
J = dx(t)/dlambda).  All accumulated time integrals (divergence integral D,
clock fields) start at the regularization time epsilon; the trajectory
geometry itself carries no epsilon error.

The divergence of the classical velocity field along a path equals
d(ln J)/dt = dp/(m dx), so the divergence integral is accumulated as
D(t) = ln|J(t)/J(eps)| plus i*pi per caustic crossing (sign change of J).

Characteristics are independent; the integration is a plain vectorized map
over the fan with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .model import FanSpec, InitialCondition, PhysicalSetup, SpaceTimeGrid

__all__ = [
    "FanGapError",
    "Characteristic",
    "CharacteristicFan",
    "integrate_fan",
    "integrate_characteristic",
    "BranchSlice",
    "BranchFields",
    "build_branch_fields",
    "propagate_density",
    "laplacian_action",
    "laplacian_route_mismatch",
]

CAUSTIC_ETA = 1e-3      # |J| below eta * running max |J| is inside the caustic window
MIN_BRANCH_POINTS = 4


class FanGapError(RuntimeError):
    """Fan too sparse: adjacent characteristic endpoints more than 2h apart."""


# ---------------------------------------------------------------------------
# fan integration
# ---------------------------------------------------------------------------

def _rhs(setup: PhysicalSetup, x, p, dx, dp):
    m = setup.m
    pot = setup.potential
    vpp = pot.curvature(x)
    return (p / m,
            -pot.gradient(x),
            dp / m,
            -vpp * dx,
            p * p / (2.0 * m) - pot.value(x))


def _rk4_step(setup, x, p, dx, dp, s, h):
    k1 = _rhs(setup, x, p, dx, dp)
    k2 = _rhs(setup, x + 0.5 * h * k1[0], p + 0.5 * h * k1[1],
              dx + 0.5 * h * k1[2], dp + 0.5 * h * k1[3])
    k3 = _rhs(setup, x + 0.5 * h * k2[0], p + 0.5 * h * k2[1],
              dx + 0.5 * h * k2[2], dp + 0.5 * h * k2[3])
    k4 = _rhs(setup, x + h * k3[0], p + h * k3[1], dx + h * k3[2], dp + h * k3[3])
    c = h / 6.0
    return (x + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            p + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            dx + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
            dp + c * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
            s + c * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4]))


@dataclass
class CharacteristicFan:
    """Fan of characteristics sampled on stored slice times.

    All per-slice arrays are shaped (n_times, n_fan).  J is the fan Jacobian
    dx/dlambda from the variational equations, nu counts its sign changes
    since launch, d_re = ln|J/J(eps)|, and lap = dp/(m dx) = d(ln J)/dt is
    the Laplacian of the action along the path.
    """

    setup: PhysicalSetup
    ic: InitialCondition
    lambdas: np.ndarray
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    J: np.ndarray
    nu: np.ndarray
    d_re: np.ndarray
    lap: np.ndarray
    energy: np.ndarray
    j_max: np.ndarray            # running max |J| per characteristic
    caustic_times: np.ndarray
    dense_lnj: Optional[dict] = None   # u=ln(t) -> t*lap samples (generic clocks)

    @property
    def n(self) -> int:
        return self.lambdas.size

    def usable(self, k: int) -> np.ndarray:
        """Characteristics outside the caustic window at slice k."""
        return np.abs(self.J[k]) >= CAUSTIC_ETA * self.j_max

    def transport_deviation(self) -> float:
        """max |exp(-Re D) * J(t)/J(eps)| - 1 over unmasked samples.

        Continuity-transported density against direct Jacobian transport.
        """
        dev = 0.0
        for k in range(len(self.times)):
            u = self.usable(k)
            if not np.any(u):
                continue
            ratio = np.exp(-self.d_re[k][u]) * np.abs(self.J[k][u] / self.J[0][u])
            dev = max(dev, float(np.max(np.abs(ratio - 1.0))))
        return dev

    def energy_drift(self) -> float:
        """max relative Hamiltonian drift |H(t)-H(eps)|/|H(eps)| over the fan.

        Characteristics with |H(eps)| far below the fan's energy scale (a
        rest start at a potential zero has H = 0 exactly) are normalized by
        that scale instead, to keep 0/0 out of the invariant.
        """
        h0 = self.energy[0]
        floor = 1e-6 * float(np.max(np.abs(h0))) + 1e-300
        scale = np.maximum(np.abs(h0), floor)
        return float(np.max(np.abs(self.energy - h0[None, :]) / scale[None, :]))

    def characteristic(self, i: int) -> "Characteristic":
        return Characteristic(
            label=float(self.lambdas[i]), times=self.times.copy(),
            x=self.x[:, i].copy(), p=self.p[:, i].copy(), S=self.S[:, i].copy(),
            J=self.J[:, i].copy(), nu=self.nu[:, i].copy(),
            D=self.d_re[:, i].copy(), lap=self.lap[:, i].copy(),
            energy=self.energy[:, i].copy())


@dataclass
class Characteristic:
    """One classical trajectory with accumulated action and transport data."""

    label: float
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    J: np.ndarray
    nu: np.ndarray
    D: np.ndarray
    lap: np.ndarray
    energy: np.ndarray


def integrate_fan(setup: PhysicalSetup, ic: InitialCondition, fan: FanSpec,
                  grid: SpaceTimeGrid, store_times: Optional[np.ndarray] = None,
                  keep_dense_lnj: bool = False) -> CharacteristicFan:
    """Integrate the fan from the Dirac start at t=0 over the grid time axis.

    Parameters
    ----------
    store_times : optional subset of the output time axis to retain (slice
        storage); defaults to the full axis.  The first stored slice is always
        epsilon, which anchors J(eps) and the divergence integral.
    keep_dense_lnj : retain per-step (ln t, t * dlnJ/dt) traces for clock
        integration with a generic rescaling function.

    The stored lap is evaluated pointwise from the variational state (no
    differencing); D is accumulated as ln|J(t)/J(eps)|.
    """
    axis = grid.time
    eps, dt = axis.epsilon, axis.dt
    if store_times is None:
        store_times = axis.times
    store_times = np.asarray(store_times, dtype=float)
    if abs(store_times[0] - eps) > 1e-12:
        store_times = np.concatenate(([eps], store_times))
    store_idx = np.unique([axis.index_of(t) for t in store_times])

    lam = fan.lambdas
    n = lam.size
    m = setup.m
    if ic.kind == "position":
        x = np.full(n, float(ic.point))
        p = lam.astype(float).copy()
        dx = np.zeros(n)
        dp = np.ones(n)
        s = np.zeros(n)
    else:
        x = lam.astype(float).copy()
        p = np.full(n, float(ic.point))
        dx = np.ones(n)
        dp = np.zeros(n)
        s = p * x            # phi(x, 0) = p_o x for a momentum impulse

    nu = np.zeros(n, dtype=np.int64)
    j_max = np.abs(dx).copy()
    caustics = []
    dense_u, dense_g = [], []

    n_store = store_idx.size
    out = dict(x=np.empty((n_store, n)), p=np.empty((n_store, n)),
               S=np.empty((n_store, n)), J=np.empty((n_store, n)),
               nu=np.empty((n_store, n), dtype=np.int64),
               lap=np.empty((n_store, n)), energy=np.empty((n_store, n)))
    slot = {k: i for i, k in enumerate(store_idx)}

    def record(axis_index, t):
        i = slot[axis_index]
        out["x"][i] = x
        out["p"][i] = p
        out["S"][i] = s
        out["J"][i] = dx
        out["nu"][i] = nu
        with np.errstate(divide="ignore", invalid="ignore"):
            out["lap"][i] = dp / (m * dx)
        out["energy"][i] = p * p / (2.0 * m) + setup.potential.value(x)

    def advance(t0, t1, nsub):
        nonlocal x, p, dx, dp, s, nu, j_max
        h = (t1 - t0) / nsub
        for j in range(nsub):
            old_sign = np.sign(dx)
            x, p, dx, dp, s = _rk4_step(setup, x, p, dx, dp, s, h)
            crossed = (np.sign(dx) != old_sign) & (old_sign != 0)
            if np.any(crossed):
                nu[crossed] += 1
                caustics.append(t0 + (j + 1) * h)
            np.maximum(j_max, np.abs(dx), out=j_max)
            if keep_dense_lnj:
                tt = t0 + (j + 1) * h
                dense_u.append(np.log(tt))
                with np.errstate(divide="ignore", invalid="ignore"):
                    dense_g.append(tt * dp / (m * dx))

    # launch leg 0 -> eps, then march the output axis
    advance(0.0, eps, max(1, fan.substeps))
    if 0 in slot:
        record(0, eps)
    for k in range(1, axis.n_t):
        advance(eps + (k - 1) * dt, eps + k * dt, fan.substeps)
        if k in slot:
            record(k, eps + k * dt)

    times = axis.times[store_idx]
    j_eps = out["J"][0]
    nu_eps = out["nu"][0]
    with np.errstate(divide="ignore", invalid="ignore"):
        d_re = np.log(np.abs(out["J"] / j_eps[None, :]))
    dense = None
    if keep_dense_lnj:
        dense = {"u": np.asarray(dense_u), "g": np.asarray(dense_g)}
    # caustic crossings counted from eps on
    return CharacteristicFan(
        setup=setup, ic=ic, lambdas=lam.copy(), times=times,
        x=out["x"], p=out["p"], S=out["S"], J=out["J"],
        nu=out["nu"] - nu_eps[None, :], d_re=d_re, lap=out["lap"],
        energy=out["energy"], j_max=j_max,
        caustic_times=_cluster(np.asarray(caustics), dt), dense_lnj=dense)


def _cluster(times: np.ndarray, tol: float) -> np.ndarray:
    if times.size == 0:
        return times
    times = np.sort(times)
    keep = [times[0]]
    for t in times[1:]:
        if t - keep[-1] > tol:
            keep.append(t)
    return np.asarray(keep)


def integrate_characteristic(setup: PhysicalSetup, ic: InitialCondition,
                             lam: float, grid: SpaceTimeGrid,
                             store_times=None) -> Characteristic:
    """Single-label convenience wrapper around integrate_fan.

    The variational pair is seeded for the fan the label belongs to
    (dx, dp) = (0, 1) for a position impulse, (1, 0) for a momentum impulse,
    so J carries the fan Jacobian even for a lone characteristic.
    """
    pad = max(1e-6, 1e-6 * abs(lam))
    fan = FanSpec(lam - pad, lam + pad, n=9)   # odd count puts lam at the center
    full = integrate_fan(setup, ic, fan, grid, store_times=store_times)
    ch = full.characteristic(4)
    ch.label = float(lam)
    return ch


# ---------------------------------------------------------------------------
# branch decomposition and gridding
# ---------------------------------------------------------------------------

@dataclass
class BranchSlice:
    """One monotone sheet of the lambda -> x map at a fixed time, gridded.

    Fields live on grid nodes [node_start, node_stop); phi is the action,
    lap the characteristic-transported Laplacian of the action, d_re the
    divergence integral, rho the transported density (filled by
    propagate_density).  nu is the caustic-crossing count shared by the
    sheet's characteristics since epsilon.
    """

    t: float
    t_index: int
    j: int
    nu: int
    orientation: int
    lam_range: tuple
    node_start: int
    node_stop: int
    phi: np.ndarray
    lap: np.ndarray
    d_re: np.ndarray
    rho: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    @property
    def nodes(self) -> slice:
        return slice(self.node_start, self.node_stop)


@dataclass
class BranchFields:
    """Per-time-slice branch decomposition of a fan on a spatial grid."""

    grid: SpaceTimeGrid
    times: np.ndarray
    slices: list            # list (per stored time) of lists of BranchSlice
    caustic_times: np.ndarray
    eta: float = CAUSTIC_ETA

    def branch_count(self, k: int) -> np.ndarray:
        counts = np.zeros(self.grid.axis.n, dtype=np.int64)
        for b in self.slices[k]:
            counts[b.nodes] += 1
        return counts

    def coverage(self, k: int) -> np.ndarray:
        return self.branch_count(k) > 0

    def mask_fraction(self) -> float:
        covered = sum(int(self.coverage(k).sum()) for k in range(len(self.times)))
        total = self.grid.axis.n * len(self.times)
        return 1.0 - covered / total


def _monotone_runs(x, usable, sign, nu):
    """Maximal index runs with constant (sign J, nu) on usable points."""
    n = x.size
    runs = []
    i = 0
    while i < n:
        if not usable[i]:
            i += 1
            continue
        j = i + 1
        while j < n and usable[j] and sign[j] == sign[i] and nu[j] == nu[i]:
            j += 1
        runs.append((i, j))
        i = j
    return runs


def _strictify(xs, idx):
    """Subset of idx on which xs is strictly monotone (ascending)."""
    keep = [idx[0]]
    for i in idx[1:]:
        if xs[i] > xs[keep[-1]]:
            keep.append(i)
    return np.asarray(keep)


def build_branch_fields(fan: CharacteristicFan, grid: SpaceTimeGrid,
                        gap_factor: float = 2.0,
                        interpolant: str = "spline") -> BranchFields:
    """Split the fan into monotone branches per slice and grid the fields.

    At each stored time the lambda -> x map is cut at Jacobian sign changes
    (and at caustic-window exclusions |J| < eta * max|J|) into monotone
    segments.  Fields (phi, lap, D) are interpolated onto grid nodes inside
    each segment with a C2 cubic spline; nodes covered by no segment stay
    masked.

    Raises FanGapError when adjacent endpoints inside the grid window are
    more than gap_factor * h apart at some slice.
    """
    x_nodes = grid.x
    h = grid.h
    make = CubicSpline if interpolant == "spline" else PchipInterpolator
    all_slices = []
    for k, t in enumerate(fan.times):
        xs = fan.x[k]
        usable = fan.usable(k)
        sign = np.sign(fan.J[k]).astype(int)
        runs = _monotone_runs(xs, usable, sign, fan.nu[k])
        branches = []
        j_counter = 0
        for (i0, i1) in runs:
            idx = np.arange(i0, i1)
            if idx.size < MIN_BRANCH_POINTS:
                continue
            if xs[idx[-1]] < xs[idx[0]]:
                idx = idx[::-1]
            idx = _strictify(xs, idx)
            if idx.size < MIN_BRANCH_POINTS:
                continue
            seg_x = xs[idx]
            in_window = (seg_x[:-1] <= x_nodes[-1] + h) & (seg_x[1:] >= x_nodes[0] - h)
            gaps = np.diff(seg_x)
            if np.any(in_window & (gaps > gap_factor * h)):
                worst = float(np.max(gaps[in_window]))
                raise FanGapError(
                    f"fan gap {worst:.3g} exceeds {gap_factor}*h={gap_factor * h:.3g} "
                    f"at t={t:.6g}; increase fan density")
            lo = int(np.searchsorted(x_nodes, seg_x[0], side="left"))
            hi = int(np.searchsorted(x_nodes, seg_x[-1], side="right"))
            if hi - lo < 1:
                continue
            target = x_nodes[lo:hi]
            phi = make(seg_x, fan.S[k][idx])(target)
            lap = make(seg_x, fan.lap[k][idx])(target)
            d_re = make(seg_x, fan.d_re[k][idx])(target)
            branches.append(BranchSlice(
                t=float(t), t_index=k, j=j_counter,
                nu=int(fan.nu[k][idx[0]]),
                orientation=int(sign[idx[0]]),
                lam_range=(float(fan.lambdas[min(idx)]), float(fan.lambdas[max(idx)])),
                node_start=lo, node_stop=hi,
                phi=phi, lap=lap, d_re=d_re))
            j_counter += 1
        all_slices.append(branches)
    return BranchFields(grid=grid, times=fan.times.copy(), slices=all_slices,
                        caustic_times=fan.caustic_times.copy())


def propagate_density(branches: BranchFields, ic: InitialCondition,
                      rho_o: float) -> BranchFields:
    """Fill the transported density rho = rho_o * exp(-D) on every branch.

    rho_o is the common density assigned to all branches at t=eps; each
    branch created by a later fold inherits the transported density of its
    parent characteristic segment (D is continuous along each path).
    """
    for branch_list in branches.slices:
        for b in branch_list:
            b.rho = rho_o * np.exp(-b.d_re)
    return branches


def laplacian_action(branch: BranchSlice, grid: SpaceTimeGrid,
                     setup: PhysicalSetup) -> np.ndarray:
    """Second-order central finite difference of the gridded action,
    contracted with the inverse mass (interior nodes of the branch).

    Returns an array aligned with branch.nodes; the two edge nodes are NaN.
    Raises ValueError when the branch has fewer than 3 interior nodes.
    """
    if branch.node_stop - branch.node_start < 5:
        raise ValueError("branch covers fewer than 3 interior grid nodes")
    h = grid.h
    out = np.full(branch.node_stop - branch.node_start, np.nan)
    phi = branch.phi
    out[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (h * h * setup.m)
    return out


def laplacian_route_mismatch(branch: BranchSlice, grid: SpaceTimeGrid,
                             setup: PhysicalSetup) -> float:
    """Scale-relative disagreement between the finite-difference Laplacian of
    the gridded action and the characteristic-transported d(ln J)/dt field.
    """
    fd = laplacian_action(branch, grid, setup)
    ref = branch.lap
    scale = float(np.max(np.abs(ref)))
    return float(np.nanmax(np.abs(fd[1:-1] - ref[1:-1]))) / scale
