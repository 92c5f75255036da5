"""Assembly of branch propagators and their branch sum.

Each branch wave is sqrt(rho_oj) * exp(-D/2) * exp(i phi_j / hbar) where D is
the divergence integral accumulated as a complex logarithm: the real part is
ln|J(t)/J(eps)| and every simple caustic crossing contributes i*pi, so the
prefactor picks up the exp(-i pi/2) branch factor automatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import BranchFields, propagate_density
from .model import InitialCondition, PhysicalSetup, SpaceTimeGrid

__all__ = [
    "CalibrationError",
    "PropagatorField",
    "calibrate_rho_o",
    "resolve_rho_o",
    "assemble_propagator",
    "phase_consistency_deviation",
    "richardson_extrapolate",
]


class CalibrationError(RuntimeError):
    """Auto normalization requested but calibration was not run."""


def calibrate_rho_o(setup: PhysicalSetup, ic: InitialCondition,
                    epsilon: float | None = None) -> float:
    """Analytic common initial density for the regularized Dirac start.

    Position impulse: prod_i m_i / (2 pi hbar eps) (one factor per axis),
    matching the free-kernel magnitude m/(2 pi hbar t) under the transported
    density rho_o * eps / t.  Momentum impulse: (2 pi hbar)^(-d), the
    plane-wave normalization exp(i p x / hbar) / sqrt(2 pi hbar) per axis.
    """
    eps = ic.epsilon if epsilon is None else float(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if ic.kind == "position":
        out = 1.0
        for m in setup.mass:
            out *= m / (2.0 * np.pi * setup.hbar * eps)
        return out
    return (2.0 * np.pi * setup.hbar) ** (-setup.dimension)


def resolve_rho_o(setup: PhysicalSetup, ic: InitialCondition,
                  allow_auto: bool = True) -> tuple[float, str]:
    """Resolve the initial density, returning (value, method)."""
    if isinstance(ic.rho_o, str):
        if not allow_auto:
            raise CalibrationError("rho_o is 'auto' but calibration was disabled")
        return calibrate_rho_o(setup, ic), "analytic-rule"
    return float(ic.rho_o), "explicit"


@dataclass
class PropagatorField:
    """Branch-summed propagator on the grid, with per-branch data retained."""

    setup: PhysicalSetup
    ic: InitialCondition
    grid: SpaceTimeGrid
    branches: BranchFields
    times: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    mask: np.ndarray
    branch_count: np.ndarray
    normalization: dict = field(default_factory=dict)

    def slice_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"time {t} not stored")
        return k

    def branch_psi(self, k: int, b) -> np.ndarray:
        """Complex wave of one BranchSlice on its covered nodes."""
        rho_o = self.normalization["rho_o"]
        amp = np.sqrt(rho_o * np.exp(-b.d_re))
        return amp * np.exp(1j * b.phi / self.setup.hbar) * np.exp(-0.5j * np.pi * b.nu)


def assemble_propagator(branches: BranchFields, setup: PhysicalSetup,
                        ic: InitialCondition, rho_o: float | None = None) -> PropagatorField:
    """Assemble psi_j per branch and the branch sum on every stored slice.

    rho_o defaults to the resolved initial density of the InitialCondition;
    passing rho_o bypasses resolution (used by calibration experiments).
    """
    if rho_o is None:
        rho_o, method = resolve_rho_o(setup, ic)
    else:
        method = "explicit"
    grid = branches.grid
    n_t, n_x = len(branches.times), grid.axis.n
    psi = np.zeros((n_t, n_x), dtype=complex)
    count = np.zeros((n_t, n_x), dtype=np.int64)
    hbar = setup.hbar
    for k, branch_list in enumerate(branches.slices):
        for b in branch_list:
            if b.rho is None:
                propagate_density(branches, ic, rho_o)
            amp = np.sqrt(rho_o * np.exp(-b.d_re))
            psi[k, b.nodes] += amp * np.exp(1j * b.phi / hbar) * np.exp(-0.5j * np.pi * b.nu)
            count[k, b.nodes] += 1
    mask = count > 0
    psi[~mask] = np.nan
    out = PropagatorField(
        setup=setup, ic=ic, grid=grid, branches=branches,
        times=branches.times.copy(), x=grid.x.copy(),
        psi=psi, mask=mask, branch_count=count,
        normalization={"rho_o": float(rho_o), "method": method,
                       "epsilon": float(ic.epsilon)})
    return out


def phase_consistency_deviation(pfield: PropagatorField, k: int) -> float:
    """Largest drift of hbar * unwrapped arg(psi_j) - phi_j from a constant
    over any single branch at slice k (a pure plumbing invariant).
    """
    worst = 0.0
    for b in pfield.branches.slices[k]:
        w = pfield.branch_psi(k, b)
        diff = pfield.setup.hbar * np.unwrap(np.angle(w)) - b.phi
        worst = max(worst, float(np.max(diff) - np.min(diff)))
    return worst


def richardson_extrapolate(fields: list[np.ndarray], eps_values: list[float]) -> np.ndarray:
    """First-order Richardson extrapolation to eps -> 0 on aligned arrays.

    Expects eps_values sorted descending with ratio 2 between neighbors;
    uses the two smallest: psi_ext = 2 psi(eps) - psi(2 eps).
    """
    if len(fields) < 2:
        raise ValueError("need at least two epsilon levels")
    order = np.argsort(eps_values)[::-1]
    smallest, next_up = order[-1], order[-2]
    return 2.0 * fields[smallest] - fields[next_up]
