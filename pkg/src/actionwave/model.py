"""Domain model: physical setups, scenario catalog, grids, and field containers.

Everything here is an immutable value object; instances can be shared freely
(including across threads and processes) once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

__all__ = [
    "ScenarioError",
    "PotentialSpec",
    "VectorPotentialSpec",
    "PhysicalSetup",
    "InitialCondition",
    "SpatialAxis",
    "TimeAxis",
    "SpaceTimeGrid",
    "ComplexField",
    "WaveField",
    "FanSpec",
    "make_scenario",
    "scenario_fan",
    "eval_potential",
    "SCENARIO_IDS",
]


class ScenarioError(ValueError):
    """Invalid scenario id, override key, or override value."""


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Tagged one-dimensional potential.

    Supported kinds:

    ==========  ===========================  =================
    kind        V(x)                         parameters
    ==========  ===========================  =================
    free        0                            ()
    linear      -f*x                         (f,)     force f
    harmonic    m*omega^2*x^2/2              (omega,) needs mass
    quartic     lam*x^4                      (lam,)
    polynomial  sum_k c_k x^k                (c_0, c_1, ...)
    ==========  ===========================  =================

    The harmonic potential closes over the particle mass so the catalog
    formula V = m omega^2 x^2 / 2 does not depend on call-site context.
    """

    kind: str
    params: tuple = ()
    mass: float = 1.0

    _KINDS = ("free", "linear", "harmonic", "quartic", "polynomial")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ScenarioError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "linear":
            return -self.params[0] * x
        if self.kind == "harmonic":
            w = self.params[0]
            return 0.5 * self.mass * w * w * x * x
        if self.kind == "quartic":
            return self.params[0] * x ** 4
        return np.polynomial.polynomial.polyval(x, self.params)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "linear":
            return np.full_like(x, -self.params[0])
        if self.kind == "harmonic":
            w = self.params[0]
            return self.mass * w * w * x
        if self.kind == "quartic":
            return 4.0 * self.params[0] * x ** 3
        dcoef = np.polynomial.polynomial.polyder(self.params)
        return np.polynomial.polynomial.polyval(x, dcoef)

    def curvature(self, x):
        """Second derivative V''(x), used by the variational equations."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("free", "linear"):
            return np.zeros_like(x)
        if self.kind == "harmonic":
            w = self.params[0]
            return np.full_like(x, self.mass * w * w)
        if self.kind == "quartic":
            return 12.0 * self.params[0] * x * x
        d2 = np.polynomial.polynomial.polyder(self.params, 2)
        return np.polynomial.polynomial.polyval(x, d2)


@dataclass(frozen=True)
class VectorPotentialSpec:
    """Vector potential A(x). Only the identically-zero case is exercised;
    the residual operator accepts it so the q*A terms have a home."""

    kind: str = "zero"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)


# ---------------------------------------------------------------------------
# setup / initial condition / grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalSetup:
    """Stage for a run: dimension, diagonal mass matrix, hbar, V, A, charge."""

    dimension: int
    mass: tuple
    hbar: float
    potential: PotentialSpec
    vector_potential: VectorPotentialSpec = field(default_factory=VectorPotentialSpec)
    charge: float = 0.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ScenarioError("dimension must be 1 or 2")
        object.__setattr__(self, "mass", tuple(float(m) for m in self.mass))
        if len(self.mass) != self.dimension:
            raise ScenarioError("need one mass entry per dimension")
        if any(m <= 0 for m in self.mass):
            raise ScenarioError("mass entries must be positive")
        if self.hbar <= 0:
            raise ScenarioError("hbar must be positive")

    @property
    def m(self) -> float:
        """Mass of the first (or only) axis."""
        return self.mass[0]


@dataclass(frozen=True)
class InitialCondition:
    """Dirac start of a propagator, regularized by the start time epsilon.

    Exactly one of a position impulse (kind='position', point=x_o) or a
    momentum impulse (kind='momentum', point=p_o) is specified.  rho_o is
    either 'auto' (calibrated analytically at assembly time) or an explicit
    positive initial density value assigned at t=epsilon.
    """

    kind: str
    point: float
    epsilon: float
    rho_o: Union[str, float] = "auto"

    def __post_init__(self):
        if self.kind not in ("position", "momentum"):
            raise ScenarioError("initial condition kind must be 'position' or 'momentum'")
        if self.epsilon <= 0:
            raise ScenarioError("epsilon must be positive")
        if isinstance(self.rho_o, str):
            if self.rho_o != "auto":
                raise ScenarioError("rho_o must be 'auto' or a positive number")
        elif self.rho_o <= 0:
            raise ScenarioError("rho_o must be positive")


@dataclass(frozen=True)
class SpatialAxis:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ScenarioError("spatial axis needs at least 8 points")
        if not self.x_max > self.x_min:
            raise ScenarioError("x_max must exceed x_min")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)


@dataclass(frozen=True)
class TimeAxis:
    """Uniform output times epsilon, epsilon+dt, ..., t_max."""

    epsilon: float
    t_max: float
    n_t: int

    def __post_init__(self):
        if self.n_t < 8:
            raise ScenarioError("time axis needs at least 8 points")
        if self.epsilon <= 0 or not self.t_max > self.epsilon:
            raise ScenarioError("need 0 < epsilon < t_max")

    @property
    def dt(self) -> float:
        return (self.t_max - self.epsilon) / (self.n_t - 1)

    @property
    def times(self) -> np.ndarray:
        return self.epsilon + self.dt * np.arange(self.n_t)

    def index_of(self, t: float) -> int:
        """Nearest axis index for time t (must land within half a step)."""
        k = int(round((t - self.epsilon) / self.dt))
        if k < 0 or k >= self.n_t or abs(self.epsilon + k * self.dt - t) > 0.51 * self.dt:
            raise ScenarioError(f"time {t} is not on the output axis")
        return k


@dataclass(frozen=True)
class SpaceTimeGrid:
    axes: tuple          # tuple of SpatialAxis, one per dimension
    time: TimeAxis

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def axis(self) -> SpatialAxis:
        return self.axes[0]

    @property
    def x(self) -> np.ndarray:
        return self.axes[0].x

    @property
    def h(self) -> float:
        return self.axes[0].h


@dataclass
class ComplexField:
    """Complex samples on (stored time slices) x (grid nodes).

    mask[i, j] is True where the sample is valid; invalid nodes (outside any
    branch, or inside a caustic window) hold NaN and are excluded from every
    norm.  Entries on unmasked nodes are guaranteed finite by validate().
    """

    times: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        bad = self.mask & ~np.isfinite(self.psi)
        if np.any(bad):
            raise ValueError(f"{int(bad.sum())} non-finite samples on unmasked nodes")

    def slice_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 + 1e-9 * abs(t):
            raise KeyError(f"time {t} not stored (nearest {self.times[k]})")
        return k


# a general superposed wave shares the gridded-complex-field container
WaveField = ComplexField


@dataclass(frozen=True)
class FanSpec:
    """Fan of characteristics: uniform labels in [lam_min, lam_max]."""

    lam_min: float
    lam_max: float
    n: int = 2001
    substeps: int = 1

    def __post_init__(self):
        if self.n < 8:
            raise ScenarioError("fan needs at least 8 characteristics")
        if not self.lam_max > self.lam_min:
            raise ScenarioError("lam_max must exceed lam_min")

    @property
    def lambdas(self) -> np.ndarray:
        return np.linspace(self.lam_min, self.lam_max, self.n)


# ---------------------------------------------------------------------------
# scenario catalog
# ---------------------------------------------------------------------------

SCENARIO_IDS = ("free", "linear", "harmonic", "quartic", "two-source")

_COMMON_DEFAULTS = dict(
    m=1.0, hbar=1.0, epsilon=1e-3,
    x_min=-8.0, x_max=8.0, n=801,
    dt=1e-3,
)

_SCENARIO_DEFAULTS = {
    "free":       dict(x_o=0.0, t_max=1.2, fan_min=-8.0, fan_max=8.0, fan_n=2001, substeps=1),
    "linear":     dict(x_o=0.0, force=1.0, t_max=1.2, fan_min=-8.0, fan_max=8.0, fan_n=2001, substeps=1),
    "harmonic":   dict(x_o=1.0, omega=1.0, t_max=4.2, fan_min=-8.0, fan_max=8.0, fan_n=2001, substeps=1),
    # quartic fan [-6, 6] keeps the first caustic at t ~ 0.556; t_max stays below it
    "quartic":    dict(x_o=0.0, lam=1.0, t_max=0.5, fan_min=-6.0, fan_max=6.0, fan_n=2001, substeps=2),
    "two-source": dict(x_o=-1.0, sources=(-1.0, 1.0), rel_phase=0.0, t_max=1.2,
                       fan_min=-10.0, fan_max=10.0, fan_n=2001, substeps=1),
}

_POSITIVE_KEYS = ("m", "hbar", "epsilon", "omega", "dt", "t_max", "sigma")


def make_scenario(name: str, overrides: dict | None = None):
    """Build a validated (PhysicalSetup, InitialCondition, SpaceTimeGrid) triple.

    Parameters
    ----------
    name : one of SCENARIO_IDS
    overrides : optional map of parameter overrides (see the catalog keys);
        unknown keys and non-positive mass/hbar/epsilon raise ScenarioError.

    Construction is deterministic: identical inputs give identical objects.
    """
    if name not in SCENARIO_IDS:
        raise ScenarioError(f"unknown scenario {name!r}; known: {', '.join(SCENARIO_IDS)}")
    params = dict(_COMMON_DEFAULTS)
    params.update(_SCENARIO_DEFAULTS[name])
    overrides = dict(overrides or {})
    for key, val in overrides.items():
        if key not in params and key not in ("p_o",):
            raise ScenarioError(f"unknown override {key!r} for scenario {name!r}")
        params[key] = val
    for key in _POSITIVE_KEYS:
        if key in params and float(params[key]) <= 0:
            raise ScenarioError(f"override {key}={params[key]} must be positive")
    if int(params.get("n", 0)) < 8 or int(params.get("fan_n", 8)) < 8:
        raise ScenarioError("grid and fan sizes must be at least 8")

    m = float(params["m"])
    if name in ("free", "two-source"):
        pot = PotentialSpec("free")
    elif name == "linear":
        pot = PotentialSpec("linear", (params["force"],))
    elif name == "harmonic":
        pot = PotentialSpec("harmonic", (params["omega"],), mass=m)
    else:
        pot = PotentialSpec("quartic", (params["lam"],))

    setup = PhysicalSetup(dimension=1, mass=(m,), hbar=float(params["hbar"]), potential=pot)

    if "p_o" in params:
        ic = InitialCondition("momentum", float(params["p_o"]), float(params["epsilon"]))
    else:
        ic = InitialCondition("position", float(params["x_o"]), float(params["epsilon"]))

    eps, t_max, dt = float(params["epsilon"]), float(params["t_max"]), float(params["dt"])
    n_t = int(round((t_max - eps) / dt)) + 1
    grid = SpaceTimeGrid(
        axes=(SpatialAxis(float(params["x_min"]), float(params["x_max"]), int(params["n"])),),
        time=TimeAxis(eps, eps + dt * (n_t - 1), n_t),
    )
    return setup, ic, grid


def scenario_fan(name: str, overrides: dict | None = None) -> FanSpec:
    """Catalog fan defaults for a scenario (label window, size, ODE substeps)."""
    if name not in SCENARIO_IDS:
        raise ScenarioError(f"unknown scenario {name!r}")
    params = dict(_COMMON_DEFAULTS)
    params.update(_SCENARIO_DEFAULTS[name])
    params.update(overrides or {})
    return FanSpec(float(params["fan_min"]), float(params["fan_max"]),
                   int(params["fan_n"]), int(params["substeps"]))


def eval_potential(setup: PhysicalSetup, x):
    """Return the consistent pair (V(x), dV/dx(x)) for the setup's potential."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("position must be finite")
    return setup.potential.value(x), setup.potential.gradient(x)
