"""Unitary Schrödinger propagation: potentials and two stepping backends.

``split_step`` is Strang splitting on the periodic grid (exactly unitary,
spectral in space).  ``crank_nicolson`` is the Cayley form with a
five-point Laplacian and hard walls just outside the box, kept as an
independent cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericalFailure
from .qstate import Grid, PhysicalConstants, WaveFunction, density

log = logging.getLogger(__name__)

NORM_DRIFT_TOL = 1e-8

_POTENTIAL_PARAMS = {
    "free": {},
    "harmonic": {"omega": None, "mass": 1.0, "center": 0.0},
    "double_well": {"a": None, "b": None},
    "square_well": {"depth": None, "halfwidth": None},
    "splitter": {"omega": None, "mass": 1.0, "height": None, "ramp": None,
                 "position": 0.0, "width": 0.5},
}


@dataclass(frozen=True)
class Potential:
    """External potential ``V(x, t)``.

    ``double_well`` is ``a x^4 - b x^2``.  ``splitter`` is a harmonic trap
    plus a Gaussian barrier centred at ``position`` whose height rises as
    ``height * sin^2(pi t / (2 ramp))`` for ``0 <= t <= ramp`` and stays
    at ``height`` afterwards.
    """

    kind: str = "free"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _POTENTIAL_PARAMS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        schema = _POTENTIAL_PARAMS[self.kind]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigurationError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        full = {}
        for name, default in schema.items():
            value = self.params.get(name, default)
            if value is None:
                raise ConfigurationError(f"potential {self.kind} requires parameter {name!r}")
            full[name] = float(value)
        for name in ("omega", "mass", "ramp", "width", "halfwidth"):
            if name in full and not full[name] > 0:
                raise ConfigurationError(f"potential parameter {name} must be positive")
        object.__setattr__(self, "params", full)

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    @classmethod
    def free(cls):
        return cls("free")

    @classmethod
    def harmonic(cls, omega, mass=1.0, center=0.0):
        return cls("harmonic", {"omega": omega, "mass": mass, "center": center})

    @classmethod
    def double_well(cls, a, b):
        return cls("double_well", {"a": a, "b": b})

    @property
    def time_dependent(self) -> bool:
        return self.kind == "splitter"

    @property
    def is_free(self) -> bool:
        return self.kind == "free"

    def barrier_height(self, t) -> float:
        p = self.params
        if t >= p["ramp"]:
            return p["height"]
        return p["height"] * math.sin(0.5 * math.pi * max(t, 0.0) / p["ramp"]) ** 2

    def values(self, grid_or_x, t=0.0) -> np.ndarray:
        x = grid_or_x.coordinates if isinstance(grid_or_x, Grid) else np.asarray(grid_or_x, dtype=float)
        p = self.params
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return 0.5 * p["mass"] * p["omega"] ** 2 * (x - p["center"]) ** 2
        if self.kind == "double_well":
            return p["a"] * x**4 - p["b"] * x**2
        if self.kind == "square_well":
            return np.where(np.abs(x) < p["halfwidth"], -p["depth"], 0.0)
        trap = 0.5 * p["mass"] * p["omega"] ** 2 * x**2
        return trap + self.barrier_height(t) * np.exp(-0.5 * ((x - p["position"]) / p["width"]) ** 2)

    def force(self, x, t=0.0):
        """-dV/dx, used by the classical reference integrator."""
        p = self.params
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return -p["mass"] * p["omega"] ** 2 * (x - p["center"])
        if self.kind == "double_well":
            return -(4 * p["a"] * x**3 - 2 * p["b"] * x)
        if self.kind == "splitter":
            u = (x - p["position"]) / p["width"]
            return (-p["mass"] * p["omega"] ** 2 * x
                    + self.barrier_height(t) * u / p["width"] * np.exp(-0.5 * u**2))
        raise ConfigurationError("square_well has no smooth force")


@dataclass(frozen=True)
class StepperConfig:
    backend: str = "split_step"
    dt: float = 1e-3

    def __post_init__(self):
        if self.backend not in ("split_step", "crank_nicolson"):
            raise ConfigurationError(f"unknown stepper backend {self.backend!r}")
        if not self.dt > 0:
            raise ConfigurationError("stepper.dt must be positive")


def recommended_dt(grid: Grid, potential: Potential, constants: PhysicalConstants, t=0.0) -> float:
    """Conservative step heuristic ``0.1 * min(m dx^2 / hbar, hbar / max|V|)``."""
    hbar, m = constants.hbar, constants.mass
    bound = m * grid.spacing**2 / hbar
    vmax = float(np.max(np.abs(potential.values(grid, t))))
    if vmax > 0:
        bound = min(bound, hbar / vmax)
    return 0.1 * bound


class SplitStepper:
    """Strang splitting ``e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}``."""

    def __init__(self, grid, potential, hbar=1.0, mass=1.0):
        self.grid = grid
        self.potential = potential
        self.hbar = hbar
        self.mass = mass
        self._kin = {}
        self._half_kick = {}

    def _kinetic(self, dt):
        if dt not in self._kin:
            k2 = self.grid.wavenumbers**2
            self._kin[dt] = np.exp(-1j * self.hbar * k2 * dt / (2 * self.mass))
        return self._kin[dt]

    def _kick(self, t, dt):
        if self.potential.time_dependent:
            v = self.potential.values(self.grid, t)
            return np.exp(-0.5j * v * dt / self.hbar)
        if dt not in self._half_kick:
            v = self.potential.values(self.grid)
            self._half_kick[dt] = np.exp(-0.5j * v * dt / self.hbar)
        return self._half_kick[dt]

    def advance(self, amps, t, dt, n_steps):
        if self.potential.is_free:
            # kinetic propagator is exact for any duration
            return np.fft.ifft(self._kinetic(dt * n_steps) * np.fft.fft(amps))
        kin = self._kinetic(dt)
        a = amps
        for i in range(n_steps):
            kick = self._kick(t + (i + 0.5) * dt, dt)
            a = kick * np.fft.ifft(kin * np.fft.fft(kick * a))
        return a


class CrankNicolsonStepper:
    """Cayley form ``(1 + iH dt/2) psi' = (1 - iH dt/2) psi``, hard-wall boundaries."""

    def __init__(self, grid, potential, hbar=1.0, mass=1.0):
        self.grid = grid
        self.potential = potential
        self.hbar = hbar
        n, dx = grid.points, grid.spacing
        c = hbar**2 / (2 * mass * dx**2)
        # fourth-order five-point stencil for -d^2/dx^2
        self._kin = sparse.diags(
            [np.full(n - 2, c / 12), np.full(n - 1, -16 * c / 12), np.full(n, 30 * c / 12),
             np.full(n - 1, -16 * c / 12), np.full(n - 2, c / 12)],
            [-2, -1, 0, 1, 2], format="csc", dtype=np.complex128,
        )
        self._cache = {}

    def _operators(self, t, dt):
        key = dt if not self.potential.time_dependent else None
        if key is not None and key in self._cache:
            return self._cache[key]
        v = self.potential.values(self.grid, t)
        h = self._kin + sparse.diags(v.astype(np.complex128), format="csc")
        eye = sparse.identity(self.grid.points, dtype=np.complex128, format="csc")
        a = 0.5j * dt / self.hbar
        ops = (splu((eye + a * h).tocsc()), (eye - a * h).tocsr())
        if key is not None:
            self._cache[key] = ops
        return ops

    def advance(self, amps, t, dt, n_steps):
        a = np.asarray(amps, dtype=np.complex128)
        for i in range(n_steps):
            lu, rhs = self._operators(t + (i + 0.5) * dt, dt)
            a = lu.solve(rhs @ a)
        return a


def make_stepper(grid, potential, cfg: StepperConfig, constants=None):
    hbar = constants.hbar if constants else 1.0
    mass = constants.mass if constants else 1.0
    cls = SplitStepper if cfg.backend == "split_step" else CrankNicolsonStepper
    return cls(grid, potential, hbar, mass)


def _advance_checked(stepper, psi, duration, dt):
    if duration < 0:
        raise ConfigurationError("cannot evolve backwards in time")
    if duration == 0:
        return psi
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    amps = stepper.advance(psi.amplitudes, psi.time, duration / n_steps, n_steps)
    out = WaveFunction(psi.grid, amps, psi.time + duration)
    drift = abs(out.norm - 1.0)
    if drift > NORM_DRIFT_TOL:
        raise NumericalFailure(f"norm drift {drift:.3e} exceeds {NORM_DRIFT_TOL:g}")
    return out


def step(psi: WaveFunction, potential: Potential, cfg: StepperConfig, constants=None) -> WaveFunction:
    """Advance by one step ``cfg.dt``."""
    stepper = make_stepper(psi.grid, potential, cfg, constants)
    return _advance_checked(stepper, psi, cfg.dt, cfg.dt)


def evolve(psi, potential, cfg, duration, constants=None, stepper=None) -> WaveFunction:
    """Advance by ``duration`` using steps no longer than ``cfg.dt``.

    The last step is not truncated: ``duration`` is divided into the
    smallest whole number of equal steps not exceeding ``cfg.dt``.
    A prebuilt ``stepper`` may be passed to reuse cached factors.
    """
    if stepper is None:
        stepper = make_stepper(psi.grid, potential, cfg, constants)
    return _advance_checked(stepper, psi, duration, cfg.dt)


def branch_weights(psi: WaveFunction, cut=0.0):
    """Masses ``(left, right)`` on either side of ``cut``."""
    rho = density(psi)
    x = psi.grid.coordinates
    right = psi.grid.integrate(rho[x > cut])
    return psi.norm - right, right


def split_packet(psi, splitter: Potential, cfg: StepperConfig, constants=None, hold=0.0) -> WaveFunction:
    """Raise the splitter barrier over its ramp (plus ``hold``), starting at t=0.

    Returns the state at ``t = ramp + hold``: two packets on either side of
    the barrier with weights set by the barrier offset.
    """
    if splitter.kind != "splitter":
        raise ConfigurationError("split_packet needs a 'splitter' potential")
    start = psi.with_amplitudes(psi.amplitudes, time=0.0)
    duration = splitter.params["ramp"] + hold
    return evolve(start, splitter, cfg, duration, constants)


def calibrate_splitter(psi, splitter: Potential, cfg, target_right, constants=None,
                       bracket=(-1.5, 1.5), xtol=1e-5):
    """Barrier position giving right-branch weight ``target_right`` after the ramp.

    Bisection over the collapse-free evolution; ``bracket`` is in units of
    the barrier width around the trap centre.
    """
    w = splitter.params["width"]

    def miss(pos):
        pot = Potential("splitter", {**splitter.params, "position": pos})
        out = split_packet(psi, pot, cfg, constants)
        return branch_weights(out, pos)[1] - target_right

    return brentq(miss, bracket[0] * w, bracket[1] * w, xtol=xtol)
