"""Run configuration: dataclasses, validation and the YAML document format.

A configuration document has the sections ``constants``, ``grid``,
``potential``, ``initial``, ``stepper``, ``solver``, ``scheduler`` and
``run``; an optional top-level ``preset`` names a base configuration that
the remaining keys override.  Validation collects every problem before
failing, so a bad document is reported in one pass.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .errors import ConfigurationError
from .propagator import Potential, StepperConfig
from .qstate import Grid, PhysicalConstants, WaveFunction, make_gaussian, make_superposition
from .solver import SolverConfig

SCHEMA_VERSION = 1

INITIAL_KINDS = {
    "gaussian": {"center": 0.0, "width": None, "momentum": 0.0},
    "superposition": {"centers": None, "widths": None, "coefficients": None, "momenta": None},
    "harmonic_ground": {"omega": None, "center": 0.0, "momentum": 0.0},
}


@dataclass(frozen=True)
class InitialState:
    """Recipe for the starting wavefunction.

    ``superposition`` takes lists ``centers``, ``widths`` and complex or
    real ``coefficients`` (optionally ``momenta``); ``harmonic_ground`` is the
    oscillator ground state for ``omega`` displaced to ``center``.
    """

    kind: str = "gaussian"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ConfigurationError(f"unknown initial kind {self.kind!r}")
        schema = INITIAL_KINDS[self.kind]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigurationError(f"unknown initial.{self.kind} parameters: {sorted(unknown)}")
        missing = [k for k, v in schema.items() if v is None and k not in self.params and k != "momenta"]
        if missing:
            raise ConfigurationError(f"initial {self.kind} requires {missing}")

    def __hash__(self):
        return hash((self.kind, json.dumps(self.params, sort_keys=True, default=str)))

    def build(self, grid: Grid, constants: PhysicalConstants) -> WaveFunction:
        p = {**{k: v for k, v in INITIAL_KINDS[self.kind].items() if v is not None}, **self.params}
        if self.kind == "gaussian":
            return make_gaussian(grid, p["center"], p["width"], p["momentum"], constants.hbar)
        if self.kind == "harmonic_ground":
            width = math.sqrt(constants.hbar / (2.0 * constants.mass * p["omega"]))
            return make_gaussian(grid, p["center"], width, p["momentum"], constants.hbar)
        centers, widths = list(p["centers"]), list(p["widths"])
        coeffs = [_complex(c) for c in p["coefficients"]]
        momenta = list(p.get("momenta") or [0.0] * len(centers))
        if not len(centers) == len(widths) == len(coeffs) == len(momenta):
            raise ConfigurationError("superposition lists must have equal lengths")
        packets = [make_gaussian(grid, c, w, k) for c, w, k in zip(centers, widths, momenta)]
        return make_superposition(grid, packets, coeffs)


def _complex(c):
    if isinstance(c, (list, tuple)):
        return complex(c[0], c[1])
    return complex(c)


@dataclass(frozen=True)
class SchedulerConfig:
    """``exponential`` draws exact waiting times; ``bernoulli`` tests each
    window of length ``dt`` with probability ``gamma0 * dt``."""

    mode: str = "exponential"
    dt: float | None = None

    def __post_init__(self):
        if self.mode not in ("exponential", "bernoulli"):
            raise ConfigurationError(f"unknown scheduler mode {self.mode!r}")
        if self.mode == "bernoulli" and not (self.dt is not None and self.dt > 0):
            raise ConfigurationError("scheduler.dt must be positive in bernoulli mode")


@dataclass(frozen=True)
class RunConfig:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    grid: Grid = field(default_factory=lambda: Grid(40.0, 1024))
    potential: Potential = field(default_factory=Potential)
    initial: InitialState = field(default_factory=lambda: InitialState("gaussian", {"width": 1.0}))
    stepper: StepperConfig = field(default_factory=StepperConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    t_max: float = 10.0
    seed: int = 0
    snapshot_every: float | None = None
    store_density: bool = False
    n_traj: int = 1
    max_collapses: int | None = None
    boundary_tol: float = 1e-8
    preset: str | None = None

    def __post_init__(self):
        problems = []
        if not self.t_max > 0:
            problems.append("run.t_max must be positive")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            problems.append("run.seed must be an integer in [0, 2^64)")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            problems.append("run.snapshots must be positive")
        if not (isinstance(self.n_traj, (int, np.integer)) and self.n_traj >= 1):
            problems.append("run.n_traj must be a positive integer")
        if self.max_collapses is not None and not self.max_collapses >= 1:
            problems.append("run.max_collapses must be at least 1")
        if not self.boundary_tol > 0:
            problems.append("run.boundary_tol must be positive")
        if problems:
            raise ConfigurationError("; ".join(problems), problems)

    def initial_state(self) -> WaveFunction:
        return self.initial.build(self.grid, self.constants)

    def to_dict(self) -> dict:
        solver = {f.name: getattr(self.solver, f.name) for f in fields(SolverConfig)}
        out = {
            "schema": SCHEMA_VERSION,
            "constants": asdict(self.constants),
            "grid": {"length": self.grid.length, "points": self.grid.points},
            "potential": {"kind": self.potential.kind, "params": dict(self.potential.params)},
            "initial": {"kind": self.initial.kind, "params": _plain(self.initial.params)},
            "stepper": {"backend": self.stepper.backend, "dt": self.stepper.dt},
            "solver": solver,
            "scheduler": {"mode": self.scheduler.mode, "dt": self.scheduler.dt},
            "run": {"t_max": self.t_max, "seed": int(self.seed), "snapshots": self.snapshot_every,
                    "store_density": self.store_density, "n_traj": int(self.n_traj),
                    "max_collapses": self.max_collapses, "boundary_tol": self.boundary_tol},
        }
        if self.preset:
            out["preset_origin"] = self.preset
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    """Convert tuples and numpy scalars into YAML/JSON friendly values."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --- parsing -----------------------------------------------------------------

_SECTIONS = ("schema", "preset", "preset_origin", "constants", "grid", "potential", "initial",
             "stepper", "solver", "scheduler", "run")
_RUN_KEYS = {"t_max": "t_max", "seed": "seed", "snapshots": "snapshot_every",
             "store_density": "store_density", "n_traj": "n_traj",
             "max_collapses": "max_collapses", "boundary_tol": "boundary_tol"}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        elif k == "params" and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


class _Collector:
    def __init__(self):
        self.problems = []

    def attempt(self, section, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            items = exc.problems or [str(exc)]
            self.problems.extend(p if p.startswith(section) else f"{section}: {p}" for p in items)
        except (TypeError, ValueError) as exc:
            self.problems.append(f"{section}: {exc}")
        return None


def _section(doc, name, collector):
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        collector.problems.append(f"{name}: expected a mapping")
        return {}
    return value


def _constants(sec):
    sec = dict(sec)
    unknown = set(sec) - {"hbar", "mass", "T0", "gamma0", "lambda0"}
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}")
    if "lambda0" in sec:
        if "T0" in sec:
            raise ConfigurationError("give either T0 or lambda0, not both")
        lam = float(sec.pop("lambda0"))
        if not lam > 0:
            raise ConfigurationError("constants.lambda0 must be positive")
        base = PhysicalConstants(**{k: float(v) for k, v in sec.items()})
        return PhysicalConstants.from_lambda0(lam, base.hbar, base.mass, base.gamma0)
    return PhysicalConstants(**{k: float(v) for k, v in sec.items()})


def _keyed(cls, sec, allowed):
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}")
    return cls(**sec)


def config_from_dict(doc: dict) -> RunConfig:
    """Build and validate a RunConfig, reporting every problem at once."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration must be a mapping", ["document: expected a mapping"])
    col = _Collector()
    preset = doc.get("preset")
    if preset is not None:
        from .presets import preset_dict

        base = col.attempt("preset", preset_dict, preset)
        if base is not None:
            over = doc.get("constants") or {}
            # an override of one energy scale replaces the other
            for a, b in (("lambda0", "T0"), ("T0", "lambda0")):
                if a in over and isinstance(base.get("constants"), dict):
                    base = {**base, "constants": {k: v for k, v in base["constants"].items() if k != b}}
            doc = _merge(base, {k: v for k, v in doc.items() if k != "preset"})
    for k in doc:
        if k not in _SECTIONS:
            col.problems.append(f"{k}: unknown section")

    constants = col.attempt("constants", _constants, _section(doc, "constants", col))
    g = _section(doc, "grid", col)
    grid = col.attempt("grid", _keyed, Grid, g, ("length", "points")) if g else Grid(40.0, 1024)
    p = _section(doc, "potential", col)
    potential = col.attempt("potential", _keyed, Potential, p, ("kind", "params"))
    i = _section(doc, "initial", col)
    initial = col.attempt("initial", _keyed, InitialState, i, ("kind", "params")) if i \
        else InitialState("gaussian", {"width": 1.0})
    st = _section(doc, "stepper", col)
    stepper = col.attempt("stepper", _keyed, StepperConfig, st, ("backend", "dt"))
    so = _section(doc, "solver", col)
    solver = col.attempt("solver", _keyed, SolverConfig, so, [f.name for f in fields(SolverConfig)])
    sc = _section(doc, "scheduler", col)
    scheduler = col.attempt("scheduler", _keyed, SchedulerConfig, sc, ("mode", "dt"))
    run = _section(doc, "run", col)
    unknown = set(run) - set(_RUN_KEYS)
    if unknown:
        col.problems.append(f"run: unknown keys {sorted(unknown)}")
    run_kwargs = {_RUN_KEYS[k]: v for k, v in run.items() if k in _RUN_KEYS}
    if "seed" in run_kwargs and isinstance(run_kwargs["seed"], float) and run_kwargs["seed"].is_integer():
        run_kwargs["seed"] = int(run_kwargs["seed"])

    if col.problems:
        # still check run-level fields so the report is complete
        col.attempt("run", RunConfig, **run_kwargs)
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(col.problems), col.problems)
    cfg = col.attempt("run", RunConfig, constants=constants, grid=grid, potential=potential,
                      initial=initial, stepper=stepper, solver=solver, scheduler=scheduler,
                      preset=preset or doc.get("preset_origin"), **run_kwargs)
    if cfg is None:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(col.problems), col.problems)
    # the initial state must be representable on the grid
    col.attempt("initial", cfg.initial_state)
    if col.problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(col.problems), col.problems)
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse configuration: {exc}", [f"document: {exc}"]) from None
    return config_from_dict(doc)


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    return replace(cfg, **kwargs)
