"""Named experiment presets.

Each preset is a configuration document (the same nested mapping accepted
by :func:`config.parse_config`) so that overrides merge key by key.
"""
from __future__ import annotations

import copy
import math

from .errors import ConfigurationError

_PRESETS = {
    "free_packet": {
        "description": "free Gaussian packet; collapse keeps its width near lambda0",
        "anchor": "free wavepacket evolution under spontaneous collapse (density heatmap)",
        "doc": {
            "constants": {"hbar": 1.0, "mass": 50.0, "lambda0": 1.0, "gamma0": 1.0},
            "grid": {"length": 160.0, "points": 8192},
            "potential": {"kind": "free"},
            "initial": {"kind": "gaussian", "params": {"center": 0.0, "width": 0.25}},
            "stepper": {"backend": "split_step", "dt": 0.01},
            "run": {"t_max": 50.0, "seed": 7, "snapshots": 0.5, "n_traj": 8},
        },
    },
    "harmonic": {
        "description": "displaced coherent state in a harmonic trap",
        "anchor": "classical (Newtonian) motion of the mean position",
        "doc": {
            "constants": {"hbar": 1.0, "mass": 20.0, "lambda0": 0.7, "gamma0": 1.0},
            "grid": {"length": 24.0, "points": 1024},
            "potential": {"kind": "harmonic", "params": {"omega": 1.0, "mass": 20.0}},
            "initial": {"kind": "harmonic_ground", "params": {"omega": 1.0, "center": 3.0}},
            "stepper": {"backend": "split_step", "dt": 0.01},
            "run": {"t_max": 4.0 * math.pi, "seed": 11, "snapshots": math.pi / 16, "n_traj": 1000},
        },
    },
    "double_well": {
        "description": "heavy particle in a deep double well, started in both wells",
        "anchor": "heavy particle localized in one of two wells",
        "doc": {
            "constants": {"hbar": 1.0, "mass": 1000.0, "lambda0": 0.3, "gamma0": 1.0},
            "grid": {"length": 8.0, "points": 512},
            "potential": {"kind": "double_well", "params": {"a": 1.0, "b": 4.0}},
            "initial": {"kind": "superposition",
                        "params": {"centers": [-math.sqrt(2.0), math.sqrt(2.0)],
                                   "widths": [0.0628, 0.0628], "coefficients": [1.0, 1.0]}},
            "stepper": {"backend": "split_step", "dt": 0.01},
            "run": {"t_max": 20.0, "seed": 13, "snapshots": 0.25},
        },
    },
    "measurement_split": {
        "description": "two separated packets after a detector split, |c+|^2 = 0.7",
        "anchor": "branch selection with Born weights",
        "doc": {
            "constants": {"hbar": 1.0, "mass": 100.0, "lambda0": 40.0, "gamma0": 1.0},
            "grid": {"length": 48.0, "points": 256},
            "potential": {"kind": "free"},
            "initial": {"kind": "superposition",
                        "params": {"centers": [-6.0, 6.0], "widths": [1.0, 1.0],
                                   "coefficients": [math.sqrt(0.3), math.sqrt(0.7)]}},
            "stepper": {"backend": "split_step", "dt": 0.01},
            "run": {"t_max": 30.0, "seed": 17, "max_collapses": 1, "n_traj": 10000},
        },
    },
    "quantum_limit": {
        "description": "harmonic ground state much narrower than lambda0; collapse is inert",
        "anchor": "narrow bound state: no admissible cut, dynamics stays unitary",
        "doc": {
            "constants": {"hbar": 1.0, "mass": 5000.0, "lambda0": 1.0, "gamma0": 5.0},
            "grid": {"length": 0.64, "points": 256},
            "potential": {"kind": "harmonic", "params": {"omega": 1.0, "mass": 5000.0}},
            "initial": {"kind": "harmonic_ground", "params": {"omega": 1.0}},
            "stepper": {"backend": "split_step", "dt": 1e-3},
            "run": {"t_max": 40.0, "seed": 19},
        },
    },
    "born_sweep": {
        "description": "measurement_split with |c+|^2 = 0.5 (override coefficients to sweep)",
        "anchor": "Born rule across branch weights",
        "doc": {
            "preset_base": "measurement_split",
            "initial": {"kind": "superposition",
                        "params": {"centers": [-6.0, 6.0], "widths": [1.0, 1.0],
                                   "coefficients": [math.sqrt(0.5), math.sqrt(0.5)]}},
            "run": {"n_traj": 2000},
        },
    },
}


def preset_names():
    return list(_PRESETS)


def preset_info(name):
    if name not in _PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {preset_names()}")
    p = _PRESETS[name]
    return {"name": name, "description": p["description"], "anchor": p["anchor"]}


def preset_dict(name) -> dict:
    """Full configuration document for ``name`` (a fresh copy)."""
    from .config import _merge

    if name not in _PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {preset_names()}")
    doc = copy.deepcopy(_PRESETS[name]["doc"])
    base = doc.pop("preset_base", None)
    if base is not None:
        doc = _merge(preset_dict(base), doc)
    return doc


def preset_config(name, **overrides):
    """RunConfig for a preset; ``overrides`` are top-level sections to merge."""
    from .config import config_from_dict

    return config_from_dict({"preset": name, **overrides})
