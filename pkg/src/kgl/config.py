"""Experiment configuration: defaults, JSON loading, dotted overrides."""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigurationError

__all__ = ["DEFAULTS", "KERNEL_PRESETS", "load_config", "apply_override", "merge", "resolve_threads"]

KERNEL_PRESETS = {
    "hard_spheres": {"kinetic": {"family": "hard_spheres", "gamma": 1.0, "C_phi": 1.0},
                     "angular": {"family": "cutoff", "expr": "one"}},
    "maxwell": {"kinetic": {"family": "constant", "gamma": 0.0, "C_phi": 1.0},
                "angular": {"family": "cutoff", "expr": "one"}},
    "power_half": {"kinetic": {"family": "power_law", "gamma": 0.5, "C_phi": 1.0},
                   "angular": {"family": "cutoff", "expr": "one"}},
    "soft": {"kinetic": {"family": "power_law", "gamma": -1.0, "C_phi": 1.0},
             "angular": {"family": "cutoff", "expr": "one"}},
    "singular": {"kinetic": {"family": "power_law", "gamma": 1.0, "C_phi": 1.0},
                 "angular": {"family": "singular", "expr": "theta_power", "alpha": 0.5, "c_b": 1.0}},
}

_KINETIC_KEYS = {"family", "gamma", "C_phi", "r_min"}
_ANGULAR_KEYS = {"family", "expr", "alpha", "c_b", "C_b"}

DEFAULTS: dict = {
    "seed": 42,
    "kernel": copy.deepcopy(KERNEL_PRESETS["hard_spheres"]),
    "state": "reference",
    "basis": {"n_max": 6, "l_max": 6},
    "quadrature": {"gh_order": None, "radial_order": None, "sphere_degree": None,
                   "theta_nodes": None, "angular_panels": 16, "panel_order": None},
    "bounds": {"gamma": 1.0},
    "gap": {"convergence": [2, 3, 4, 5, 6], "save_matrix": True},
    "coercivity": {"cases": [["hard_spheres", 1.0], ["power_half", 0.5], ["soft", -1.0]],
                   "coarse": 5, "drift_tolerance": 0.05, "radial_order": 120},
    "cmcv": {"gammas": [0.0, 0.5, 1.0], "count": 100, "max_degree": 3},
    "oracle": {"n_max": 6, "l_max": 6},
    "relax": {"n": 16, "L": 4.2, "sphere_degree": 11, "t_end": 0.8, "stop_ratio": 1e-7,
              "rate_tolerance": 0.25},
    "verify": {"profile": "full"},
}


def merge(base: dict, over: dict, path: str = "") -> dict:
    """Recursive merge of ``over`` onto ``base``; unknown keys are rejected."""
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if path == "kernel.kinetic" and key in _KINETIC_KEYS or path == "kernel.angular" and key in _ANGULAR_KEYS:
            out[key] = val
            continue
        if key not in base:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = merge(base[key], val, where)
        elif isinstance(base[key], dict) and key == "kernel" and isinstance(val, str):
            out[key] = _preset(val)
        else:
            out[key] = val
    return out


def _preset(name: str) -> dict:
    if name not in KERNEL_PRESETS:
        raise ConfigurationError(f"unknown kernel preset {name!r}; choose from {sorted(KERNEL_PRESETS)}")
    return copy.deepcopy(KERNEL_PRESETS[name])


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value``; ``value`` is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
    dotted, raw = assignment.split("=", 1)
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    over: dict = {}
    node = over
    for k in keys[:-1]:
        node[k] = {}
        node = node[k]
    node[keys[-1]] = value
    return merge(cfg, over)


def load_config(path: Optional[str] = None, overrides: tuple = ()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigurationError("config file must hold a JSON object")
        cfg = merge(cfg, user)
    for ov in overrides:
        cfg = apply_override(cfg, ov)
    return cfg


def resolve_threads(requested: Optional[int]) -> int:
    """Thread count from the flag, then ``KGL_THREADS``, clamped to the available cores."""
    if requested is None:
        env = os.environ.get("KGL_THREADS")
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigurationError(f"KGL_THREADS must be an integer, got {env!r}") from None
    avail = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    if requested is None:
        return avail
    if requested < 1:
        raise ConfigurationError("thread count must be positive")
    return min(requested, avail)
