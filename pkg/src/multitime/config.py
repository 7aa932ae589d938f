"""Scenario configuration: TOML loading, schema validation and spec builders.

A config file has the top-level keys ``scenario``, ``seed``, ``output_dir``
and a ``[parameters]`` table. Every parameter is checked against
:data:`SCHEMA` before any computation: unknown keys and missing required
keys raise :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import InvalidInputError
from .fields import commuting_diagonal, constant_field, gradient_scalar, pauli_pair, random_unitary, tabulated_field
from .lattice import Grid, delta_cell, gaussian_state, plane_wave
from .operators import PAULI_X, PAULI_Y, PAULI_Z, operator_from_dict
from . import potentials


class ConfigError(InvalidInputError):
    """Invalid scenario configuration (exit status 2)."""


REQUIRED = object()

# name -> {parameter: default}; REQUIRED marks parameters without a default
SCHEMA: dict[str, dict] = {
    "consistency-check": {
        "field": REQUIRED,
        "points": [[0.0, 0.0]],
        "fd_step": 1e-4,
    },
    "holonomy-scan": {
        "field": {"type": "pauli-pair"},
        "corner": [0.0, 0.0],
        "axes": [0, 1],
        "dt_exponents": [4, 10],
        "steps": 16,
        "fd_step": 1e-4,
    },
    "stokes": {
        "field": REQUIRED,
        "corner": [0.0, 0.0],
        "sides": [1.0, 1.0],
        "meshes": [32, 64, 128],
        "boundary_steps": 8,
        "fd_step": 1e-4,
    },
    "potential-analyze": {
        "potential": REQUIRED,
        "n_samples": 100,
        "spread": 3.0,
        "min_separation": 1e-2,
        "fd_step": 1e-5,
    },
    "gauge-decompose": {
        "potential": REQUIRED,
        "box": REQUIRED,
        "grid": 64,
        "positions": None,
        "tol": 1e-6,
    },
    "coulomb-commutator": {
        "kind": "schrodinger",
        "charge": 1.0,
        "mass": 1.0,
        "spacings": [0.1, 0.05, 0.025],
        "stencil_order": 4,
        "centers": [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        "width": 0.3,
        "probe_spacing": 0.05,
        "probe_counts": [32, 2],
        "spinor": [1.0, 0.0, 0.0, 0.0],
    },
    "order-gap": {
        "points": 128,
        "spacing": 0.125,
        "mass": 1.0,
        "amplitude": 0.5,
        "range": 1.0,
        "centers": [-0.5, 0.5],
        "width": 1.0,
        "times": [[0.1, 0.1], [0.05, 0.05]],
        "dt": 0.01,
    },
    "lightcone": {
        "points": 1200,
        "spacing": 0.1,
        "state": REQUIRED,
        "mass": 0.0,
        "potential": None,
        "steps": 500,
        "report_every": 10,
    },
    "delta-evolve": {
        "points": 64,
        "spacing": 1.0,
        "delta": REQUIRED,
        "mass": 0.0,
        "w": REQUIRED,
        "phi0": REQUIRED,
        "targets": REQUIRED,
        "trim": False,
        "all_pivots": True,
        "export_slices": False,
    },
    "overlap-test": {
        "points": 64,
        "spacing": 1.0,
        "delta": REQUIRED,
        "mass": 0.0,
        "w": REQUIRED,
        "phi0": REQUIRED,
        "targets": REQUIRED,
        "trim": False,
        "tolerance": 1e-8,
    },
}

TOP_LEVEL = {"scenario", "seed", "output_dir", "parameters"}


@dataclass
class ScenarioConfig:
    scenario: str
    parameters: dict
    output_dir: Path
    seed: int = 0
    source: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def validate(doc: dict) -> ScenarioConfig:
    """Check a parsed config document and fill in parameter defaults."""
    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigError(f"unknown top-level key {key!r}")
    if "scenario" not in doc:
        raise ConfigError("missing required key 'scenario'")
    name = doc["scenario"]
    if name not in SCHEMA:
        raise ConfigError(f"unknown scenario {name!r}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'seed' must be an integer")
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("'parameters' must be a table")
    schema = SCHEMA[name]
    for key in params:
        if key not in schema:
            raise ConfigError(f"unknown parameter {key!r} for scenario {name!r}")
    eff = {}
    for key, default in schema.items():
        if key in params:
            eff[key] = params[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required parameter {key!r} for scenario {name!r}")
        else:
            eff[key] = default
    return ScenarioConfig(name, eff, Path(doc.get("output_dir", "output")), seed, doc)


def load(path) -> ScenarioConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    cfg = validate(doc)
    cfg.base_dir = path.parent
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = path.parent / cfg.output_dir
    return cfg


# ------------------------------------------------------------------ builders

def _keys(spec: dict, what: str, allowed: dict) -> dict:
    """Merge ``spec`` over ``allowed`` defaults, rejecting unknown/missing keys."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{what} must be a table")
    for key in spec:
        if key not in allowed and key != "type":
            raise ConfigError(f"unknown key {key!r} in {what}")
    out = {}
    for key, default in allowed.items():
        if key in spec:
            out[key] = spec[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing key {key!r} in {what}")
        else:
            out[key] = default
    return out


_NAMED = {"sigma_x": PAULI_X, "sigma_y": PAULI_Y, "sigma_z": PAULI_Z}


def matrix(spec) -> np.ndarray:
    """A named Pauli matrix or a shared-format ``{dim, re, im}`` table."""
    if isinstance(spec, str):
        if spec not in _NAMED:
            raise ConfigError(f"unknown matrix name {spec!r}")
        return _NAMED[spec]
    try:
        return operator_from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad matrix spec: {exc}") from exc


def build_field(spec: dict, rng: np.random.Generator | None = None, base_dir: Path | None = None):
    kind = spec.get("type") if isinstance(spec, dict) else None
    what = f"field {kind!r}"
    if kind == "pauli-pair":
        p = _keys(spec, what, {"a1": 1.0, "a2": 1.0})
        return pauli_pair(p["a1"], p["a2"])
    if kind == "commuting-diagonal":
        p = _keys(spec, what, {"diagonals": REQUIRED, "random_basis": False})
        basis = None
        if p["random_basis"]:
            rng = rng or np.random.default_rng(0)
            basis = random_unitary(rng, len(p["diagonals"][0]))
        return commuting_diagonal(p["diagonals"], basis)
    if kind == "gradient-scalar":
        p = _keys(spec, what, {"g": REQUIRED, "matrix": "sigma_x", "n_times": 2})
        return gradient_scalar(p["g"], matrix(p["matrix"]), p["n_times"])
    if kind == "constant":
        p = _keys(spec, what, {"matrices": REQUIRED})
        return constant_field(np.stack([matrix(m) for m in p["matrices"]]))
    if kind == "tabulated":
        p = _keys(spec, what, {"axes": REQUIRED, "file": REQUIRED})
        path = Path(p["file"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return tabulated_field(p["axes"], np.load(path))
    raise ConfigError(f"unknown field type {kind!r}")


def build_potential(spec: dict):
    kind = spec.get("type") if isinstance(spec, dict) else None
    what = f"potential {kind!r}"
    if kind == "coulomb-split":
        p = _keys(spec, what, {"charge": 1.0, "n_particles": 2, "space_dim": 3})
        return potentials.coulomb_split(p["n_particles"], p["charge"], p["space_dim"])
    if kind == "gaussian-pair":
        p = _keys(spec, what, {"amplitude": 1.0, "width": 1.0, "n_particles": 2, "space_dim": 3})
        return potentials.gaussian_pair(p["n_particles"], p["amplitude"], p["width"],
                                        space_dim=p["space_dim"])
    if kind == "external":
        p = _keys(spec, what, {"exprs": REQUIRED, "space_dim": 1})
        return potentials.external(p["exprs"], p["space_dim"])
    if kind == "gradient-gauge":
        p = _keys(spec, what, {"g": REQUIRED, "exprs": None, "n_particles": 2, "space_dim": 1})
        return potentials.gradient_gauge(p["g"], p["exprs"], p["n_particles"], p["space_dim"])
    raise ConfigError(f"unknown potential type {kind!r}")


def spinor(values) -> np.ndarray:
    """Spinor from a list of reals or ``[re, im]`` pairs."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError("complex spinor entries are [re, im] pairs")
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return np.asarray(out)


def build_state(spec: dict, grid: Grid):
    """Single-particle initial state on ``grid``."""
    kind = spec.get("type") if isinstance(spec, dict) else None
    what = f"state {kind!r}"
    if kind == "gaussian":
        p = _keys(spec, what, {"center": REQUIRED, "width": REQUIRED, "spinor": [1.0, 0.0],
                               "momentum": 0.0, "cutoff": 3.0})
        return gaussian_state(grid, p["center"], p["width"], spinor(p["spinor"]),
                              p["momentum"], p["cutoff"])
    if kind == "plane-wave":
        p = _keys(spec, what, {"k": REQUIRED, "spinor": [1.0, 0.0]})
        return plane_wave(grid, p["k"], spinor(p["spinor"]))
    if kind == "delta-cell":
        p = _keys(spec, what, {"index": REQUIRED, "spinor": [1.0, 0.0]})
        return delta_cell(grid, p["index"], spinor(p["spinor"]))
    raise ConfigError(f"unknown state type {kind!r}")
