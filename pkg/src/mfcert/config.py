"""Scenario configuration: JSON schema, validation and the bundled presets.

A configuration fixes the plant (with uncertainties), the pole locations,
the time scaling, the set-point and the simulation grid.  Two presets ship
with the package: ``scenario1`` (set-point 0.75) and ``scenario2``
(set-point 2.0), both starting model and process at the origin.  The
``reproduce`` command checks computed quantities against the frozen
reference figures of these presets at fixed tolerances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .plant import Box, DEFAULT_DOMAIN, MsdParams

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "preset",
    "load_config",
    "parse_config",
    "PRESET_NAMES",
    "reference_rows",
]

PRESET_NAMES = ("scenario1", "scenario2")
_CONTROLLERS = ("SL", "SLHG", "MFC", "FFLIN")
_ROA_KINDS = ("MFC1", "MFC2", "SL", "SLHG")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _expect(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigError(path, message)


def _as_float(value, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            path, "must be a number")
    return float(value)


def _as_vector(value, path: str, length: int) -> tuple:
    _expect(isinstance(value, Sequence) and not isinstance(value, str),
            path, f"must be a list of {length} numbers")
    _expect(len(value) == length, path, f"must have {length} entries")
    return tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated inputs for one end-to-end analysis."""

    plant: MsdParams
    poles: tuple
    epsilon: float
    vartheta: float
    y_d: float
    x0: tuple
    x0_star: tuple
    horizon: float
    step: float
    controllers: tuple
    roa_kinds: tuple
    domain: Box = DEFAULT_DOMAIN
    falsify_samples: int | None = None
    falsify_seed: int = 0

    def to_dict(self) -> dict:
        data = {
            "plant": self.plant.to_dict(),
            "poles": [[r.real, r.imag] if isinstance(r, complex) else r for r in self.poles],
            "epsilon": self.epsilon,
            "vartheta": self.vartheta,
            "y_d": self.y_d,
            "x0": list(self.x0),
            "x0_star": list(self.x0_star),
            "horizon": self.horizon,
            "step": self.step,
            "controllers": list(self.controllers),
            "roa_kinds": list(self.roa_kinds),
            "domain": {"lo": list(self.domain.lo), "hi": list(self.domain.hi)},
        }
        if self.falsify_samples is not None:
            data["falsify"] = {"samples": self.falsify_samples, "seed": self.falsify_seed}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def parse_config(data: Mapping) -> ScenarioConfig:
    """Validate a raw mapping into a ScenarioConfig, naming bad fields."""
    _expect(isinstance(data, Mapping), "config", "must be a JSON object")

    _expect("plant" in data, "plant", "is required")
    _expect(isinstance(data["plant"], Mapping), "plant", "must be an object")
    plant_raw = data["plant"]
    for name in ("k", "c_d", "alpha", "m", "g0"):
        _expect(name in plant_raw, f"plant.{name}", "is required")
        _as_float(plant_raw[name], f"plant.{name}")
    for name in ("delta_k", "delta_c_d", "delta_alpha"):
        if name in plant_raw:
            _as_float(plant_raw[name], f"plant.{name}")
    try:
        plant = MsdParams.from_dict(plant_raw)
    except ValueError as exc:
        raise ConfigError("plant", str(exc)) from None

    _expect("poles" in data, "poles", "is required")
    raw_poles = data["poles"]
    _expect(isinstance(raw_poles, Sequence) and len(raw_poles) >= 1,
            "poles", "must be a non-empty list")
    poles = []
    for i, r in enumerate(raw_poles):
        path = f"poles[{i}]"
        if isinstance(r, Sequence) and not isinstance(r, str):
            _expect(len(r) == 2, path, "complex pole must be a [re, im] pair")
            poles.append(complex(_as_float(r[0], path), _as_float(r[1], path)))
        else:
            poles.append(_as_float(r, path))
    for i, r in enumerate(poles):
        _expect(complex(r).real < 0, f"poles[{i}]", "must have negative real part")

    n = len(poles)
    epsilon = _as_float(data.get("epsilon", 0.1), "epsilon")
    _expect(0.0 < epsilon <= 1.0, "epsilon", "must lie in (0, 1]")
    vartheta = _as_float(data.get("vartheta", 100.0 / epsilon), "vartheta")
    _expect(vartheta > 0, "vartheta", "must be positive")
    y_d = _as_float(data.get("y_d", 0.0), "y_d")
    x0 = _as_vector(data.get("x0", [0.0] * n), "x0", n)
    x0_star = _as_vector(data.get("x0_star", [0.0] * n), "x0_star", n)
    horizon = _as_float(data.get("horizon", 10.0), "horizon")
    _expect(horizon > 0, "horizon", "must be positive")
    step = _as_float(data.get("step", 1e-3), "step")
    _expect(0 < step <= horizon, "step", "must lie in (0, horizon]")

    controllers = data.get("controllers", ["SL", "SLHG", "MFC"])
    _expect(isinstance(controllers, Sequence) and not isinstance(controllers, str),
            "controllers", "must be a list")
    _expect(len(controllers) > 0, "controllers", "must not be empty")
    for i, c in enumerate(controllers):
        _expect(c in _CONTROLLERS, f"controllers[{i}]",
                f"must be one of {list(_CONTROLLERS)}")

    roa_kinds = data.get("roa_kinds", list(_ROA_KINDS))
    _expect(isinstance(roa_kinds, Sequence) and not isinstance(roa_kinds, str),
            "roa_kinds", "must be a list")
    for i, kname in enumerate(roa_kinds):
        _expect(kname in _ROA_KINDS, f"roa_kinds[{i}]",
                f"must be one of {list(_ROA_KINDS)}")

    domain = DEFAULT_DOMAIN
    if "domain" in data:
        dom = data["domain"]
        _expect(isinstance(dom, Mapping) and "lo" in dom and "hi" in dom,
                "domain", "must be an object with 'lo' and 'hi'")
        lo = _as_vector(dom["lo"], "domain.lo", n)
        hi = _as_vector(dom["hi"], "domain.hi", n)
        try:
            domain = Box(lo, hi)
        except ValueError as exc:
            raise ConfigError("domain", str(exc)) from None

    falsify_samples = None
    falsify_seed = 0
    if "falsify" in data and data["falsify"] is not None:
        fal = data["falsify"]
        _expect(isinstance(fal, Mapping), "falsify", "must be an object")
        _expect("samples" in fal, "falsify.samples", "is required")
        samples = _as_float(fal["samples"], "falsify.samples")
        _expect(samples == int(samples) and samples >= 1,
                "falsify.samples", "must be a positive integer")
        falsify_samples = int(samples)
        if "seed" in fal:
            seed = _as_float(fal["seed"], "falsify.seed")
            _expect(seed == int(seed) and seed >= 0,
                    "falsify.seed", "must be a nonnegative integer")
            falsify_seed = int(seed)

    return ScenarioConfig(
        plant=plant,
        poles=tuple(poles),
        epsilon=epsilon,
        vartheta=vartheta,
        y_d=y_d,
        x0=x0,
        x0_star=x0_star,
        horizon=horizon,
        step=step,
        controllers=tuple(controllers),
        roa_kinds=tuple(roa_kinds),
        domain=domain,
        falsify_samples=falsify_samples,
        falsify_seed=falsify_seed,
    )


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config(data)


_TABLE_PLANT = {
    "k": 1.5,
    "c_d": 0.3,
    "alpha": 0.5,
    "m": 1.0,
    "g0": 9.81,
    "delta_k": -0.075,
    "delta_c_d": 0.06,
    "delta_alpha": -0.1,
}


def preset(name: str) -> ScenarioConfig:
    """Bundled benchmark scenarios with the shipped plant parameters."""
    if name not in PRESET_NAMES:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    y_d = 0.75 if name == "scenario1" else 2.0
    return parse_config(
        {
            "plant": dict(_TABLE_PLANT),
            "poles": [-2.0, -2.0],
            "epsilon": 0.1,
            "vartheta": 1000.0,
            "y_d": y_d,
            "x0": [0.0, 0.0],
            "x0_star": [0.0, 0.0],
            "horizon": 10.0,
            "step": 1e-3,
            "controllers": ["SL", "SLHG", "MFC"],
            "roa_kinds": ["MFC1", "MFC2", "SL", "SLHG"],
            "falsify": {"samples": 500, "seed": 0},
        }
    )


# Frozen expected figures for the bundled presets, checked by `reproduce`.
# kind: "rel" compares |computed - expected| / |expected| against tol,
#       "abs" compares |computed - expected| against tol,
#       "max" requires computed < tol.
_REFERENCE_COMMON = [
    {"name": "lyapunov_residual", "kind": "max", "tol": 1e-10},
    {"name": "gamma_mfc", "kind": "rel", "expected": 24.9256, "tol": 0.003},
    {"name": "gamma_sl", "kind": "rel", "expected": 2.4988, "tol": 0.001},
    {"name": "gamma_slhg", "kind": "rel", "expected": 24.9878, "tol": 0.001},
]

_REFERENCE_SCENARIO1 = _REFERENCE_COMMON + [
    {"name": "c_sl", "kind": "rel", "expected": 0.75, "tol": 0.02},
    {"name": "c_slhg", "kind": "rel", "expected": 14.74, "tol": 0.01},
    {"name": "c_star", "kind": "rel", "expected": 632.813, "tol": 0.001},
    {"name": "c_tilde", "kind": "rel", "expected": 9.2, "tol": 0.02},
    {"name": "c_total", "kind": "rel", "expected": 642.045, "tol": 0.01},
    {"name": "sl_error_pct", "kind": "abs", "expected": 4.3, "tol": 0.3},
    {"name": "mfc_error_pct", "kind": "max", "tol": 0.1},
    {"name": "multiplicity_transition", "kind": "abs", "expected": 1.95, "tol": 0.05},
    {"name": "u_slhg_0", "kind": "rel", "expected": 310.0, "tol": 0.02},
    {"name": "u_mfc_0", "kind": "abs", "expected": 13.0, "tol": 1.0},
    {"name": "u_mfc_0_perturbed_a", "kind": "rel", "expected": 290.0, "tol": 0.02},
    # The one-line control law gives about -125.8 here while the reference
    # figure rounds to -127; the ~1% gap is documented, not forced.
    {"name": "u_mfc_0_perturbed_b", "kind": "rel", "expected": -125.8, "tol": 0.02,
     "note": "reference figure -127; computed value differs by about 1%"},
    {"name": "mfc_final_output_gap", "kind": "max", "tol": 7.5e-4},
    {"name": "mfc_reconverge_time_s", "kind": "max", "tol": 0.5},
    {"name": "falsify_violations", "kind": "max", "tol": 0.5},
]

_REFERENCE_SCENARIO2 = _REFERENCE_COMMON + [
    {"name": "c_star", "kind": "rel", "expected": 4500.0, "tol": 0.001},
    {"name": "u_slhg_0", "kind": "rel", "expected": 810.0, "tol": 0.02},
    {"name": "sl_root_count", "kind": "abs", "expected": 1.0, "tol": 0.0},
    {"name": "sl_root_unstable", "kind": "abs", "expected": 1.0, "tol": 0.0},
    # "negligible" steady-state error for the high-gain loops; no figure given.
    {"name": "mfc_error_pct", "kind": "max", "tol": 0.2},
    {"name": "falsify_violations", "kind": "max", "tol": 0.5},
]


def reference_rows(scenario: str) -> list[dict]:
    if scenario == "scenario1":
        return [dict(row) for row in _REFERENCE_SCENARIO1]
    if scenario == "scenario2":
        return [dict(row) for row in _REFERENCE_SCENARIO2]
    raise ConfigError("preset", f"unknown preset {scenario!r}")
