"""YAML scenario files with unit-suffixed keys.

A scenario file looks like::

    dt_s: 0.1
    horizon_steps: 300
    seed: 0
    road: {merge_angle_deg: 10, ramp_length_m: 200, ...}
    controller: {alpha_nominal: 1, u_nominal_mps2: 1, u_min_mps2: -5, ...}
    ego: {to_merge_m: 100, speed_mps: 20, noise: {mean_mps: [0, 0], cov_m2ps2: [[0, 0], [0, 0]]}}
    merging:
      - {to_merge_m: 90, speed_mps: 20}
    validity: {trials: 400, gap_m: [-40, 40], rel_speed_mps: [-3, 3], alpha_nominal: [0.5, 3]}
    sweep: {alpha_nominal: [1, 2, 5, 10, 15]}

``to_merge_m`` is the distance along the vehicle's own lane to the merge point.
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .controller import ControllerConfig
from .dynamics import ModelError, NoiseModel
from .feasibility import ControlBounds
from .geometry import ramp_layout
from .sim import ConfigError, ScenarioConfig, ValidityRanges, VehicleSpec

DEFAULTS: dict[str, Any] = {
    "dt_s": 0.1,
    "horizon_steps": 300,
    "seed": 0,
    "allow_unsafe_start": False,
    "road": {
        "merge_point_m": [0.0, 0.0],
        "main_heading_deg": 0.0,
        "main_before_m": 400.0,
        "main_after_m": 800.0,
        "ramp_length_m": 300.0,
        "merge_angle_deg": 10.0,
    },
    "controller": {
        "alpha_nominal": 1.0,
        "alpha_init": None,
        "u_nominal_mps2": 1.0,
        "u_min_mps2": -5.0,
        "u_max_mps2": 3.0,
        "r_safe_m": 8.0,
        "eta": 0.99,
        "adaptive": True,
        "paper_coefficient": False,
        "same_step_repair": True,
    },
    "ego": {"to_merge_m": 100.0, "speed_mps": 20.0, "noise": None},
    "merging": [],
    "validity": {
        "trials": 400,
        "gap_m": [-40.0, 40.0],
        "rel_speed_mps": [-3.0, 3.0],
        "alpha_nominal": [0.5, 3.0],
        "start_control_mps2": None,
    },
    "sweep": {"alpha_nominal": [1.0, 2.0, 5.0, 10.0, 15.0]},
}

_VEHICLE_KEYS = {"to_merge_m", "speed_mps", "noise"}
_NOISE_KEYS = {"mean_mps", "cov_m2ps2", "sigma_mps"}
_BATCH_SECTIONS = ("validity.", "sweep.")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    """Parse a scenario file and fill in defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(e, 'problem', e)}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(raw)


def resolve(raw: dict) -> dict:
    d = _merge(DEFAULTS, raw)
    for i, m in enumerate(d["merging"]):
        if not isinstance(m, dict) or set(m) - _VEHICLE_KEYS:
            raise ConfigError(f"merging[{i}] must be a mapping with keys {sorted(_VEHICLE_KEYS)}")
    return d


def builtin_config(name: str) -> dict:
    """Load one of the bundled golden scenarios by stem, e.g. ``"stress"``."""
    ref = resources.files("safemerge.configs") / f"{name}.yaml"
    with resources.as_file(ref) as p:
        return load_config(p)


def builtin_config_names() -> list[str]:
    return sorted(
        p.name[:-5] for p in resources.files("safemerge.configs").iterdir() if p.name.endswith(".yaml")
    )


def _leaf_paths(d: dict, prefix: str = "") -> list[str]:
    out = []
    for k, v in d.items():
        if isinstance(v, dict):
            out += _leaf_paths(v, f"{prefix}{k}.")
        else:
            out.append(f"{prefix}{k}")
    return out


def apply_overrides(d: dict, overrides) -> dict:
    """Apply ``key=value`` strings; ``key`` is a dotted path or a unique leaf name."""
    d = copy.deepcopy(d)
    leaves = _leaf_paths(DEFAULTS)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        matches = [p for p in leaves if p == key or p.split(".")[-1] == key]
        if key in leaves:
            matches = [key]
        elif len(matches) > 1:
            # a bare name prefers the scenario key over the batch sections
            scenario = [p for p in matches if not p.startswith(_BATCH_SECTIONS)]
            if len(scenario) == 1:
                matches = scenario
        if len(matches) != 1:
            what = "ambiguous" if matches else "unknown"
            raise ConfigError(f"{what} override key '{key}'; valid keys: {', '.join(leaves)}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse value for '{key}': {raw!r}") from None
        node = d
        *parents, leaf = matches[0].split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return d


def _noise(spec, where: str) -> NoiseModel:
    if spec is None:
        return NoiseModel.zero()
    if not isinstance(spec, dict) or set(spec) - _NOISE_KEYS:
        raise ConfigError(f"{where}: noise keys must be among {sorted(_NOISE_KEYS)}")
    try:
        if "sigma_mps" in spec:
            return NoiseModel.isotropic(float(spec["sigma_mps"]), spec.get("mean_mps", (0.0, 0.0)))
        return NoiseModel(spec.get("mean_mps", (0.0, 0.0)), spec.get("cov_m2ps2", [[0.0, 0.0], [0.0, 0.0]]))
    except (ModelError, TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        road = d["road"]
        main, ramp = ramp_layout(
            merge_point=road["merge_point_m"],
            main_heading_deg=float(road["main_heading_deg"]),
            main_before_m=float(road["main_before_m"]),
            main_after_m=float(road["main_after_m"]),
            ramp_length_m=float(road["ramp_length_m"]),
            merge_angle_deg=float(road["merge_angle_deg"]),
        )
        c = d["controller"]
        cc = ControllerConfig(
            alpha_nominal=float(c["alpha_nominal"]),
            u_nominal=float(c["u_nominal_mps2"]),
            bounds=ControlBounds(float(c["u_min_mps2"]), float(c["u_max_mps2"])),
            r_safe=float(c["r_safe_m"]),
            eta=float(c["eta"]),
            coefficient_mode=bool(c["paper_coefficient"]),
            adaptive=bool(c["adaptive"]),
            alpha_init=None if c["alpha_init"] is None else float(c["alpha_init"]),
            same_step_repair=bool(c["same_step_repair"]),
        )

        def vehicle(v, lane, where):
            return VehicleSpec(
                lane, lane.merge_s - float(v["to_merge_m"]), float(v["speed_mps"]), _noise(v.get("noise"), where)
            )

        ego = vehicle(d["ego"], main, "ego")
        merges = tuple(vehicle(m, ramp, f"merging[{i}]") for i, m in enumerate(d["merging"]))
        cfg = ScenarioConfig(
            ego, merges, cc, dt=float(d["dt_s"]), horizon=int(d["horizon_steps"]),
            seed=int(d["seed"]), allow_unsafe_start=bool(d["allow_unsafe_start"]),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {e}") from None
    cfg.validate()
    return cfg


def validity_ranges_from_dict(d: dict) -> ValidityRanges:
    v = d["validity"]
    lim = v["start_control_mps2"]
    return ValidityRanges(
        tuple(v["gap_m"]),
        tuple(v["rel_speed_mps"]),
        tuple(v["alpha_nominal"]),
        None if lim is None else float(lim),
    )


def dump_config(d: dict) -> str:
    return yaml.safe_dump(d, sort_keys=False)
