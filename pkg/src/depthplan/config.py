"""Pipeline configuration: presets, file/flag resolution and validation.

Precedence: preset defaults, then the config file, then --set flags.
Unknown keys are rejected; the fully resolved configuration is echoed into
the output directory so every run is reproducible from its artifacts.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .complete import CompleterSpec
from .frames import Intrinsics
from .plan import PlannerConfig
from .sim import ExperimentConfig, MODE_AUGMENTED, MODE_SPARSE, MODES
from .sparsify import SparsifyConfig
from .tsdf import IntegrationConfig
from . import world as W


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_BASE = {
    "seed": 0,
    "out_dir": "results",
    "scene": {
        "preset": "cylinder-forest",
        "seed": 0,
        "bounds": [[0.0, 0.0, 0.0], [15.0, 12.0, 4.0]],
        "n_cylinders": 12,
        "radius_range": [0.3, 0.6],
        "n_boxes": 2,
        "waypoint_count": 12,
        "clearance": 0.7,
        "waypoint_height": 1.0,
        "min_separation": 1.5,
        "path": None,
    },
    "sensor": {"width": 320, "height": 240, "fx": 160.0, "fy": 160.0,
               "cx": 159.5, "cy": 119.5},
    "sparsify": {"p": 0.25, "r_max": 5.0, "blur_sigma": 1.0,
                 "dilate": False, "noise": False},
    "sparse_reference": {"p": 0.5, "r_max": 7.0, "blur_sigma": 1.0,
                         "dilate": False, "noise": False},
    "completer": {"kind": "idw", "k": 4, "power": 2.0, "path_pattern": ""},
    "integration": {"delta_trunc": 0.4, "w_pred": 0.1,
                    "weight_mode": "constant", "max_weight": 10000.0},
    # d_cap must admit the sparse-reference sensor range (r_max <= d_cap)
    "map": {"voxel_size": 0.1, "free_threshold": 0.2,
            "unknown_is_obstacle": True, "unknown_sphere_radius": 3.0,
            "robot_clear_radius": 0.5, "d_cap": 8.0},
    "planner": {"p_g": 0.5, "sample_radius": 4.0, "n_samples": 50,
                "collision_radius": 0.25, "horizon": 3.0, "v_max": 1.5,
                "rrt_iteration_budget": 20000, "local_rrt_budget": 2000,
                "w_goal": 1.0, "w_unk": 0.5, "w_clear": 0.5},
    "experiment": {"modes": ["ground_truth", "augmented", "sparse"],
                   "epsilon": 0.25, "timeout": 40.0, "sense_rate": 5.0,
                   "plan_rate": 5.0, "log_rate": 10.0, "ordered_pairs": True,
                   "stuck_patience": 5.0},
}

PRESETS = {
    # pillar-room protocol: 12 waypoints at 1 m, tight goal ball; the
    # sparse reference sensor keeps half the pixels out to 7 m
    "cylinder-forest-paper": {},
    # multi-room protocol: 7 waypoints at 1.5 m, 1 m success radius,
    # dilated and noisy sparsification
    "four-rooms": {
        "scene": {"preset": "four-rooms",
                  "bounds": [[0.0, 0.0, 0.0], [10.0, 10.0, 3.0]],
                  "waypoint_count": 7, "clearance": 0.6,
                  "waypoint_height": 1.5},
        "sparsify": {"dilate": True, "noise": True},
        "sparse_reference": {"p": 0.25, "r_max": 5.0, "dilate": True,
                             "noise": True},
        "experiment": {"epsilon": 1.0},
    },
}


def _deep_merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key: {where}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply dotted-path --set overrides like sparsify.p=0.3."""
    out = copy.deepcopy(doc)
    for item in overrides or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown configuration key: {key}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown configuration key: {key}")
        node[parts[-1]] = _parse_value(val)
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Fully resolved pipeline configuration."""

    preset: str
    doc: dict

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def out_dir(self) -> str:
        return str(self.doc["out_dir"])

    @property
    def modes(self) -> list:
        return list(self.doc["experiment"]["modes"])

    @property
    def ordered_pairs(self) -> bool:
        return bool(self.doc["experiment"]["ordered_pairs"])

    def intrinsics(self) -> Intrinsics:
        s = self.doc["sensor"]
        return Intrinsics(float(s["fx"]), float(s["fy"]), float(s["cx"]),
                          float(s["cy"]), int(s["width"]), int(s["height"]))

    def sparsify_config(self, reference: bool = False) -> SparsifyConfig:
        s = self.doc["sparse_reference" if reference else "sparsify"]
        return SparsifyConfig(p=float(s["p"]), r_max=float(s["r_max"]),
                              blur_sigma=float(s["blur_sigma"]),
                              dilate=bool(s["dilate"]), noise=bool(s["noise"]),
                              seed=self.seed)

    def completer_spec(self) -> CompleterSpec | None:
        c = self.doc["completer"]
        if c is None:
            return None
        return CompleterSpec(kind=str(c["kind"]), k=int(c["k"]),
                             power=float(c["power"]),
                             path_pattern=str(c["path_pattern"]))

    def integration_config(self) -> IntegrationConfig:
        i = self.doc["integration"]
        return IntegrationConfig(delta_trunc=float(i["delta_trunc"]),
                                 w_pred=float(i["w_pred"]),
                                 weight_mode=str(i["weight_mode"]),
                                 max_weight=float(i["max_weight"]))

    def planner_config(self) -> PlannerConfig:
        p = self.doc["planner"]
        return PlannerConfig(
            p_g=float(p["p_g"]), sample_radius=float(p["sample_radius"]),
            n_samples=int(p["n_samples"]),
            collision_radius=float(p["collision_radius"]),
            horizon=float(p["horizon"]), v_max=float(p["v_max"]),
            rrt_iteration_budget=int(p["rrt_iteration_budget"]),
            local_rrt_budget=int(p["local_rrt_budget"]), seed=self.seed,
            w_goal=float(p["w_goal"]), w_unk=float(p["w_unk"]),
            w_clear=float(p["w_clear"]))

    def experiment_config(self, mode: str) -> ExperimentConfig:
        e = self.doc["experiment"]
        m = self.doc["map"]
        sparse_cfg = self.sparsify_config(reference=(mode == MODE_SPARSE))
        return ExperimentConfig(
            mode=mode,
            intrinsics=self.intrinsics(),
            sparsify=sparse_cfg,
            completer=self.completer_spec() if mode == MODE_AUGMENTED else None,
            integration=self.integration_config(),
            planner=self.planner_config(),
            voxel_size=float(m["voxel_size"]),
            free_threshold=float(m["free_threshold"]),
            unknown_is_obstacle=bool(m["unknown_is_obstacle"]),
            unknown_sphere_radius=float(m["unknown_sphere_radius"]),
            robot_clear_radius=float(m["robot_clear_radius"]),
            d_cap=float(m["d_cap"]),
            epsilon=float(e["epsilon"]), timeout=float(e["timeout"]),
            sense_rate=float(e["sense_rate"]), plan_rate=float(e["plan_rate"]),
            log_rate=float(e["log_rate"]), seed=self.seed,
            stuck_patience=float(e["stuck_patience"]))

    def build_scene(self):
        s = self.doc["scene"]
        if s.get("path"):
            scene, wps = W.load_world(s["path"])
            if wps is None:
                raise ConfigError("scene.path file carries no waypoints")
            return scene, wps
        bounds = (tuple(s["bounds"][0]), tuple(s["bounds"][1]))
        if s["preset"] == "cylinder-forest":
            return W.generate_cylinder_forest(
                seed=int(s["seed"]), bounds=bounds,
                n_cylinders=int(s["n_cylinders"]),
                radius_range=tuple(s["radius_range"]),
                n_boxes=int(s["n_boxes"]),
                waypoint_count=int(s["waypoint_count"]),
                clearance_m=float(s["clearance"]),
                waypoint_height=float(s["waypoint_height"]),
                min_separation=float(s["min_separation"]))
        if s["preset"] == "four-rooms":
            return W.generate_four_rooms(
                seed=int(s["seed"]), bounds=bounds,
                waypoint_count=int(s["waypoint_count"]),
                clearance_m=float(s["clearance"]),
                waypoint_height=float(s["waypoint_height"]))
        raise ConfigError(f"unknown scene.preset {s['preset']!r}")

    def to_json(self) -> str:
        doc = dict(self.doc)
        doc["preset"] = self.preset
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def echo(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "resolved_config.json"
        path.write_text(self.to_json())
        return path


def _validate(doc: dict) -> None:
    modes = doc["experiment"]["modes"]
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"experiment.modes contains unknown mode {mode!r}")
    has_completer = doc["completer"] is not None
    if MODE_AUGMENTED in modes and not has_completer:
        raise ConfigError("completer: required when experiment.modes includes "
                          "'augmented'")
    if has_completer and MODE_AUGMENTED not in modes:
        raise ConfigError("completer: set but experiment.modes never uses it "
                          "(augmented mode absent)")
    d_cap = float(doc["map"]["d_cap"])
    for section in ("sparsify", "sparse_reference"):
        if float(doc[section]["r_max"]) > d_cap:
            raise ConfigError(f"{section}.r_max must not exceed map.d_cap")
    lo, hi = doc["scene"]["bounds"]
    if any(h <= l for l, h in zip(lo, hi)):
        raise ConfigError("scene.bounds must span a positive volume")
    v = float(doc["map"]["voxel_size"])
    if float(doc["integration"]["delta_trunc"]) < 2 * v:
        raise ConfigError("integration.delta_trunc must be at least two voxels")


def parse_and_validate(config_file=None, overrides=None,
                       preset: str = "cylinder-forest-paper") -> PipelineConfig:
    """Resolve preset defaults, file values and --set flags into a validated
    PipelineConfig. Raises ConfigError naming the offending key."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; "
                          f"available: {sorted(PRESETS)}")
    doc = _deep_merge(_BASE, PRESETS[preset])
    if config_file is not None:
        try:
            file_doc = json.loads(Path(config_file).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        file_preset = file_doc.pop("preset", None)
        if file_preset is not None and file_preset != preset:
            if file_preset not in PRESETS:
                raise ConfigError(f"unknown preset {file_preset!r}")
            doc = _deep_merge(_BASE, PRESETS[file_preset])
            preset = file_preset
        doc = _deep_merge(doc, file_doc)
    doc = apply_overrides(doc, overrides)
    # a JSON null completer disables the stage entirely
    if doc["completer"] is not None and doc["completer"].get("kind") is None:
        doc["completer"] = None
    _validate(doc)
    return PipelineConfig(preset=preset, doc=doc)
