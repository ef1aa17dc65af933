"""Experiment configuration: one file with scene/dataset/model/train sections.

The default configuration ships the benchmark's split sizes
(20000/4000/1000/1000) and the full-width model zoo, plus a "tiny" profile
(500/100/100/100 splits, reduced widths) for desk-scale runs. A profile is a
deep override applied on top of the base sections. Unknown keys anywhere are
rejected.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .datastore import DEFAULT_SPLITS, TINY_SPLITS
from .errors import ConfigError
from .models import ModelSpec
from .scene import SceneConfig
from .training import TrainConfig

REQUIRED_MODELS = ("fcd_b", "fcd_s", "rfcd_ff", "rfcd_res", "rfcd_ed1",
                   "rfcd_ed2", "rm_gf", "tm_3d", "tm_st")

_SECTIONS = ("scene", "dataset", "models", "train", "grid", "profiles")
_DATASET_KEYS = ("splits", "shard_size", "quantized")


def default_config() -> dict:
    """The shipped configuration (also serialized to configs/default.json)."""
    scene = dataclasses.asdict(SceneConfig())
    fcd_s_widths = {"depth": 2, "layers_per_db": 7, "growth": 8,
                    "first_conv_features": 48}

    def rfcd(kind, **extra):
        return {"family": "rfcd", **fcd_s_widths, "fm_kind": kind,
                "hidden_kernel_sizes": [9, 5, 3, 5, 9], **extra}
    models = {
        "fcd_b": {"family": "fcd", "depth": 2, "layers_per_db": 9, "growth": 12,
                  "first_conv_features": 48},
        "fcd_s": {"family": "fcd", **fcd_s_widths},
        "rfcd_ff": rfcd("ff"),
        "rfcd_res": rfcd("res"),
        "rfcd_ed1": rfcd("ed", alpha_ed=1.0),
        "rfcd_ed2": rfcd("ed", alpha_ed=2.0),
        "rm_gf": {"family": "rm_gf", **fcd_s_widths,
                  "gf_alpha": 0.625, "gf_hidden_kernel": 9},
        # Widths chosen so every temporal model lands within a few percent of
        # rfcd_ff's total parameter count (see the parity test).
        "tm_3d": {"family": "tm_3d", "depth": 2, "layers_per_db": 6, "growth": 8,
                  "first_conv_features": 32},
        "tm_st": {"family": "tm_st", "depth": 2, "layers_per_db": 7, "growth": 12,
                  "first_conv_features": 40},
    }
    tiny_widths = {"layers_per_db": 3, "growth": 4, "first_conv_features": 12}
    tiny_rfcd = {**tiny_widths, "hidden_kernel_sizes": [5, 5, 3, 5, 5]}
    profiles = {
        "tiny": {
            "dataset": {"splits": dict(TINY_SPLITS)},
            "models": {
                "fcd_b": {"layers_per_db": 4, "growth": 6, "first_conv_features": 16},
                "fcd_s": tiny_widths,
                "rfcd_ff": tiny_rfcd,
                "rfcd_res": tiny_rfcd,
                "rfcd_ed1": tiny_rfcd,
                "rfcd_ed2": tiny_rfcd,
                "rm_gf": tiny_widths,
                "tm_3d": tiny_widths,
                "tm_st": {**tiny_widths, "growth": 6},
            },
            "train": {"learning_rate": 2e-3, "max_epochs": 40, "patience": 8},
        },
    }
    raw = {
        "scene": scene,
        "dataset": {"splits": dict(DEFAULT_SPLITS), "shard_size": 512,
                    "quantized": False},
        "models": models,
        "train": dataclasses.asdict(TrainConfig()),
        "profiles": profiles,
    }
    # canonicalize to what a JSON round trip produces (tuples become lists)
    return json.loads(json.dumps(raw))


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key in merged and isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = _deep_merge(merged[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _spec_from_dict(name: str, fields: dict) -> ModelSpec:
    allowed = {f.name for f in dataclasses.fields(ModelSpec)} - {"name"}
    _reject_unknown(fields, allowed, f"models.{name}")
    fields = dict(fields)
    if fields.get("hidden_kernel_sizes") is not None:
        fields["hidden_kernel_sizes"] = tuple(fields["hidden_kernel_sizes"])
    return ModelSpec(name=name, **fields)


@dataclass
class ExperimentConfig:
    scene: SceneConfig
    splits: dict[str, int]
    shard_size: int
    quantized: bool
    model_specs: dict[str, ModelSpec]
    train: TrainConfig
    grid: dict | None
    resolved: dict  # the profile-applied raw dict, used for stamping

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.resolved, sort_keys=True).encode("utf-8")).hexdigest()


def resolve_config(raw: dict | None = None, profile: str = "full") -> ExperimentConfig:
    raw = copy.deepcopy(raw) if raw is not None else default_config()
    _reject_unknown(raw, _SECTIONS, "config")
    profiles = raw.pop("profiles", {})
    if profile != "full":
        if profile not in profiles:
            raise ConfigError(f"profile {profile!r} not defined "
                              f"(have {sorted(profiles)})")
        override = profiles[profile]
        _reject_unknown(override, ("scene", "dataset", "models", "train", "grid"),
                        f"profiles.{profile}")
        raw = _deep_merge(raw, override)

    scene_fields = raw.get("scene", {})
    allowed_scene = {f.name for f in dataclasses.fields(SceneConfig)}
    _reject_unknown(scene_fields, allowed_scene, "scene")
    scene_fields = {k: tuple(v) if isinstance(v, list) else v
                    for k, v in scene_fields.items()}
    scene = SceneConfig(**scene_fields)

    dataset = raw.get("dataset", {})
    _reject_unknown(dataset, _DATASET_KEYS, "dataset")
    splits = dict(dataset.get("splits", DEFAULT_SPLITS))
    unknown_splits = set(splits) - {"train", "val", "test", "clean_test"}
    if unknown_splits:
        raise ConfigError(f"unknown split(s) {sorted(unknown_splits)}")

    models_raw = raw.get("models", {})
    missing = set(REQUIRED_MODELS) - set(models_raw)
    if missing:
        raise ConfigError(f"models section must define {sorted(missing)}")
    specs = {name: _spec_from_dict(name, fields)
             for name, fields in models_raw.items()}

    train_fields = raw.get("train", {})
    allowed_train = {f.name for f in dataclasses.fields(TrainConfig)}
    _reject_unknown(train_fields, allowed_train, "train")
    train = TrainConfig(**train_fields)

    return ExperimentConfig(
        scene=scene,
        splits=splits,
        shard_size=int(dataset.get("shard_size", 512)),
        quantized=bool(dataset.get("quantized", False)),
        model_specs=specs,
        train=train,
        grid=raw.get("grid"),
        resolved=raw,
    )


def load_config(path: str | Path | None = None, profile: str = "full") -> ExperimentConfig:
    if path is None:
        return resolve_config(None, profile)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw, profile)


def write_default_config(path: str | Path) -> None:
    Path(path).write_text(json.dumps(default_config(), indent=2, sort_keys=True) + "\n")
