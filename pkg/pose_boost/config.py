# pose_boost/config.py
"""
Centralized configuration management.

Loads the built-in defaults, merges ``[tool.pose_boost]`` from pyproject.toml,
then an explicit experiment TOML file, and finally runtime overrides. Network
shape keys come from a named preset unless set explicitly.
"""
from __future__ import annotations

import copy
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Literal, Mapping, MutableMapping, get_args, get_origin, get_type_hints

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from pose_boost.cache import CacheConfig
from pose_boost.errors import ConfigError
from pose_boost.models import Boosting
from pose_boost.serialization import config_digest
from pose_boost.skeleton import VARIANT_KINDS, GraphVariant, SkeletonGraph, resolve_graph, variant

log = logging.getLogger(__name__)

# Shape defaults per preset; explicit [network] keys win.
PRESETS: dict[str, dict[str, int]] = {
    "desk": {
        "input_size": 64,
        "feature_size": 16,
        "channels_per_joint": 4,
        "feature_channels": 0,  # 0 means joints * channels_per_joint
        "backbone_channels": 16,
        "aggregation_channels": 32,
        "head_channels": 8,
        "depth_channels": 16,
    },
    "tiny": {
        "input_size": 16,
        "feature_size": 16,
        "channels_per_joint": 2,
        "feature_channels": 0,
        "backbone_channels": 4,
        "aggregation_channels": 4,
        "head_channels": 2,
        "depth_channels": 2,
    },
    "full": {
        "input_size": 256,
        "feature_size": 64,
        "channels_per_joint": 16,
        "feature_channels": 256,
        "backbone_channels": 128,
        "aggregation_channels": 256,
        "head_channels": 32,
        "depth_channels": 64,
    },
}

DEFAULT_CONFIG: dict[str, Any] = {
    "network": {
        "preset": "desk",
        "stacks": 2,
        "cell": "convlstm",
        "boosting": "fb_plus",  # none | fb | fb_plus
        "gamma": 0.1,
        "omega_sq": 2.0,
        "heatmap_sigma": 1.0,
        "activation": "relu",
        "kernel_size": 3,
    },
    "graph": {
        "name": "body16",  # shipped graph name or path to a graph file
        "variant": "bidirectional",
    },
    "training": {
        "epochs": 20,
        "batch_size": 4,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "lr_decay": 0.5,
        "lr_step": 0,  # steps between decays, 0 disables
        "init_seed": 1,
        "shuffle_seed": 2,
        "checkpoint_every": 0,
        "max_steps": 0,  # 0 means epochs * steps per epoch
        "precision": "float32",
        "augment": False,
    },
    "data": {
        "train_dir": "data/train",
        "test_dir": "data/test",
        "seed": 0,
        "num_train": 64,
        "num_test": 16,
        "depth_scale": 0.0,  # 0 means input_size / 2
        "background": "noise",
        "margin": 0.1,
        "workers": 1,
        "generate_missing": True,
    },
    "augment": {
        "max_shift": 8.0,
        "scale_min": 0.85,
        "scale_max": 1.15,
        "max_rotation": 30.0,  # degrees
    },
    "eval": {
        "pck_thresholds": [5.0, 10.0, 15.0],
        "pckf_pair": [],  # two joint indices whose distance normalizes PCKf
        "pckf_thresholds": [0.5, 1.0],
    },
    "cache": {
        "enabled": True,
        "directory": ".pose_boost_cache",
        "expire_seconds": 0,  # 0 means never
    },
}


def _deep_merge_dict(
    base: MutableMapping[str, Any], overrides: Mapping[str, Any]
) -> MutableMapping[str, Any]:
    """Recursively merge dicts."""
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), MutableMapping):
            base[key] = _deep_merge_dict(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


def _read_toml(path: Path) -> dict[str, Any]:
    with path.open("rb") as f:
        return tomllib.load(f)


def load_config(
    path: Path | str | None = None,
    *,
    pyproject_path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """
    Merge, in order: DEFAULT_CONFIG, ``[tool.pose_boost]`` of pyproject.toml
    (working directory unless given), the experiment file at `path`, `overrides`.

    An unreadable pyproject.toml is logged and skipped; an unreadable
    experiment file raises ConfigError.
    """
    config: dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)

    if pyproject_path is None:
        pyproject_path = Path.cwd() / "pyproject.toml"
    if pyproject_path.exists():
        try:
            project_config = _read_toml(pyproject_path).get("tool", {}).get("pose_boost", {})
        except (OSError, tomllib.TOMLDecodeError) as e:
            log.warning("Failed to load or parse %s: %s. Ignoring it.", pyproject_path, e)
            project_config = {}
        if project_config:
            log.debug("Merging [tool.pose_boost] from %s", pyproject_path)
            _deep_merge_dict(config, project_config)
    else:
        log.debug("No pyproject.toml at %s", pyproject_path)

    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            _deep_merge_dict(config, _read_toml(p))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {p}: {e}") from e
        log.info("Loaded experiment config from %s", p)

    if overrides:
        _deep_merge_dict(config, overrides)
    return config


def resolve_config(raw: Mapping[str, Any]) -> dict[str, Any]:
    """Fill preset shape keys and defaults, reject unknown keys."""
    config: dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in raw.items():
        if section not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, Mapping):
            raise ConfigError(f"config section [{section}] must be a table, got {values!r}")
    network_raw = dict(raw.get("network", {}))
    preset = network_raw.get("preset", DEFAULT_CONFIG["network"]["preset"])
    if not isinstance(preset, str) or preset not in PRESETS:
        raise ConfigError(f"unknown network preset {preset!r}; choose from {sorted(PRESETS)}")
    config["network"].update(PRESETS[preset])
    for section, values in raw.items():
        known = config[section]
        for key in values:
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")
        _deep_merge_dict(known, values)
    return config


_SCALAR_TYPES: dict[Any, tuple[type, ...]] = {int: (int,), float: (int, float), str: (str,), bool: (bool,)}


def _check_types(section: str, values: Any) -> None:
    """Reject scalar fields whose TOML value has the wrong type; bools never count as numbers."""
    hints = get_type_hints(type(values))
    for f in fields(values):
        hint = hints[f.name]
        if get_origin(hint) is Literal:
            hint = str
        allowed = _SCALAR_TYPES.get(hint)
        if allowed is None:
            continue
        value = getattr(values, f.name)
        if not isinstance(value, allowed) or (isinstance(value, bool) and hint is not bool):
            raise ConfigError(f"{section}.{f.name} must be {hint.__name__}, got {type(value).__name__} {value!r}")


@dataclass(frozen=True)
class NetworkConfig:
    preset: str
    input_size: int
    feature_size: int
    channels_per_joint: int
    feature_channels: int
    backbone_channels: int
    aggregation_channels: int
    head_channels: int
    depth_channels: int
    stacks: int
    cell: str
    boosting: Boosting
    gamma: float
    omega_sq: float
    heatmap_sigma: float
    activation: str
    kernel_size: int

    @property
    def stride(self) -> int:
        return self.input_size // self.feature_size

    @property
    def omega(self) -> float:
        return math.sqrt(self.omega_sq)

    @property
    def cell_kind(self) -> str:
        """Recurrent unit actually run inside the boosting module."""
        return "convlstm_ccg" if self.boosting == "fb_plus" else self.cell

    def total_channels(self, joints: int) -> int:
        return self.feature_channels or joints * self.channels_per_joint

    def validate(self) -> None:
        if self.stacks < 1:
            raise ConfigError(f"network.stacks must be at least 1, got {self.stacks}")
        if self.gamma < 0:
            raise ConfigError(f"network.gamma must be non-negative, got {self.gamma}")
        if self.omega_sq <= 0:
            raise ConfigError(f"network.omega_sq must be positive, got {self.omega_sq}")
        if self.heatmap_sigma <= 0:
            raise ConfigError("network.heatmap_sigma must be positive")
        if self.feature_size <= 0 or self.input_size % self.feature_size:
            raise ConfigError(
                f"input_size {self.input_size} is not a multiple of feature_size {self.feature_size}"
            )
        if self.feature_size % 16:
            raise ConfigError(
                f"feature_size {self.feature_size} must be divisible by 16 for the four depth-head pools"
            )
        if self.cell not in ("convlstm", "convgru", "convrnn"):
            raise ConfigError(f"unknown network.cell {self.cell!r}")
        if self.boosting not in get_args(Boosting):
            raise ConfigError(f"unknown network.boosting {self.boosting!r}")
        if self.boosting == "fb_plus" and self.cell != "convlstm":
            raise ConfigError("fb_plus gating needs cell = 'convlstm'")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown network.activation {self.activation!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("network.kernel_size must be a positive odd number")
        widths = (
            self.channels_per_joint,
            self.backbone_channels,
            self.aggregation_channels,
            self.head_channels,
            self.depth_channels,
        )
        if min(widths) < 1 or self.feature_channels < 0:
            raise ConfigError("network channel widths must be positive")


@dataclass(frozen=True)
class GraphConfig:
    name: str
    variant: str

    def validate(self) -> None:
        if self.variant not in VARIANT_KINDS:
            raise ConfigError(f"unknown graph.variant {self.variant!r}; choose from {VARIANT_KINDS}")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float
    lr_decay: float
    lr_step: int
    init_seed: int
    shuffle_seed: int
    checkpoint_every: int
    max_steps: int
    precision: str
    augment: bool

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("training.epochs and training.batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("training.learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("training.momentum must be in [0, 1)")
        if self.lr_decay <= 0 or self.lr_step < 0 or self.checkpoint_every < 0 or self.max_steps < 0:
            raise ConfigError("training schedule values out of range")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown training.precision {self.precision!r}")


@dataclass(frozen=True)
class DataConfig:
    train_dir: str
    test_dir: str
    seed: int
    num_train: int
    num_test: int
    depth_scale: float
    background: str
    margin: float
    workers: int
    generate_missing: bool

    def validate(self) -> None:
        if self.num_train < 1 or self.num_test < 1:
            raise ConfigError("data.num_train and data.num_test must be at least 1")
        if self.depth_scale < 0:
            raise ConfigError("data.depth_scale must be non-negative")
        if self.background not in ("flat", "noise"):
            raise ConfigError(f"unknown data.background {self.background!r}")
        if not 0 <= self.margin < 0.5:
            raise ConfigError("data.margin must be in [0, 0.5)")
        if self.workers < 1:
            raise ConfigError("data.workers must be at least 1")


@dataclass(frozen=True)
class AugmentConfig:
    max_shift: float
    scale_min: float
    scale_max: float
    max_rotation: float

    def validate(self) -> None:
        if self.max_shift < 0 or self.max_rotation < 0:
            raise ConfigError("augment ranges must be non-negative")
        if not 0 < self.scale_min <= self.scale_max:
            raise ConfigError("augment needs 0 < scale_min <= scale_max")


@dataclass(frozen=True)
class EvalConfig:
    pck_thresholds: tuple[float, ...]
    pckf_pair: tuple[int, ...]
    pckf_thresholds: tuple[float, ...]

    def validate(self) -> None:
        if not self.pck_thresholds or min(self.pck_thresholds) <= 0:
            raise ConfigError("eval.pck_thresholds must be positive")
        if len(self.pckf_pair) not in (0, 2):
            raise ConfigError("eval.pckf_pair must name exactly two joints or be empty")
        if self.pckf_thresholds and min(self.pckf_thresholds) <= 0:
            raise ConfigError("eval.pckf_thresholds must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig
    graph: GraphConfig
    training: TrainingConfig
    data: DataConfig
    augment: AugmentConfig
    eval: EvalConfig
    cache: CacheConfig
    raw: dict[str, Any]

    @classmethod
    def from_dict(cls, config: Mapping[str, Any]) -> "ExperimentConfig":
        resolved = resolve_config(config)
        try:
            d = resolved["data"]
            if not d["depth_scale"]:
                d["depth_scale"] = resolved["network"]["input_size"] / 2.0
            ev = resolved["eval"]
            c = resolved["cache"]
            exp = cls(
                network=NetworkConfig(**resolved["network"]),
                graph=GraphConfig(**resolved["graph"]),
                training=TrainingConfig(**resolved["training"]),
                data=DataConfig(**d),
                augment=AugmentConfig(**resolved["augment"]),
                eval=EvalConfig(
                    pck_thresholds=tuple(float(t) for t in ev["pck_thresholds"]),
                    pckf_pair=tuple(int(j) for j in ev["pckf_pair"]),
                    pckf_thresholds=tuple(float(t) for t in ev["pckf_thresholds"]),
                ),
                cache=CacheConfig(
                    enabled=bool(c["enabled"]),
                    directory=str(c["directory"]),
                    expire_seconds=int(c["expire_seconds"]) or None,
                ),
                raw=resolved,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed config: {e}") from e
        sections = {
            "network": exp.network,
            "graph": exp.graph,
            "training": exp.training,
            "data": exp.data,
            "augment": exp.augment,
        }
        for name, section in sections.items():
            _check_types(name, section)
        for section in (*sections.values(), exp.eval):
            section.validate()
        return exp

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.raw)

    def replace(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        """A new config with `overrides` deep-merged over this one."""
        return ExperimentConfig.from_dict(_deep_merge_dict(self.to_dict(), overrides))

    @property
    def digest(self) -> bytes:
        return config_digest(self.raw)

    def skeleton(self) -> SkeletonGraph:
        return resolve_graph(self.graph.name)

    def graph_variant(self) -> GraphVariant:
        return variant(self.skeleton(), self.graph.variant)


def load_experiment(
    path: Path | str | None = None,
    *,
    pyproject_path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_config(path, pyproject_path=pyproject_path, overrides=overrides))
