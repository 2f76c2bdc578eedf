"""Run configuration: one JSON document for scenes, physics, reward and training.

Scene references are file paths (relative to the config file), or
``builtin:<name>`` for a shipped room, or ``generated:<seed>``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import PhysicsParams
from .env import EnvConfig
from .evaluate import EvalConfig
from .ppo.train import PRESETS, TrainConfig
from .reward import RewardParams
from .scene import Scene, builtin_scene, generate_scene, load_scene
from .sensing import CameraModel
from .usersim import UserSimParams


class ConfigError(Exception):
    pass


_SECTIONS = {
    "env": EnvConfig,
    "physics": PhysicsParams,
    "user": UserSimParams,
    "reward": RewardParams,
    "camera": CameraModel,
    "train": TrainConfig,
    "eval": EvalConfig,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class RunConfig:
    train_scenes: list[str] = field(default_factory=lambda: ["builtin:office_small", "builtin:living_large"])
    validation_scenes: list[str] = field(default_factory=lambda: ["generated:101", "generated:202"])
    env: EnvConfig = field(default_factory=EnvConfig)
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    user: UserSimParams = field(default_factory=UserSimParams)
    reward: RewardParams = field(default_factory=RewardParams)
    camera: CameraModel = field(default_factory=CameraModel)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(**PRESETS["desk"]))
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/default"
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        allowed = {"train_scenes", "validation_scenes", "out_dir", *_SECTIONS}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        cfg = cls(base_dir=Path(base_dir))
        for key in ("train_scenes", "validation_scenes"):
            if key in data:
                if not isinstance(data[key], list) or not all(isinstance(s, str) for s in data[key]):
                    raise ConfigError(f"{key}: expected a list of strings")
                setattr(cfg, key, list(data[key]))
        if "out_dir" in data:
            cfg.out_dir = str(data["out_dir"])
        for key, klass in _SECTIONS.items():
            if key in data:
                setattr(cfg, key, _build(klass, data[key], key))
        return cfg

    def to_dict(self) -> dict:
        out = {"train_scenes": self.train_scenes, "validation_scenes": self.validation_scenes,
               "out_dir": self.out_dir}
        for key in _SECTIONS:
            d = dataclasses.asdict(getattr(self, key))
            out[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def resolve_path(self, ref: str) -> Path:
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        for ref in self.train_scenes + self.validation_scenes:
            if ":" in ref and ref.split(":", 1)[0] in ("builtin", "generated"):
                continue
            if not self.resolve_path(ref).exists():
                raise ConfigError(f"scene file not found: {self.resolve_path(ref)}")
        if not self.train_scenes:
            raise ConfigError("train_scenes: at least one scene required")

    def scene(self, ref: str) -> Scene:
        return resolve_scene(ref, self.base_dir)


def resolve_scene(ref: str, base_dir=".") -> Scene:
    kind, _, rest = ref.partition(":")
    if kind == "builtin" and rest:
        return builtin_scene(rest)
    if kind == "generated" and rest:
        try:
            seed = int(rest)
        except ValueError:
            raise ConfigError(f"bad generated scene reference {ref!r}") from None
        return generate_scene(seed, name=f"generated-{seed}")
    p = Path(ref)
    if not p.is_absolute():
        p = Path(base_dir) / p
    if not p.exists():
        raise ConfigError(f"scene file not found: {p}")
    return load_scene(p)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    cfg = RunConfig.from_dict(data, path.parent)
    cfg.validate()
    return cfg


def apply_preset(cfg: RunConfig, preset: str) -> RunConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg.train = dataclasses.replace(cfg.train, **PRESETS[preset])
    return cfg


def split_seed(master: int, n: int) -> list[int]:
    """Deterministic per-component seeds from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]

