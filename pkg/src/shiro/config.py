"""Run configuration: defaults, JSON loading, validation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

# variant -> (high-level policy kind, low-level policy kind); flat-sac has no hierarchy
VARIANTS = {
    "hiro": ("deterministic", "deterministic"),
    "shiro-hl": ("squashed_gaussian", "deterministic"),
    "shiro-ll": ("deterministic", "squashed_gaussian"),
    "shiro-bl": ("squashed_gaussian", "squashed_gaussian"),
    "flat-sac": (None, "squashed_gaussian"),
}
TEMPERATURE_MODES = ("const", "learned")


class ConfigError(ValueError):
    """Invalid or unknown configuration fields."""


@dataclass
class RunConfig:
    env_name: str = "point_maze"
    variant: str = "shiro-hl"
    temperature_mode_high: str = "learned"
    temperature_mode_low: str = "learned"
    alpha_high_init: float = 1.0
    alpha_low_init: float = 0.1
    target_entropy_high: float | None = None
    target_entropy_low: float | None = None
    c: int = 10
    total_env_steps: int = 300_000
    seed: int = 0
    eval_interval: int = 5000
    eval_episodes: int = 10
    episode_horizon: int = 500
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    alpha_lr: float = 3e-4
    batch_size: int = 128
    buffer_capacity: int = 200_000
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    reward_scale_high: float = 0.1
    reward_scale_low: float = 1.0
    train_interval_high: int = 10
    train_interval_low: int = 1
    target_update_interval_high: int = 10
    target_update_interval_low: int = 1
    actor_delay_high: int = 2
    actor_delay_low: int = 2
    exploration_sigma_high: float | None = None
    exploration_sigma_low: float | None = None
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    alpha_kl: float = 0.0
    kl_probe_states: int = 256
    relabel: bool = True
    relabel_random_candidates: int = 8
    relabel_sigma_frac: float = 0.5
    start_steps: int = 0

    @property
    def policy_kinds(self):
        return VARIANTS[self.variant]

    @property
    def hierarchical(self) -> bool:
        return self.variant != "flat-sac"

    def errors(self) -> list:
        errs = []
        if self.variant not in VARIANTS:
            errs.append(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        for name in ("temperature_mode_high", "temperature_mode_low"):
            if getattr(self, name) not in TEMPERATURE_MODES:
                errs.append(f"{name} must be one of {TEMPERATURE_MODES}")
        for name in ("c", "eval_interval", "eval_episodes", "episode_horizon", "batch_size",
                     "buffer_capacity", "train_interval_high", "train_interval_low",
                     "target_update_interval_high", "target_update_interval_low",
                     "actor_delay_high", "actor_delay_low", "kl_probe_states"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errs.append(f"{name} must be a positive integer, got {v!r}")
        for name in ("total_env_steps", "seed", "start_steps", "relabel_random_candidates"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                errs.append(f"{name} must be a non-negative integer, got {v!r}")
        for name in ("alpha_high_init", "alpha_low_init", "actor_lr", "critic_lr", "alpha_lr"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v <= 0:
                errs.append(f"{name} must be positive, got {v!r}")
        if not 0.0 < self.gamma < 1.0:
            errs.append("gamma must lie in (0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            errs.append("tau must lie in [0, 1]")
        if self.alpha_kl < 0:
            errs.append("alpha_kl must be non-negative")
        for name in ("exploration_sigma_high", "exploration_sigma_low"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                errs.append(f"{name} must be positive when given")
        if not self.hidden_sizes or any(not isinstance(h, int) or h < 1 for h in self.hidden_sizes):
            errs.append("hidden_sizes must be a non-empty list of positive integers")
        return errs

    def validate(self) -> "RunConfig":
        errs = self.errors()
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.hidden_sizes = list(cfg.hidden_sizes)
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)
