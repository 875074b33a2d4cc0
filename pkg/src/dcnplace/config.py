"""Experiment configuration: TOML in, dataclasses out, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .env import ScenarioConfig
from .topology import InvalidSpecError, TopologySpec


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class PolicyConfig:
    T: int = 5
    beta_min: float = 0.1
    beta_max: float = 0.5
    hidden: tuple[int, ...] = (128, 128)
    critic_hidden: tuple[int, ...] = (128, 128)
    time_dim: int = 16
    activation: str = "silu"
    critic_action_transform: str = "softmax"
    action_bound: float = 5.0  # 0 disables the tanh squash of final logits
    q_scale: float = 0.01  # critic output multiplier, roughly the reward magnitude
    explore_eps: float = 0.0  # per-chunk chance of a uniform random server while training
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_capacity: int = 10_000
    batch_size: int = 64
    warmup: int = 256


@dataclass(frozen=True)
class RunConfig:
    episodes: int = 5000
    eval_interval: int = 1
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out_dir: str = "runs"
    window: int = 100


@dataclass(frozen=True)
class StoreConfig:
    path: str = "knowledge_store.tsv"
    window: int = 64
    overlap: int = 16
    dim: int = 256
    top_k: int = 4


@dataclass(frozen=True)
class LLMConfig:
    backend: str = "mock"
    model: str = "gpt-4"
    url_env: str = "DCNPLACE_LLM_URL"
    key_env: str = "DCNPLACE_LLM_API_KEY"
    timeout_s: float = 30.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    topology: TopologySpec = field(default_factory=TopologySpec)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    run: RunConfig = field(default_factory=RunConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)

    def validate(self) -> None:
        try:
            self.topology.validate()
        except InvalidSpecError as e:
            raise ConfigError("topology", str(e)) from None
        try:
            self.scenario.validate()
        except ValueError as e:
            raise ConfigError("scenario", str(e)) from None
        p, r, s = self.policy, self.run, self.store
        checks = [
            ("policy.T", p.T >= 1, "must be >= 1"),
            ("policy.beta_min", 0 < p.beta_min <= p.beta_max < 1, "need 0 < beta_min <= beta_max < 1"),
            ("policy.hidden", all(h >= 1 for h in p.hidden), "layer sizes must be >= 1"),
            ("policy.critic_hidden", all(h >= 1 for h in p.critic_hidden), "layer sizes must be >= 1"),
            ("policy.time_dim", p.time_dim >= 2, "must be >= 2"),
            ("policy.activation", p.activation in ("silu", "tanh", "relu"), "must be silu, tanh or relu"),
            ("policy.critic_action_transform", p.critic_action_transform in ("softmax", "identity"),
             "must be softmax or identity"),
            ("policy.action_bound", p.action_bound >= 0, "must be >= 0 (0 disables)"),
            ("policy.q_scale", p.q_scale > 0, "must be > 0"),
            ("policy.explore_eps", 0 <= p.explore_eps <= 1, "must lie in [0, 1]"),
            ("policy.actor_lr", p.actor_lr > 0, "must be > 0"),
            ("policy.critic_lr", p.critic_lr > 0, "must be > 0"),
            ("policy.buffer_capacity", p.buffer_capacity >= 1, "must be >= 1"),
            ("policy.batch_size", p.batch_size >= 1, "must be >= 1"),
            ("policy.warmup", p.warmup >= 1, "must be >= 1"),
            ("run.episodes", r.episodes >= 0, "must be >= 0"),
            ("run.eval_interval", r.eval_interval >= 1, "must be >= 1"),
            ("run.seeds", len(r.seeds) >= 1, "seed list must be nonempty"),
            ("run.window", r.window >= 1, "must be >= 1"),
            ("store.window", s.window >= 1, "must be >= 1"),
            ("store.overlap", 0 <= s.overlap < s.window, "need 0 <= overlap < window"),
            ("store.dim", s.dim >= 1, "must be >= 1"),
            ("store.top_k", s.top_k >= 1, "must be >= 1"),
            ("llm.backend", self.llm.backend in ("mock", "remote"), "must be mock or remote"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)


def _coerce(value, tp, key):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(key, "expected a table")
        return _build(tp, value, key)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(key, "expected an array")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{key}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(key, f"expected {len(args)} values")
        return tuple(_coerce(v, a, f"{key}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")
    kwargs = {k: _coerce(v, hints[k], f"{prefix}.{k}" if prefix else k) for k, v in data.items()}
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("", f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("", f"parse error in {path}: {e}") from None
    return from_dict(data)


def to_dict(cfg: ExperimentConfig) -> dict:
    def conv(v):
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return v

    return conv(dataclasses.asdict(cfg))


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def config_reference() -> str:
    """Every key with its default, as a commented TOML document."""
    lines = ["# dcnplace experiment configuration: all keys and their defaults", ""]
    lines.append(dump_config(ExperimentConfig()))
    return "\n".join(lines)
