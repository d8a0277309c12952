"""Flat ``key = value`` experiment configuration with typed validation."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from ..agent.td3 import AGENT_KINDS, AgentConfig
from ..envs import ENV_NAMES
from ..replearn.learners import RepLearnerConfig
from ..replearn.losses import DENOMINATOR_MODES


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # protocol
    env: str = "pendulum"
    kind: str = "ctrlsr"
    seed: int = 0
    total_frames: int = 150_000
    action_repeat: int = 2
    eval_interval: int = 10_000
    eval_episodes: int = 10
    warmup_frames: int = 10_000
    discount: float = 0.99
    smoothing_window: int = 5
    stop_at_return: Optional[float] = None
    pendulum_init: str = "random"
    # replay and updates
    buffer_capacity: int = 1_000_000
    batch_size: int = 128
    n_step: int = 1
    window: int = 1
    window_adapter: bool = False
    window_target: str = "window"
    # actor-critic
    hidden: int = 64
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_rep: float = 3e-4
    tau: float = 0.005
    rep_tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.3
    expl_noise: float = 0.2
    policy_delay: int = 1
    reward_weight: float = 0.1
    coupled: bool = False
    learn_frequencies: bool = True
    normalize_obs: bool = True
    # representation
    rep_dim: int = 32
    rep_hidden: int = 64
    scl_lambda: float = 1.0
    vae_beta: float = 0.1
    n_levels: int = 25
    noise_lo: float = 0.01
    noise_hi: float = 0.5
    n_negatives: int = 31
    mc_samples: int = 4
    rff_count: int = 64
    denominator_mode: str = "include_positive"
    residual: bool = True
    layer_norm: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.env in ENV_NAMES, f"unknown env {self.env!r}; choose from {ENV_NAMES}")
        need(self.kind in AGENT_KINDS, f"unknown learner kind {self.kind!r}; choose from {AGENT_KINDS}")
        need(self.total_frames >= 0, "total_frames must be >= 0")
        need(self.action_repeat >= 1, "action_repeat must be >= 1")
        need(self.eval_interval >= 1, "eval_interval must be >= 1")
        need(self.eval_episodes >= 1, "eval_episodes must be >= 1")
        need(self.warmup_frames >= 0, "warmup_frames must be >= 0")
        need(0.0 <= self.discount < 1.0, "discount must lie in [0, 1)")
        need(self.smoothing_window >= 1, "smoothing_window must be >= 1")
        need(self.pendulum_init in ("random", "down"), "pendulum_init must be random or down")
        need(self.buffer_capacity >= 1, "buffer_capacity must be >= 1")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.n_step >= 1, "n_step must be >= 1")
        need(self.window >= 1, "window must be >= 1")
        need(not (self.window > 1 and self.n_step > 1), "window > 1 already implies window-step returns")
        need(self.window_target in ("window", "frame"), "window_target must be window or frame")
        need(self.denominator_mode in DENOMINATOR_MODES, f"denominator_mode must be one of {DENOMINATOR_MODES}")
        need(self.rep_dim >= 1 and self.hidden >= 1 and self.rep_hidden >= 1, "widths must be positive")
        if self.kind in ("scl", "ctrlsr"):
            need(self.batch_size % (self.n_negatives + 1) == 0,
                 "batch_size must be a multiple of n_negatives + 1 (in-batch negative groups)")
        try:
            self.agent_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    # -- derived configs ------------------------------------------------------------
    def rep_config(self) -> RepLearnerConfig:
        return RepLearnerConfig(
            kind=self.kind if self.kind != "td3" else "ctrlsr", rep_dim=self.rep_dim, hidden=self.rep_hidden,
            scl_lambda=self.scl_lambda, vae_beta=self.vae_beta, n_levels=self.n_levels,
            noise_lo=self.noise_lo, noise_hi=self.noise_hi, n_negatives=self.n_negatives,
            mc_samples=self.mc_samples, rff_count=self.rff_count, denominator_mode=self.denominator_mode,
            residual=self.residual, layer_norm=self.layer_norm)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            kind=self.kind, hidden=self.hidden, lr_actor=self.lr_actor, lr_critic=self.lr_critic,
            lr_rep=self.lr_rep, tau=self.tau, rep_tau=self.rep_tau, discount=self.discount,
            policy_noise=self.policy_noise, noise_clip=self.noise_clip, expl_noise=self.expl_noise,
            policy_delay=self.policy_delay, batch_size=self.batch_size, reward_weight=self.reward_weight,
            coupled=self.coupled, learn_frequencies=self.learn_frequencies,
            normalize_obs=self.normalize_obs, rep=self.rep_config())

    # -- text round trip -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_dict().items())

    def replace(self, **overrides) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(overrides)
        return ExperimentConfig(**d)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, text: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    t = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if t == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if t == "int":
            return int(text.replace("_", ""))
        if t == "float":
            return float(text)
        if t == "Optional[float]":
            return None if text.lower() == "none" else float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from e


def parse_overrides(pairs) -> dict:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"override must look like key=value, got {p!r}")
        k, v = p.split("=", 1)
        k = k.strip()
        out[k] = _parse_value(k, v)
    return out


def loads_config(text: str, overrides=None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in values:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        values[k] = _parse_value(k, v)
    if overrides:
        values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path, overrides=None) -> ExperimentConfig:
    with open(path) as f:
        return loads_config(f.read(), overrides)


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as f:
        f.write(cfg.dumps())
