"""Seeded online training loop with periodic evaluation."""
from __future__ import annotations

import json
import os
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..agent.checkpoint import save_agent
from ..agent.td3 import NonFiniteLoss, SpectralAgent
from ..envs import ActionRepeat, make_env
from ..nn.optim import NonFiniteGradient
from ..pomdp import LStepBuilder, WindowedEnv
from ..replay import ReplayBuffer, Transition
from .config import ExperimentConfig
from .metrics import LOSS_NAMES, MetricsRow, emit_metrics

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONFINITE = 3


def substream_seed(master: int, name: str) -> np.random.SeedSequence:
    """Independent named stream derived from the master seed."""
    return np.random.SeedSequence([int(master), zlib.crc32(name.encode("utf-8"))])


def substream(master: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(master, name))


def substream_int(master: int, name: str) -> int:
    return int(substream_seed(master, name).generate_state(1)[0])


class RunHalted(RuntimeError):
    def __init__(self, path, reason):
        self.path = path
        super().__init__(f"run halted: {reason}; diagnostics at {path}")


@dataclass
class RunResult:
    rows: list
    exit_code: int = EXIT_OK
    frames: int = 0
    updates: int = 0
    paths: dict = field(default_factory=dict)
    agent: object = None


def build_env(cfg: ExperimentConfig, seed_name: str):
    env = make_env(cfg.env, substream_int(cfg.seed, seed_name), init=cfg.pendulum_init)
    env = ActionRepeat(env, cfg.action_repeat)
    if uses_window(cfg):
        env = WindowedEnv(env, cfg.window)
    return env


def uses_window(cfg: ExperimentConfig) -> bool:
    return cfg.window > 1 or cfg.window_adapter


def build_agent(cfg: ExperimentConfig, env) -> SpectralAgent:
    if uses_window(cfg):
        target_dim = LStepBuilder(cfg.window, cfg.discount, cfg.window_target).target_dim(env.raw_obs_dim)
    else:
        target_dim = env.obs_dim
    rngs = {"nets": substream(cfg.seed, "nets"), "agent": substream(cfg.seed, "negatives"),
            "explore": substream(cfg.seed, "explore")}
    return SpectralAgent(cfg.agent_config(), env.obs_dim, env.act_dim, env.action_bound,
                         rep_target_dim=target_dim, rngs=rngs)


def evaluate(agent: SpectralAgent, env, n_episodes: int):
    """Undiscounted returns of the deterministic policy; ``(mean, population std, returns)``."""
    returns = []
    for _ in range(n_episodes):
        obs, done, total = env.reset(), False, 0.0
        while not done:
            obs, r, done = env.step(agent.act(obs, explore=False))
            total += r
        returns.append(total)
    returns = np.asarray(returns)
    return float(returns.mean()), float(returns.std()), returns


def _frames_of(env):
    inner = env.env if isinstance(env, WindowedEnv) else env
    return inner.last_frames


def run_experiment(cfg: ExperimentConfig, out_dir=None, save_checkpoint: bool = True,
                   progress=None) -> RunResult:
    """Run one configuration; writes metrics.csv, summary.json, config.txt and checkpoint.bin."""
    env = build_env(cfg, "env")
    eval_env = build_env(cfg, "eval_env")
    agent = build_agent(cfg, env)
    windowed = uses_window(cfg)
    builder = None
    if windowed:
        builder = LStepBuilder(cfg.window, cfg.discount, cfg.window_target)
    elif cfg.n_step > 1:
        builder = LStepBuilder(cfg.n_step, cfg.discount, "frame")
    buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, env.act_dim,
                          rng_seed=substream_int(cfg.seed, "buffer"), rep_target_dim=agent.rep_target_dim,
                          gamma=cfg.discount)
    warm_rng = substream(cfg.seed, "warmup")
    loss_names = LOSS_NAMES[cfg.kind]
    paths = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        paths = {k: os.path.join(out_dir, v) for k, v in
                 (("csv", "metrics.csv"), ("summary", "summary.json"), ("config", "config.txt"),
                  ("checkpoint", "checkpoint.bin"), ("halt", "halt.json"))}
        with open(paths["config"], "w") as f:
            f.write(cfg.dumps())

    rows, acc, n_acc = [], {}, 0
    frames, next_eval = 0, cfg.eval_interval
    t0 = time.perf_counter()
    bound = env.action_bound
    obs = env.reset()
    if builder is not None:
        builder.reset()
    stop = False
    try:
        while frames < cfg.total_frames and not stop:
            if frames < cfg.warmup_frames:
                action = warm_rng.uniform(-bound, bound, size=env.act_dim)
            else:
                action = agent.act(obs)
            obs2, r, done = env.step(action)
            frames += _frames_of(env)
            if builder is None:
                t = Transition(obs, action, r, obs2, False)
                agent.observe(obs, obs2)
                buffer.push(t)
            else:
                o_next = env.last_raw if windowed else obs2
                t = builder.push(obs, action, r, o_next, obs2)
                if t is not None:
                    agent.observe(t.state, t.rep_target)
                    buffer.push(t)
            if frames >= cfg.warmup_frames and len(buffer) > 0:
                logs = agent.update(buffer.sample(cfg.batch_size))
                for k, v in logs.items():
                    acc[k] = acc.get(k, 0.0) + v
                n_acc += 1
            obs = obs2
            if done:
                obs = env.reset()
                if builder is not None:
                    builder.reset()
            while frames >= next_eval:
                if frames >= cfg.warmup_frames:
                    mean, std, _ = evaluate(agent, eval_env, cfg.eval_episodes)
                    losses = {k: acc[k] / n_acc for k in acc} if n_acc else {}
                    rows.append(MetricsRow(next_eval, mean, std, losses, time.perf_counter() - t0, cfg.seed))
                    acc, n_acc = {}, 0
                    if progress is not None:
                        progress(rows[-1])
                    if cfg.stop_at_return is not None and mean >= cfg.stop_at_return:
                        stop = True
                next_eval += cfg.eval_interval
    except (NonFiniteLoss, NonFiniteGradient, FloatingPointError) as e:
        diag = {"frame": frames, "updates": agent.n_updates, "error": str(e)}
        halt = paths.get("halt")
        if halt:
            with open(halt, "w") as f:
                json.dump(diag, f, indent=2)
            if save_checkpoint:
                save_agent(paths["checkpoint"] + ".halt", agent, {"env": cfg.env, "frame": frames})
            emit_metrics(rows, cfg.smoothing_window, paths["csv"], paths["summary"], loss_names,
                         {"halted": True, "seed": cfg.seed})
        return RunResult(rows, EXIT_NONFINITE, frames, agent.n_updates, paths, agent)

    if paths:
        emit_metrics(rows, cfg.smoothing_window, paths["csv"], paths["summary"], loss_names,
                     {"seed": cfg.seed, "kind": cfg.kind, "env": cfg.env, "frames_run": frames,
                      "updates": agent.n_updates, "wallclock_s": time.perf_counter() - t0})
        if save_checkpoint:
            save_agent(paths["checkpoint"], agent, {"env": cfg.env, "frame": frames, "window": cfg.window,
                                                    "window_adapter": windowed,
                                                    "action_repeat": cfg.action_repeat,
                                                    "pendulum_init": cfg.pendulum_init})
    return RunResult(rows, EXIT_OK, frames, agent.n_updates, paths, agent)
