"""Continuous-control environments used by the training harness."""
from __future__ import annotations

import math

import numpy as np


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


class PendulumEnv:
    """Frictionless torque-driven pendulum; angle 0 is upright.

    One step applies the explicit Euler update::

        vel' = clip(vel + (3 g / (2 l) * sin(theta) + 3 / (m l^2) * u) * dt, +-max_speed)
        theta' = wrap(theta + vel' * dt)

    and pays ``-(theta^2 + 0.1 vel^2 + 0.001 u^2)`` evaluated on the state
    before the update. Episodes always run ``horizon`` steps.
    """

    obs_dim = 3
    act_dim = 1

    def __init__(self, seed=0, max_torque=2.0, max_speed=8.0, dt=0.05, g=10.0, m=1.0, length=1.0,
                 horizon=200, init="random"):
        if init not in ("random", "down"):
            raise ValueError(f"unknown init mode {init!r}")
        self.max_torque = float(max_torque)
        self.max_speed = float(max_speed)
        self.dt = float(dt)
        self.g = float(g)
        self.m = float(m)
        self.length = float(length)
        self.horizon = int(horizon)
        self.init = init
        self.rng = np.random.default_rng(seed)
        self.angle = 0.0
        self.angular_velocity = 0.0
        self.step_count = 0

    @property
    def action_bound(self):
        return self.max_torque

    def set_state(self, angle, angular_velocity):
        self.angle = wrap_angle(float(angle))
        self.angular_velocity = float(np.clip(angular_velocity, -self.max_speed, self.max_speed))
        self.step_count = 0
        return self.observation()

    def reset(self):
        if self.init == "down":
            return self.set_state(math.pi, 0.0)
        theta = self.rng.uniform(-math.pi, math.pi)
        vel = self.rng.uniform(-1.0, 1.0)
        return self.set_state(theta, vel)

    def observation(self):
        return np.array([math.cos(self.angle), math.sin(self.angle), self.angular_velocity])

    def step(self, torque):
        u = float(np.clip(np.asarray(torque, dtype=np.float64).reshape(-1)[0], -self.max_torque, self.max_torque))
        th, vel = self.angle, self.angular_velocity
        reward = -(th * th + 0.1 * vel * vel + 0.001 * u * u)
        acc = 3.0 * self.g / (2.0 * self.length) * math.sin(th) + 3.0 / (self.m * self.length**2) * u
        vel = min(max(vel + acc * self.dt, -self.max_speed), self.max_speed)
        self.angle = wrap_angle(th + vel * self.dt)
        self.angular_velocity = vel
        self.step_count += 1
        done = self.step_count >= self.horizon
        return self.observation(), reward, done


class ActionRepeat:
    """Repeat each action ``k`` times, summing rewards; one agent step = ``k`` frames."""

    def __init__(self, env, k: int):
        if k < 1:
            raise ValueError("action repeat must be >= 1")
        self.env = env
        self.k = int(k)
        self.obs_dim = env.obs_dim
        self.act_dim = env.act_dim

    @property
    def action_bound(self):
        return self.env.action_bound

    def reset(self):
        return self.env.reset()

    def step(self, action):
        total, frames = 0.0, 0
        obs, done = None, False
        for _ in range(self.k):
            obs, r, done = self.env.step(action)
            total += r
            frames += 1
            if done:
                break
        self.last_frames = frames
        return obs, total, done


def make_env(name: str, seed: int, **kwargs):
    """Environment registry: ``pendulum`` (full state) and ``pendulum_hidden_velocity`` (angle only)."""
    if name == "pendulum":
        return PendulumEnv(seed=seed, **kwargs)
    if name == "pendulum_hidden_velocity":
        from .pomdp import PartialObservation

        return PartialObservation(PendulumEnv(seed=seed, **kwargs), keep=(0, 1))
    raise KeyError(name)


ENV_NAMES = ("pendulum", "pendulum_hidden_velocity")
