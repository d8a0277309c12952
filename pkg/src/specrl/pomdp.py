"""Observation windows for L-decodable partially observed problems.

A window at time t stacks the last L observations with the L-1 actions
between them, flattened as ``(o_{t-L+1}, a_{t-L+1}, ..., a_{t-1}, o_t)``.
At episode start missing frames are copies of ``o_0`` and missing actions
are zero vectors.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMDP, TabularPolicy, policy_evaluation_q
from .replay import Transition


class CrossEpisodeError(RuntimeError):
    pass


class PartialObservation:
    """Emit only the coordinates ``keep`` of the wrapped environment's observation."""

    def __init__(self, env, keep):
        self.env = env
        self.keep = tuple(int(k) for k in keep)
        self.obs_dim = len(self.keep)
        self.act_dim = env.act_dim

    @property
    def action_bound(self):
        return self.env.action_bound

    def _emit(self, obs):
        return np.asarray(obs)[list(self.keep)]

    def reset(self):
        return self._emit(self.env.reset())

    def step(self, action):
        obs, r, done = self.env.step(action)
        return self._emit(obs), r, done


@dataclass(frozen=True)
class WindowedObservation:
    frames: tuple
    actions: tuple
    x: np.ndarray


class WindowHistory:
    """Sliding window state for one episode at a time."""

    def __init__(self, L: int, obs_dim: int, act_dim: int):
        if L < 1:
            raise ValueError("window length L must be >= 1")
        self.L = int(L)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.frames = deque(maxlen=self.L)
        self.actions = deque(maxlen=max(self.L - 1, 0))
        self.episode = None

    def reset(self, o0, episode=0) -> WindowedObservation:
        o0 = np.asarray(o0, dtype=np.float64).copy()
        self.frames.clear()
        self.actions.clear()
        for _ in range(self.L):
            self.frames.append(o0)
        for _ in range(self.L - 1):
            self.actions.append(np.zeros(self.act_dim))
        self.episode = episode
        return self.current()

    def push(self, o_t, a_prev, episode=0) -> WindowedObservation:
        if self.episode is None or episode != self.episode:
            raise CrossEpisodeError("window history belongs to another episode; call reset first")
        if self.L > 1:
            self.actions.append(np.asarray(a_prev, dtype=np.float64).reshape(self.act_dim).copy())
        self.frames.append(np.asarray(o_t, dtype=np.float64).copy())
        return self.current()

    def current(self) -> WindowedObservation:
        parts = []
        frames, actions = list(self.frames), list(self.actions)
        for i in range(self.L):
            parts.append(frames[i])
            if i < self.L - 1:
                parts.append(actions[i])
        return WindowedObservation(tuple(frames), tuple(actions), np.concatenate(parts))


def window_push(history: WindowHistory, o_t, a_prev, episode=0) -> WindowedObservation:
    return history.push(o_t, a_prev, episode)


def window_dim(L: int, obs_dim: int, act_dim: int) -> int:
    return L * obs_dim + (L - 1) * act_dim


def l_step_reward(rewards, gamma: float, L: int = None) -> float:
    """``sum_i gamma^i r_{t+i}`` over exactly L rewards."""
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if L is not None and r.size != L:
        raise ValueError(f"expected {L} rewards, got {r.size}")
    if r.size == 0:
        raise ValueError("need at least one reward")
    total = 0.0
    for i, ri in enumerate(r):
        total += gamma**i * ri
    return float(total)


class WindowedEnv:
    """Environment wrapper whose observation is the window ``x_t``; raw frames stay available."""

    def __init__(self, env, L: int):
        self.env = env
        self.L = int(L)
        self.raw_obs_dim = env.obs_dim
        self.act_dim = env.act_dim
        self.obs_dim = window_dim(self.L, env.obs_dim, env.act_dim)
        self.history = WindowHistory(self.L, env.obs_dim, env.act_dim)
        self.episode = -1
        self.last_raw = None

    @property
    def action_bound(self):
        return self.env.action_bound

    def reset(self):
        self.episode += 1
        o0 = self.env.reset()
        self.last_raw = np.asarray(o0, dtype=np.float64)
        return self.history.reset(o0, self.episode).x

    def step(self, action):
        o, r, done = self.env.step(action)
        self.last_raw = np.asarray(o, dtype=np.float64)
        x = self.history.push(o, np.asarray(action, dtype=np.float64).reshape(self.act_dim), self.episode).x
        return x, r, done


class LStepBuilder:
    """Turn a per-step stream into L-step transitions.

    The transition at t carries ``x_t``, ``a_t``, the discounted L-step
    reward, the bootstrap state ``x_{t+L}``, discount ``gamma^L`` and a
    representation target: the forward window ``o_{t+1..t+L}`` flattened
    (``target="window"``) or the single frame ``o_{t+1}`` (``"frame"``).
    Steps whose L-step horizon crosses an episode end are dropped.
    """

    def __init__(self, L: int, gamma: float, target: str = "window"):
        if target not in ("window", "frame"):
            raise ValueError(f"unknown target mode {target!r}")
        self.L = int(L)
        self.gamma = gamma
        self.target = target
        self.pending = deque()

    def target_dim(self, obs_dim):
        return self.L * obs_dim if self.target == "window" else obs_dim

    def reset(self):
        self.pending.clear()

    def push(self, x, a, r, o_next, x_next):
        """Record one step; returns the completed transition or None."""
        self.pending.append((np.asarray(x, dtype=np.float64).copy(), np.asarray(a, dtype=np.float64).copy(),
                             float(r), np.asarray(o_next, dtype=np.float64).copy()))
        if len(self.pending) < self.L:
            return None
        steps = list(self.pending)
        x0, a0 = steps[0][0], steps[0][1]
        reward = l_step_reward([s[2] for s in steps], self.gamma, self.L)
        if self.target == "window":
            tgt = np.concatenate([s[3] for s in steps])
        else:
            tgt = steps[0][3]
        self.pending.popleft()
        return Transition(x0, a0, reward, np.asarray(x_next, dtype=np.float64).copy(), False,
                          self.gamma**self.L, tgt)


# -- toy problems with known decodability --------------------------------------------


class ToyPomdp:
    """Second-order chain over k symbols observed through its latest symbol.

    The hidden state is the pair ``(x_prev, x_cur)``; the observation is
    ``x_cur``. A window of L=2 decodes the state exactly, L=1 does not.
    Rewards pay 1 whenever the chain repeats a symbol.
    """

    decodability = 2

    def __init__(self, k: int = 3, n_actions: int = 2, gamma: float = 0.9, seed: int = 0):
        rng = np.random.default_rng(seed)
        n = k * k
        P = np.zeros((n, n_actions, n))
        R = np.zeros((n, n_actions))
        for prev in range(k):
            for cur in range(k):
                s = prev * k + cur
                for a in range(n_actions):
                    w = rng.dirichlet(np.ones(k) * 0.5)
                    # the previous symbol shifts the next-symbol law, making it hidden information
                    w = np.roll(w, prev + a)
                    for nxt in range(k):
                        P[s, a, cur * k + nxt] = w[nxt]
                    R[s, a] = float(prev == cur)
        init = np.full(n, 1.0 / n)
        self.k = k
        self.mdp = TabularMDP(P, R, gamma, init)

    def emit(self, s: int) -> int:
        return s % self.k

    def hidden(self, s: int):
        return divmod(s, self.k)


def simulate_windows(pomdp: ToyPomdp, policy: TabularPolicy, L: int, n_steps: int, rng):
    """Roll out one long trajectory; returns window keys, actions and true states."""
    mdp = pomdp.mdp
    s = rng.choice(mdp.n_states, p=mdp.init_dist)
    hist = deque([pomdp.emit(s)] * L, maxlen=L)
    acts = deque([0] * max(L - 1, 0), maxlen=max(L - 1, 0))
    keys, actions, states = [], [], []
    for _ in range(n_steps):
        a = rng.choice(mdp.n_actions, p=policy.probs[s])
        keys.append(tuple(hist) + tuple(acts))
        actions.append(a)
        states.append(s)
        s = rng.choice(mdp.n_states, p=mdp.transition[s, a])
        if L > 1:
            acts.append(a)
        hist.append(pomdp.emit(s))
    return keys, np.array(actions), np.array(states)


def window_critic_residual(pomdp: ToyPomdp, policy: TabularPolicy, L: int, n_steps: int = 20000,
                           seed: int = 0) -> float:
    """RMS gap between the best window-indexed critic and the full-state Q oracle.

    The best critic on windows is the conditional mean of ``Q(s_t, a_t)``
    given ``(x_t, a_t)``, estimated on one long on-policy trajectory.
    """
    rng = np.random.default_rng(seed)
    q = policy_evaluation_q(pomdp.mdp, policy)
    keys, actions, states = simulate_windows(pomdp, policy, L, n_steps, rng)
    targets = q[states, actions]
    sums, counts = {}, {}
    for key, a, t in zip(keys, actions, targets):
        k = (key, int(a))
        sums[k] = sums.get(k, 0.0) + t
        counts[k] = counts.get(k, 0) + 1
    fitted = np.array([sums[(key, int(a))] / counts[(key, int(a))] for key, a in zip(keys, actions)])
    return float(np.sqrt(np.mean((fitted - targets) ** 2)))


def quadratic_features(x) -> np.ndarray:
    """Constant, linear and all pairwise products of the columns of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    iu = np.triu_indices(x.shape[1])
    quad = (x[:, :, None] * x[:, None, :])[:, iu[0], iu[1]]
    return np.concatenate([np.ones((x.shape[0], 1)), x, quad], axis=1)


def decodability_r2(windows, hidden) -> float:
    """R^2 of a least-squares decoder from quadratic window features to the hidden coordinate."""
    F = quadratic_features(windows)
    y = np.asarray(hidden, dtype=np.float64).reshape(-1)
    coef, *_ = np.linalg.lstsq(F, y, rcond=None)
    resid = y - F @ coef
    return float(1.0 - resid.var() / y.var())
