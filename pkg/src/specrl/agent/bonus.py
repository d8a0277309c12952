"""Kernel exploration bonus and the optimistic tabular loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..mdp import TabularMDP, TabularPolicy, value_iteration
from ..spectral import SpectralFactorization, factorize_matrix

BONUS_KERNELS = ("linear", "gaussian")
JITTER = 1e-10


class NonPsdGram(LinAlgError):
    pass


class NonNormalizableRow(ValueError):
    pass


@dataclass
class BonusState:
    """Dataset features and the constants of the ridge bonus."""

    dim: int
    lam: float = 1.0
    alpha: float = 1.0
    kernel: str = "linear"
    features: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("ridge lambda must be positive")
        if self.alpha < 0:
            raise ValueError("bonus scale alpha must be nonnegative")
        if self.kernel not in BONUS_KERNELS:
            raise ValueError(f"kernel must be one of {BONUS_KERNELS}")
        if self.features is None:
            self.features = np.zeros((0, self.dim))
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, self.dim)

    def __len__(self):
        return self.features.shape[0]

    def insert(self, feature) -> None:
        f = np.asarray(feature, dtype=np.float64).reshape(1, self.dim)
        self.features = np.concatenate([self.features, f], axis=0)

    def k(self, x, y) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if self.kernel == "linear":
            return x @ y.T
        sq = np.sum(x**2, 1)[:, None] + np.sum(y**2, 1)[None, :] - 2.0 * x @ y.T
        return np.exp(-0.5 * np.maximum(sq, 0.0))

    def gram(self) -> np.ndarray:
        return self.k(self.features, self.features)


def _spd_factor(M):
    try:
        return cho_factor(M, lower=True)
    except LinAlgError:
        pass
    try:
        return cho_factor(M + JITTER * np.eye(M.shape[0]), lower=True)
    except LinAlgError as exc:
        raise NonPsdGram("regularized Gram matrix is not positive definite after jitter") from exc


def kernel_bonus(bonus: BonusState, feature) -> float:
    """``alpha / sqrt(lam) * sqrt(k(x,x) - k_x^T (K + lam I)^-1 k_x)``."""
    return float(kernel_bonus_batch(bonus, np.reshape(feature, (1, -1)))[0])


def kernel_bonus_batch(bonus: BonusState, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    kxx = np.einsum("ij,ij->i", X, X) if bonus.kernel == "linear" else np.ones(X.shape[0])
    if len(bonus):
        fac = _spd_factor(bonus.gram() + bonus.lam * np.eye(len(bonus)))
        kx = bonus.k(bonus.features, X)  # (n, q)
        var = kxx - np.einsum("ij,ij->j", kx, cho_solve(fac, kx))
    else:
        var = kxx
    return bonus.alpha / np.sqrt(bonus.lam) * np.sqrt(np.maximum(var, 0.0))


# -- optimistic planning on tabular problems -----------------------------------------


def clip_renormalize(P_hat: np.ndarray) -> np.ndarray:
    """Clip negative entries to 0 and renormalize each row to sum to 1."""
    P = np.maximum(np.asarray(P_hat, dtype=np.float64), 0.0)
    tot = P.sum(axis=-1, keepdims=True)
    bad = np.flatnonzero(tot.reshape(-1) <= 1e-12)
    if bad.size:
        raise NonNormalizableRow(f"rows {bad.tolist()} have no positive mass after clipping")
    return P / tot


def plan_optimistic(factorization: SpectralFactorization, reward, gamma: float, bonus_values=None,
                    tol: float = 1e-8) -> TabularPolicy:
    """Greedy policy of value iteration on ``(P_hat, r + b)`` with ``P_hat = <phi, mu>``."""
    r = np.asarray(reward, dtype=np.float64)
    S, A = r.shape
    P = clip_renormalize(factorization.reconstruct()).reshape(S, A, S)
    b = np.zeros_like(r) if bonus_values is None else np.asarray(bonus_values, dtype=np.float64).reshape(S, A)
    model = TabularMDP(P, r, gamma, np.full(S, 1.0 / S))
    _, policy = value_iteration(model, tol=tol, reward=r + b)
    return policy


class CountModel:
    """Empirical transition counts; unvisited rows default to uniform."""

    def __init__(self, n_states: int, n_actions: int):
        self.counts = np.zeros((n_states * n_actions, n_states))
        self.n_actions = n_actions

    def add(self, s, a, s_next):
        self.counts[s * self.n_actions + a, s_next] += 1.0

    def estimate(self) -> np.ndarray:
        tot = self.counts.sum(axis=1, keepdims=True)
        S = self.counts.shape[1]
        return np.where(tot > 0, self.counts / np.maximum(tot, 1.0), 1.0 / S)

    def factorization(self) -> SpectralFactorization:
        P = self.estimate()
        return factorize_matrix(P, d=min(P.shape))


def rollout(mdp: TabularMDP, policy_probs, rng, horizon: int, start: int = 0, goal: int = None):
    """Sample one episode; returns the list of (s, a, s') and whether ``goal`` was hit."""
    s, traj = start, []
    for _ in range(horizon):
        a = int(rng.choice(mdp.n_actions, p=policy_probs[s]))
        s2 = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        traj.append((s, a, s2))
        s = s2
        if goal is not None and s == goal:
            return traj, True
    return traj, False


def optimistic_episode(mdp: TabularMDP, model: CountModel, bonus: BonusState, rng, horizon: int,
                       start: int = 0, goal: int = None):
    """One round of the optimistic loop.

    Refits the factorization from the counts, scores every (s, a) with the
    kernel bonus on its learned features, plans on the optimistic model,
    collects an episode and adds its transitions to the counts and the bonus
    dataset. Returns ``(policy, trajectory, reached_goal)``.
    """
    fac = model.factorization()
    S, A = mdp.n_states, mdp.n_actions
    feats = fac.phi
    b = kernel_bonus_batch(bonus, feats).reshape(S, A)
    policy = plan_optimistic(fac, mdp.reward, mdp.gamma, b)
    traj, hit = rollout(mdp, policy.probs, rng, horizon, start, goal)
    for s, a, s2 in traj:
        model.add(s, a, s2)
        bonus.insert(feats[s * A + a])
    return policy, traj, hit


def combination_lock(n_states: int = 10, n_actions: int = 2, gamma: float = 0.95, rng=None) -> TabularMDP:
    """Chain where one secret action per state advances and every other action resets to 0.

    The last state is an absorbing goal paying reward 1 per step.
    """
    rng = np.random.default_rng() if rng is None else rng
    combo = rng.integers(0, n_actions, size=n_states - 1)
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states - 1):
        P[s, :, 0] = 1.0
        P[s, combo[s], 0] = 0.0
        P[s, combo[s], s + 1] = 1.0
    P[-1, :, -1] = 1.0
    r = np.zeros((n_states, n_actions))
    r[-1] = 1.0
    d0 = np.zeros(n_states)
    d0[0] = 1.0
    return TabularMDP(P, r, gamma, d0)


def episodes_to_goal(mdp: TabularMDP, rng, method: str = "optimistic", horizon: int = 20,
                     max_episodes: int = 2000, alpha: float = 1.0, lam: float = 1.0) -> int:
    """Number of episodes until the goal state (the last one) is first reached."""
    S, A = mdp.n_states, mdp.n_actions
    goal = S - 1
    if method == "random":
        uniform = np.full((S, A), 1.0 / A)
        for ep in range(1, max_episodes + 1):
            if rollout(mdp, uniform, rng, horizon, 0, goal)[1]:
                return ep
        return max_episodes + 1
    if method != "optimistic":
        raise ValueError(f"unknown exploration method {method!r}")
    model = CountModel(S, A)
    bonus = BonusState(dim=S, lam=lam, alpha=alpha)
    for ep in range(1, max_episodes + 1):
        if optimistic_episode(mdp, model, bonus, rng, horizon, 0, goal)[2]:
            return ep
    return max_episodes + 1
