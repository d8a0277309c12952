"""Finite MDPs with exact policy evaluation, occupancy measures and value iteration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# linear solves up to this many states, fixed-point iteration above
DIRECT_SOLVE_MAX_STATES = 2000


class InvalidMDP(ValueError):
    pass


@dataclass(frozen=True)
class TabularMDP:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    gamma: float
    init_dist: np.ndarray  # (S,)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        r = np.asarray(self.reward, dtype=np.float64)
        d0 = np.asarray(self.init_dist, dtype=np.float64)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "init_dist", d0)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidMDP(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.shape != (S, A):
            raise InvalidMDP(f"reward must have shape {(S, A)}, got {r.shape}")
        if d0.shape != (S,):
            raise InvalidMDP(f"init_dist must have shape {(S,)}, got {d0.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > 1e-12):
            raise InvalidMDP("transition rows must be nonnegative and sum to 1")
        if np.any(d0 < 0) or abs(d0.sum() - 1.0) > 1e-12:
            raise InvalidMDP("init_dist must be a probability vector")
        if not (0.0 <= self.gamma < 1.0):
            raise InvalidMDP(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def flat_transition(self) -> np.ndarray:
        """The (S*A, S) matrix with row index ``s * A + a``."""
        return self.transition.reshape(self.n_states * self.n_actions, self.n_states)


@dataclass(frozen=True)
class TabularPolicy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ValueError("policy probs must be a matrix")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("policy rows must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def greedy(cls, q):
        q = np.asarray(q)
        probs = np.zeros_like(q, dtype=np.float64)
        probs[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
        return cls(probs)


def _check_pair(mdp: TabularMDP, policy: TabularPolicy):
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {policy.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}"
        )


def state_transition(mdp: TabularMDP, policy: TabularPolicy) -> np.ndarray:
    """P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def pair_transition(mdp: TabularMDP, policy: TabularPolicy) -> np.ndarray:
    """P_pi((s',a')|(s,a)) = P(s'|s,a) pi(a'|s') as an (SA, SA) matrix."""
    S, A = mdp.n_states, mdp.n_actions
    M = mdp.transition[:, :, :, None] * policy.probs[None, None, :, :]
    return M.reshape(S * A, S * A)


def policy_evaluation_q(mdp: TabularMDP, policy: TabularPolicy, tol: float = 1e-12) -> np.ndarray:
    """Q^pi from the Bellman equation ``Q = r + gamma P_pi Q``.

    Solved directly as ``(I - gamma P_pi) q = r`` on state-action pairs for
    small problems; larger ones iterate the recursion until the sup-norm
    change drops below ``tol * (1 - gamma)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_pair(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    r = mdp.reward.reshape(-1)
    if S <= DIRECT_SOLVE_MAX_STATES:
        M = np.eye(S * A) - mdp.gamma * pair_transition(mdp, policy)
        q = np.linalg.solve(M, r)
        return q.reshape(S, A)
    q = np.zeros(S * A)
    Ppi = pair_transition(mdp, policy)
    while True:
        nq = r + mdp.gamma * (Ppi @ q)
        if np.max(np.abs(nq - q)) <= tol * (1.0 - mdp.gamma):
            return nq.reshape(S, A)
        q = nq


def state_values(mdp: TabularMDP, policy: TabularPolicy, q=None) -> np.ndarray:
    q = policy_evaluation_q(mdp, policy) if q is None else q
    return (policy.probs * q).sum(axis=1)


def bellman_residual(mdp: TabularMDP, policy: TabularPolicy, q) -> float:
    v = (policy.probs * q).sum(axis=1)
    target = mdp.reward + mdp.gamma * mdp.transition @ v
    return float(np.max(np.abs(target - q)))


def occupancy_measure(mdp: TabularMDP, policy: TabularPolicy) -> np.ndarray:
    """Normalized discounted state-action visitation d^pi, shape (S, A).

    Solves ``(I - gamma P_pi^T) d = (1 - gamma) d0 pi``.
    """
    _check_pair(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    rhs = (1.0 - mdp.gamma) * (mdp.init_dist[:, None] * policy.probs).reshape(-1)
    M = np.eye(S * A) - mdp.gamma * pair_transition(mdp, policy).T
    try:
        d = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - impossible for gamma < 1
        raise RuntimeError("occupancy system is singular") from exc
    return d.reshape(S, A)


def occupancy_residual(mdp: TabularMDP, policy: TabularPolicy, d) -> float:
    """Sup-norm violation of the occupancy recursion."""
    S, A = mdp.n_states, mdp.n_actions
    flat = np.asarray(d).reshape(-1)
    rhs = (1.0 - mdp.gamma) * (mdp.init_dist[:, None] * policy.probs).reshape(-1)
    rhs = rhs + mdp.gamma * pair_transition(mdp, policy).T @ flat
    return float(np.max(np.abs(rhs - flat)))


def value_iteration(mdp: TabularMDP, tol: float = 1e-8, reward=None, max_iter: int = 1_000_000):
    """Optimal Q by fixed-point iteration; returns ``(q, greedy_policy)``.

    Stops once successive iterates differ by at most ``tol`` in sup norm.
    ``reward`` overrides ``mdp.reward`` (used for optimistic planning).
    """
    r = mdp.reward if reward is None else np.asarray(reward, dtype=np.float64)
    q = np.zeros_like(r)
    for _ in range(max_iter):
        v = q.max(axis=1)
        nq = r + mdp.gamma * mdp.transition @ v
        if np.max(np.abs(nq - q)) <= tol:
            q = nq
            break
        q = nq
    return q, TabularPolicy.greedy(q)


def random_mdp(rng, n_states, n_actions, gamma=0.9, concentration=1.0, reward=None) -> TabularMDP:
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    P = P / P.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions)) if reward is None else reward
    d0 = rng.dirichlet(np.ones(n_states))
    d0 = d0 / d0.sum()
    return TabularMDP(P, r, gamma, d0)


def random_policy(rng, n_states, n_actions) -> TabularPolicy:
    p = rng.dirichlet(np.ones(n_actions), size=n_states)
    return TabularPolicy(p / p.sum(axis=1, keepdims=True))


# -- text serialization -------------------------------------------------------

_HEADER = "tabular-mdp v1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps_mdp(mdp: TabularMDP) -> str:
    """Plain-text form: header, dimensions, gamma, init_dist, P rows (s-major, a-minor), reward rows."""
    S, A = mdp.n_states, mdp.n_actions
    lines = [_HEADER, f"{S} {A}", repr(float(mdp.gamma)), _fmt(mdp.init_dist)]
    for s in range(S):
        for a in range(A):
            lines.append(_fmt(mdp.transition[s, a]))
    for s in range(S):
        lines.append(_fmt(mdp.reward[s]))
    return "\n".join(lines) + "\n"


def loads_mdp(text: str) -> TabularMDP:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0] != _HEADER:
        raise InvalidMDP("missing 'tabular-mdp v1' header")
    S, A = (int(x) for x in rows[1].split())
    gamma = float(rows[2])
    body = rows[3:]
    if len(body) != 1 + S * A + S:
        raise InvalidMDP(f"expected {1 + S * A + S} data rows, found {len(body)}")

    def parse(line, n):
        vals = [float(x) for x in line.split()]
        if len(vals) != n:
            raise InvalidMDP(f"expected {n} values, found {len(vals)}")
        return vals

    d0 = np.array(parse(body[0], S))
    P = np.array([parse(ln, S) for ln in body[1 : 1 + S * A]]).reshape(S, A, S)
    r = np.array([parse(ln, A) for ln in body[1 + S * A :]])
    return TabularMDP(P, r, gamma, d0)


def save_mdp(path, mdp: TabularMDP) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_mdp(mdp))


def load_mdp(path) -> TabularMDP:
    with open(path, encoding="utf-8") as f:
        return loads_mdp(f.read())
