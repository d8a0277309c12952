"""Small trained-model experiments with closed-form answers.

Each routine trains a representation objective on a problem whose optimum is
known exactly and returns the quantities compared against that optimum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMDP
from .nn.autodiff import backward
from .nn.optim import OptimizerState, adam_step
from .nn.params import ParamSet
from .replearn import losses as L
from .replearn.learners import DiffSrPair, RepLearnerConfig
from .spectral import next_state_marginal, principal_angles_deg, scaled_left_subspace


def low_rank_mdp(rng, n_states: int, n_actions: int, rank: int, gamma: float = 0.9,
                 concentration: float = 1.0) -> TabularMDP:
    """``P = W B`` with Dirichlet mixing weights W (SA, r) and base distributions B (r, S)."""
    W = rng.dirichlet(np.ones(rank), size=n_states * n_actions)
    B = rng.dirichlet(np.full(n_states, concentration), size=rank)
    P = W @ B
    P = (P / P.sum(axis=1, keepdims=True)).reshape(n_states, n_actions, n_states)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return TabularMDP(P, r, gamma, np.full(n_states, 1.0 / n_states))


def _cosine_lr(base, step, total, floor=0.02):
    return base * (floor + (1 - floor) * 0.5 * (1 + np.cos(np.pi * step / total)))


def _sample_next(P_flat, rows, rng):
    cum = np.cumsum(P_flat[rows], axis=1)
    u = rng.random((len(rows), 1))
    return np.minimum((u > cum).sum(axis=1), P_flat.shape[1] - 1)


@dataclass
class SclResult:
    angles_deg: np.ndarray
    recon_error: float
    phi: np.ndarray
    nu: np.ndarray


def train_scl_tabular(mdp: TabularMDP, d: int, rng, steps: int = 4000, batch: int = 512,
                      n_negatives: int = 8, lr: float = 0.03, lam: float = 1.0) -> SclResult:
    """Fit tabular ``phi`` (SA, d) and ``nu`` (S, d) with the spectral contrastive loss.

    State-action pairs are drawn uniformly, positives from ``P(.|s,a)`` and
    negatives from the next-state marginal. The implied model is
    ``P_hat(s'|s,a) = phi(s,a) . nu(s') * P(s')``.
    """
    S, A = mdp.n_states, mdp.n_actions
    P = mdp.flat_transition()
    rho = np.full(S * A, 1.0 / (S * A))
    marg = next_state_marginal(mdp, rho)
    ps = ParamSet()
    ps.add("phi", 0.1 * rng.standard_normal((S * A, d)))
    ps.add("nu", 0.1 * rng.standard_normal((S, d)))
    opt = OptimizerState(learning_rate=lr)
    for t in range(steps):
        rows = rng.integers(0, S * A, size=batch)
        pos = _sample_next(P, rows, rng)
        neg = rng.choice(S, size=(batch, n_negatives), p=marg)
        phi = ps["phi"][rows]
        loss = L.scl_loss(phi, ps["nu"][pos], ps["nu"][neg.reshape(-1)].reshape(batch, n_negatives, d), lam)
        backward(loss)
        opt.learning_rate = _cosine_lr(lr, t, steps)
        adam_step(opt, ps)
    phi, nu = ps["phi"].data.copy(), ps["nu"].data.copy()
    oracle = scaled_left_subspace(mdp, rho, d)
    angles = principal_angles_deg(phi, oracle)
    P_hat = (phi @ nu.T) * marg[None, :]
    return SclResult(angles, float(np.max(np.abs(P_hat - P))), phi, nu)


@dataclass
class NceResult:
    max_rel_error: float
    ratio_hat: np.ndarray
    ratio: np.ndarray


def train_nce_tabular(P_flat: np.ndarray, rng, steps: int = 3000, n_negatives: int = 2, lr: float = 0.1,
                      negatives: str = "exact", copies: int = 8,
                      denominator_mode: str = "include_positive") -> NceResult:
    """Ranking NCE with a tabular logit table ``f(s,a,s') = phi(s,a) . nu(s')`` of full rank.

    Every (s, a, s') tuple enters each step weighted by ``P(s'|s,a)``. With
    ``negatives="exact"`` the loss averages over every K-tuple of negatives
    under the uniform noise distribution (the population objective); with
    ``"sampled"`` each of ``copies`` replicas draws its own K negatives.
    The recovered ratio is ``exp(f)`` normalized per (s, a) so that its noise
    expectation is 1, compared to ``P(s'|s,a) / (1/S)``.
    """
    SA, S = P_flat.shape
    K = n_negatives
    ps = ParamSet()
    ps.add("phi", 0.1 * rng.standard_normal((SA, S)))
    ps.add("nu", 0.1 * rng.standard_normal((S, S)))
    if negatives == "exact":
        combos = np.array(list(itertools.product(range(S), repeat=K)))
    elif negatives == "sampled":
        combos = None
    else:
        raise ValueError(f"unknown negatives mode {negatives!r}")
    reps = len(combos) if combos is not None else copies
    rows = np.repeat(np.arange(SA), S * reps)
    pos = np.tile(np.repeat(np.arange(S), reps), SA)
    weight = P_flat[rows, pos] / (SA * reps)
    batch = rows.size
    opt = OptimizerState(learning_rate=lr)
    for t in range(steps):
        neg = np.tile(combos, (SA * S, 1)) if combos is not None else rng.integers(0, S, size=(batch, K))
        phi = ps["phi"][rows]
        pos_logit = (phi * ps["nu"][pos]).sum(axis=-1)
        neg_nu = ps["nu"][neg.reshape(-1)].reshape(batch, K, S)
        neg_logit = (phi.reshape(batch, 1, S) * neg_nu).sum(axis=-1)
        terms = L.rp_nce_terms(pos_logit, neg_logit, denominator_mode)
        backward((terms * weight).sum())
        opt.learning_rate = _cosine_lr(lr, t, steps)
        adam_step(opt, ps)
    f = ps["phi"].data @ ps["nu"].data.T
    w = np.exp(f - f.max(axis=1, keepdims=True))
    ratio_hat = w / w.mean(axis=1, keepdims=True)
    ratio = P_flat * S
    return NceResult(float(np.max(np.abs(ratio_hat - ratio) / ratio)), ratio_hat, ratio)


@dataclass
class ScoreResult:
    grid_mse: float
    learner: DiffSrPair
    params: ParamSet


def score_grid(schedule, n_s: int = 21, n_z: int = 21, z_max: float = 2.0, slope: float = 0.5):
    """Grid of ``(s, beta, s_tilde)`` around the perturbed point mass at ``slope * s``."""
    s = np.linspace(-1.0, 1.0, n_s)
    z = np.linspace(-z_max, z_max, n_z)
    S_, B_, Z_ = np.meshgrid(s, np.asarray(schedule), z, indexing="ij")
    S_, B_, Z_ = S_.ravel(), B_.ravel(), Z_.ravel()
    s_tilde = np.sqrt(1.0 - B_) * slope * S_ + np.sqrt(B_) * Z_
    return S_, B_, s_tilde


def train_score_1d(rng, steps: int = 3000, batch: int = 256, lr: float = 3e-3, slope: float = 0.5,
                   schedule=(0.05, 0.1, 0.2, 0.35, 0.5), hidden: int = 32, rep_dim: int = 4) -> ScoreResult:
    """Conditional score matching on the deterministic 1-dim transition ``s' = slope * s``.

    The model ``phi(s) . kappa(s_tilde', beta)`` is compared on a grid with the
    analytic score ``-(s_tilde' - sqrt(1-beta) slope s) / beta``.
    """
    cfg = RepLearnerConfig(kind="diffsr", rep_dim=rep_dim, hidden=hidden, noise_schedule=np.asarray(schedule))
    learner = DiffSrPair(cfg, 1, 0, rng=rng)
    ps = learner.params
    opt = OptimizerState(learning_rate=lr)
    no_action = np.zeros((batch, 0))
    for t in range(steps):
        s = rng.uniform(-1.0, 1.0, size=(batch, 1))
        loss, _ = learner.loss(ps, s, no_action, slope * s, rng)
        backward(loss)
        opt.learning_rate = _cosine_lr(lr, t, steps)
        adam_step(opt, ps)
    S_, B_, st = score_grid(schedule, slope=slope)
    pred = score_model(learner, ps, S_, B_, st)
    target = L.perturbation_score(st, slope * S_, B_)
    return ScoreResult(float(np.mean((pred - target) ** 2)), learner, ps)


def score_model(learner: DiffSrPair, params, s, betas, s_tilde) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
    phi = learner.phi(params, s, np.zeros((s.shape[0], 0))).data
    kappa = learner.kappa(params, np.asarray(s_tilde).reshape(-1, 1), np.asarray(betas).reshape(-1)).data
    return np.einsum("bd,bdk->bk", phi, kappa)[:, 0]
