"""Numeric self-checks shared by the ``oracle`` subcommand and the acceptance tests.

Each check returns a plain dict of measured quantities plus a ``passed``
flag computed against the stated tolerance.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .agent.bonus import BonusState, combination_lock, episodes_to_goal, kernel_bonus
from .agent.critics import reward_loss
from .agent.td3 import AgentConfig, SpectralAgent
from .bench.config import ExperimentConfig
from .mdp import TabularMDP, policy_evaluation_q, random_mdp, random_policy
from .nn.gradcheck import grad_check
from .nn.mlp import MlpSpec, init_mlp, mlp_forward
from .nn.params import ParamSet
from .replearn import losses as L
from .replearn.learners import RepLearnerConfig
from .replearn.rff import RffBank, gaussian_kernel
from .spectral import exact_factorization, fit_q_weights, project_reward_onto_span
from .tabular import low_rank_mdp, train_nce_tabular, train_scl_tabular, train_score_1d


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out["seconds"] = time.perf_counter() - t0
        return out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def linear_q_check(n_problems: int = 50, seed: int = 0, tol: float = 1e-8) -> dict:
    """Q of random policies fits onto the full-rank SVD features of P."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_problems):
        S, A = (int(v) for v in rng.integers(1, 6, size=2))
        mdp = random_mdp(rng, S, A, gamma=float(rng.uniform(0.0, 0.99)))
        fac = exact_factorization(mdp)
        mdp = TabularMDP(mdp.transition, project_reward_onto_span(mdp, fac), mdp.gamma, mdp.init_dist)
        q = policy_evaluation_q(mdp, random_policy(rng, S, A))
        worst = max(worst, fit_q_weights(fac, q).residual)
    return {"max_residual": worst, "passed": worst < tol}


@_timed
def scl_check(seed: int = 0, ranks=(1, 2, 3), n_states: int = 6, n_actions: int = 2,
              angle_tol: float = 10.0, recon_tol: float = 0.05) -> dict:
    """Spectral contrastive training recovers the scaled-kernel subspace on low-rank MDPs."""
    angles, recon = [], []
    for i, r in enumerate(ranks):
        rng = np.random.default_rng([seed, i])
        mdp = low_rank_mdp(rng, n_states, n_actions, r)
        res = train_scl_tabular(mdp, r, rng)
        angles.append(float(np.max(res.angles_deg)))
        recon.append(res.recon_error)
    return {"max_angle_deg": angles, "recon_error": recon,
            "passed": max(angles) < angle_tol and max(recon) < recon_tol}


def rff_error(n_features: int, seed: int, n_pairs: int = 1000, dim: int = 8) -> float:
    rng = np.random.default_rng([seed, n_features])
    x = rng.uniform(-1, 1, size=(n_pairs, dim))
    y = rng.uniform(-1, 1, size=(n_pairs, dim))
    bank = RffBank(n_features, dim, rng)
    est = np.sum(bank.features(x) * bank.features(y), axis=1)
    return float(np.mean(np.abs(est - gaussian_kernel(x, y))))


@_timed
def rff_check(seed: int = 0, n_seeds: int = 10, sizes=(128, 256, 512, 1024, 2048), tol: float = 0.05) -> dict:
    """Mean absolute kernel error at N=1024 and its decrease as N doubles."""
    table = np.array([[rff_error(n, seed * 1000 + k) for n in sizes] for k in range(n_seeds)])
    medians = np.median(table, axis=0)
    at_1024 = float(medians[list(sizes).index(1024)])
    decreasing = bool(np.all(np.diff(medians) < 0))
    return {"sizes": list(sizes), "median_error": medians.tolist(), "error_at_1024": at_1024,
            "decreasing": decreasing, "passed": at_1024 < tol and decreasing}


@_timed
def score_check(seed: int = 0, n_draws: int = 1000, tol: float = 1e-2) -> dict:
    """Bit-exact score targets and a trained 1-dim conditional score model."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n_draws)
    beta = rng.uniform(1e-3, 0.999, size=n_draws)
    xt = np.sqrt(1 - beta) * x + np.sqrt(beta) * rng.normal(size=n_draws)
    # scalar oracle with a correctly rounded sqrt, one draw at a time
    exact = all(float(L.perturbation_score(xt[i], x[i], beta[i]))
                == -(xt[i] - math.sqrt(1.0 - beta[i]) * x[i]) / beta[i] for i in range(n_draws))
    res = train_score_1d(np.random.default_rng([seed, 1]))
    return {"bit_exact": exact, "grid_mse": res.grid_mse, "passed": exact and res.grid_mse < tol}


@_timed
def nce_check(seed: int = 0, n_instances: int = 5, n_states: int = 5, n_actions: int = 2, tol: float = 0.1) -> dict:
    """Ranking NCE recovers the density ratio against uniform noise up to a per-(s,a) constant."""
    errs = []
    for i in range(n_instances):
        rng = np.random.default_rng([seed, i])
        P = rng.dirichlet(np.ones(n_states), size=n_states * n_actions)
        errs.append(train_nce_tabular(P, rng).max_rel_error)
    return {"max_rel_error": errs, "passed": max(errs) < tol}


# -- gradient suite ------------------------------------------------------------------------


def _tiny_agent(kind: str, seed: int) -> SpectralAgent:
    rep = RepLearnerConfig(kind="ctrlsr" if kind == "td3" else kind, rep_dim=3, hidden=6, n_negatives=1,
                           n_levels=3, rff_count=4, mc_samples=2)
    cfg = AgentConfig(kind=kind, hidden=6, rep=rep, normalize_obs=False)
    return SpectralAgent(cfg, 2, 1, seed=seed)


def _mlp_pair(rng, widths, prefix, ps):
    spec = MlpSpec(widths, activation="tanh")
    init_mlp(spec, rng, prefix=prefix, params=ps)
    return lambda x: mlp_forward(spec, ps, x, prefix=prefix)


def loss_gradient_errors(seed: int) -> dict:
    """Max relative finite-difference error of every loss, with random inputs drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    B, K, d, D = 4, 3, 3, 2
    out = {}

    ps = ParamSet()
    ps.add("phi", rng.normal(size=(B, d)))
    ps.add("pos", rng.normal(size=(B, d)))
    ps.add("neg", rng.normal(size=(B, K, d)))
    out["scl"] = grad_check(lambda: L.scl_loss(ps["phi"], ps["pos"], ps["neg"], 0.8), ps)

    ps = ParamSet()
    enc = _mlp_pair(rng, (5 + D, 6, 2 * d), "enc.", ps)
    pri = _mlp_pair(rng, (5, 6, 2 * d), "pri.", ps)
    dec = _mlp_pair(rng, (d, 6, D), "dec.", ps)
    sa, sn, eps = rng.normal(size=(B, 5)), rng.normal(size=(B, D)), rng.normal(size=(B, d))

    def split(t):
        return t[:, :d], t[:, d:]

    def elbo():
        return L.elbo_loss(lambda a, b: split(enc(np.concatenate([a, b], 1))), lambda a: split(pri(a)), dec,
                           0.5, (sa, sn), eps)

    out["elbo"] = grad_check(elbo, ps)

    ps = ParamSet()
    ps.add("phi", rng.normal(size=(B, d)))
    ps.add("kappa", rng.normal(size=(B, d, D)))
    sched = np.array([0.1, 0.3])
    betas = sched[rng.integers(0, 2, size=B)]
    st, _ = L.perturb(sn, betas[:, None], rng)
    out["csm"] = grad_check(lambda: L.csm_loss(ps["phi"], ps["kappa"], sn, st, betas, sched), ps)

    ps = ParamSet()
    ps.add("pos", rng.normal(size=B))
    ps.add("neg", rng.normal(size=(B, K)))
    out["rp_nce"] = max(grad_check(lambda m=m: L.rp_nce_loss(ps["pos"], ps["neg"], m), ps)
                        for m in L.DENOMINATOR_MODES)
    # keep inner products away from the hinge at the margin
    ps["pos"].data = rng.uniform(1.2, 2.0, B) * rng.choice([-1, 1], B)
    ps["neg"].data = rng.uniform(1.2, 2.0, (B, K)) * rng.choice([-1, 1], (B, K))
    out["rp_ncel"] = max(grad_check(lambda m=m: L.rp_ncel_loss(ps["pos"], ps["neg"], m, 0.5), ps)
                         for m in L.DENOMINATOR_MODES)

    s, a = rng.normal(size=(B, 2)), rng.uniform(-1, 1, size=(B, 1))
    y = rng.normal(size=B)
    critic, actor, reward = 0.0, 0.0, 0.0
    for kind in ("td3", "scl", "lvrep", "ctrlsr"):
        agent = _tiny_agent(kind, seed)
        if kind == "td3":
            critic = max(critic, grad_check(lambda: agent.critic_loss((s, a), y), agent.critic))
        else:
            rep = agent.representation(agent.rep, s, a)
            rep = tuple(t.detach() for t in rep) if isinstance(rep, tuple) else rep.detach()
            eps_q = agent._head_noise(B)
            critic = max(critic, grad_check(lambda: agent.critic_loss(rep, y, eps_q), agent.critic))
            eps_r = agent._head_noise(B)
            reward = max(reward, grad_check(
                lambda: reward_loss(agent.reward_head, agent.rep, agent.representation(agent.rep, s, a), y, eps_r),
                agent.rep))
        eps_a = agent._head_noise(B)
        actor = max(actor, grad_check(lambda: agent.actor_loss(s, eps_a), agent.actor))
    out["critic"], out["actor"], out["reward"] = critic, actor, reward
    return out


@_timed
def gradient_check(seeds=(0, 1, 2), tol: float = 1e-4) -> dict:
    per_seed = [loss_gradient_errors(s) for s in seeds]
    worst = {k: max(p[k] for p in per_seed) for k in per_seed[0]}
    return {"max_rel_error": worst, "passed": max(worst.values()) < tol}


# -- bonus and optimism ------------------------------------------------------------------


@_timed
def bonus_check(seed: int = 0, n_seeds: int = 20, n_insertions: int = 20) -> dict:
    """Bonus decreases under repeated insertion; optimism reaches the lock goal faster."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=6)
    state = BonusState(dim=6)
    values = [kernel_bonus(state, x)]
    for _ in range(n_insertions):
        state.insert(x)
        values.append(kernel_bonus(state, x))
    decreasing = bool(np.all(np.diff(values) < 0))
    opt, rnd = [], []
    for k in range(n_seeds):
        mdp = combination_lock(rng=np.random.default_rng([seed, k, 0]))
        opt.append(episodes_to_goal(mdp, np.random.default_rng([seed, k, 1]), "optimistic"))
        rnd.append(episodes_to_goal(mdp, np.random.default_rng([seed, k, 2]), "random"))
    med_opt, med_rnd = float(np.median(opt)), float(np.median(rnd))
    return {"bonus_values": values, "strictly_decreasing": decreasing, "optimistic_episodes": opt,
            "random_episodes": rnd, "median_optimistic": med_opt, "median_random": med_rnd,
            "passed": decreasing and med_opt <= 0.5 * med_rnd}


# -- protocol ----------------------------------------------------------------------------

GOLDEN_PROTOCOL = {"eval_interval": 10_000, "eval_episodes": 10, "action_repeat": 2, "discount": 0.99,
                   "smoothing_window": 5}


@_timed
def protocol_check() -> dict:
    cfg = ExperimentConfig()
    got = {k: getattr(cfg, k) for k in GOLDEN_PROTOCOL}
    agent_discount = cfg.agent_config().discount
    return {"values": got, "passed": got == GOLDEN_PROTOCOL and agent_discount == GOLDEN_PROTOCOL["discount"]}


ORACLE_CHECKS = {
    "linear_q": linear_q_check,
    "scl": scl_check,
    "rff": rff_check,
    "score": score_check,
    "nce": nce_check,
    "gradients": gradient_check,
    "bonus": bonus_check,
    "protocol": protocol_check,
}
