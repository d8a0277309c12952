"""Actor-critic agent with optional spectral representation (twin critics, EMA targets).

One :meth:`SpectralAgent.update` performs, in order:

1. a representation step on the selected objective plus the weighted reward
   prediction loss (skipped for ``kind="td3"``),
2. a critic step on the twin-Q regression with a min-over-targets TD target,
3. an actor step every ``policy_delay`` updates,
4. soft target updates for critics, actor and representation.

Critics read the online representation, detached unless ``coupled``.
Bootstrapped next-state features come from the EMA representation copy.
Network inputs are observations normalized by running statistics and
actions scaled to [-1, 1].
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..nn.autodiff import Tensor, backward, concat, minimum, no_grad
from ..nn.mlp import MlpSpec, init_mlp, mlp_forward
from ..nn.optim import OptimizerState, adam_step
from ..nn.params import ParamSet, frozen
from ..replearn.learners import HEAD_FOR_KIND, RepLearnerConfig, make_learner
from .critics import make_head, reward_loss

AGENT_KINDS = ("td3", "scl", "lvrep", "diffsr", "ctrlsr")


class NonFiniteLoss(FloatingPointError):
    def __init__(self, name, step, values):
        self.loss_name = name
        self.step = step
        self.values = values
        super().__init__(f"loss {name!r} became non-finite at update {step}: {values}")


@dataclass
class AgentConfig:
    kind: str = "ctrlsr"
    hidden: int = 64
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    lr_rep: float = 3e-4
    tau: float = 0.005
    rep_tau: float = 0.005
    discount: float = 0.99
    policy_noise: float = 0.2
    noise_clip: float = 0.3
    expl_noise: float = 0.2
    policy_delay: int = 1
    batch_size: int = 128
    reward_weight: float = 0.1
    coupled: bool = False
    learn_frequencies: bool = True
    normalize_obs: bool = True
    rep: RepLearnerConfig = field(default_factory=RepLearnerConfig)

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind != "td3" and self.rep.kind != self.kind:
            self.rep = RepLearnerConfig(**{**_rep_fields(self.rep), "kind": self.kind})
        if not (0 < self.tau <= 1 and 0 < self.rep_tau <= 1):
            raise ValueError("soft update rates must lie in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")


def _rep_fields(rep: RepLearnerConfig) -> dict:
    return {f.name: getattr(rep, f.name) for f in fields(rep)}


class RunningNorm:
    """Running mean/std (parallel Welford); ``normalize`` clips to +-10."""

    def __init__(self, dim: int, std_floor: float = 1e-3):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.std_floor = std_floor

    def update(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.mean.size)
        n = x.shape[0]
        bm = x.mean(axis=0)
        bm2 = ((x - bm) ** 2).sum(axis=0)
        tot = self.count + n
        delta = bm - self.mean
        self.mean = self.mean + delta * n / tot
        self.m2 = self.m2 + bm2 + delta**2 * self.count * n / tot
        self.count = tot

    @property
    def std(self):
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.maximum(np.sqrt(self.m2 / self.count), self.std_floor)

    def normalize(self, x):
        return np.clip((np.asarray(x, dtype=np.float64) - self.mean) / self.std, -10.0, 10.0)

    def state_arrays(self, prefix):
        return {prefix + "count": np.array(self.count), prefix + "mean": self.mean.copy(),
                prefix + "m2": self.m2.copy()}

    def load_arrays(self, arrays, prefix):
        self.count = float(arrays[prefix + "count"])
        self.mean = np.array(arrays[prefix + "mean"])
        self.m2 = np.array(arrays[prefix + "m2"])


class _Identity:
    def update(self, x):
        pass

    def normalize(self, x):
        return np.asarray(x, dtype=np.float64)

    def state_arrays(self, prefix):
        return {}

    def load_arrays(self, arrays, prefix):
        pass


class SpectralAgent:
    """Agent state: actor, twin critics, representation, reward head and their EMA copies."""

    def __init__(self, cfg: AgentConfig, obs_dim: int, act_dim: int, action_bound: float = 1.0,
                 seed: int = 0, rep_target_dim: int = None, rngs: dict = None):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.action_bound = float(action_bound)
        self.rep_target_dim = obs_dim if rep_target_dim is None else rep_target_dim
        rngs = rngs or {}
        init_rng = rngs.get("nets", np.random.default_rng(seed))
        self.rng = rngs.get("agent", np.random.default_rng([seed, 1]))
        self.explore_rng = rngs.get("explore", np.random.default_rng([seed, 2]))
        h = cfg.hidden

        self.actor = ParamSet()
        self.actor_spec = MlpSpec((obs_dim, h, h, act_dim), activation="relu")
        init_mlp(self.actor_spec, init_rng, prefix="a.", params=self.actor)

        self.rep = ParamSet()
        self.critic = ParamSet()
        if cfg.kind == "td3":
            self.learner = None
            self.reward_head = None
            self.critic_spec = MlpSpec((obs_dim + act_dim, h, h, 1), activation="relu")
            init_mlp(self.critic_spec, init_rng, prefix="q1.", params=self.critic)
            init_mlp(self.critic_spec, init_rng, prefix="q2.", params=self.critic)
            self.heads = None
        else:
            self.learner = make_learner(cfg.rep, obs_dim, act_dim, self.rep_target_dim, rng=init_rng,
                                        params=self.rep, prefix="rep.")
            head_kind = HEAD_FOR_KIND[cfg.kind]
            hk = dict(hidden=h, n_rff=cfg.rep.rff_count, mc_samples=cfg.rep.mc_samples,
                      learn_frequencies=cfg.learn_frequencies)
            d = cfg.rep.rep_dim
            self.reward_head = make_head(head_kind, d, self.rep, init_rng, "rew.", **hk)
            self.heads = (make_head(head_kind, d, self.critic, init_rng, "q1.", **hk),
                          make_head(head_kind, d, self.critic, init_rng, "q2.", **hk))

        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.rep_target = self.rep.copy()
        self.opt_actor = OptimizerState(learning_rate=cfg.lr_actor)
        self.opt_critic = OptimizerState(learning_rate=cfg.lr_critic)
        self.opt_rep = OptimizerState(learning_rate=cfg.lr_rep)
        self.state_norm = RunningNorm(obs_dim) if cfg.normalize_obs else _Identity()
        self.target_norm = RunningNorm(self.rep_target_dim) if cfg.normalize_obs else _Identity()
        self.n_updates = 0

    # -- acting -------------------------------------------------------------------
    def observe(self, state, rep_target=None):
        """Feed one stored transition's state (and representation target) to the normalizers."""
        self.state_norm.update(state)
        if rep_target is not None:
            self.target_norm.update(rep_target)

    def _policy(self, params, s) -> Tensor:
        return mlp_forward(self.actor_spec, params, s, prefix="a.").tanh()

    def act(self, obs, explore: bool = True) -> np.ndarray:
        s = self.state_norm.normalize(np.asarray(obs, dtype=np.float64)[None, :])
        with no_grad():
            a = self._policy(self.actor, s).data[0]
        if explore:
            a = np.clip(a + self.cfg.expl_noise * self.explore_rng.standard_normal(a.shape), -1.0, 1.0)
        return a * self.action_bound

    # -- value functions --------------------------------------------------------------
    def representation(self, rep_params, s, a):
        return self.learner.encode(rep_params, s, a)

    def _head_noise(self, batch):
        if self.heads is not None and self.heads[0].kind == "latent_variable":
            return self.heads[0].sample_noise(self.rng, batch)
        return None

    def q_values(self, critic_params, rep_or_sa, eps=None):
        """Both critics on a representation output (or on (s, a) for plain TD3)."""
        if self.learner is None:
            s, a = rep_or_sa
            xt = concat([s if isinstance(s, Tensor) else Tensor(s), a if isinstance(a, Tensor) else Tensor(a)],
                        axis=-1)
            q1 = mlp_forward(self.critic_spec, critic_params, xt, prefix="q1.")
            q2 = mlp_forward(self.critic_spec, critic_params, xt, prefix="q2.")
            return q1.reshape(-1), q2.reshape(-1)
        return self.heads[0](critic_params, rep_or_sa, eps), self.heads[1](critic_params, rep_or_sa, eps)

    def td_target(self, s2, reward, done, discount) -> np.ndarray:
        """``r + discount * (1 - done) * min_j Qbar_j(s', a')`` with smoothed target actions."""
        with no_grad():
            a2 = self._policy(self.actor_target, s2).data
            noise = np.clip(self.cfg.policy_noise * self.rng.standard_normal(a2.shape),
                            -self.cfg.noise_clip, self.cfg.noise_clip)
            a2 = np.clip(a2 + noise, -1.0, 1.0)
            if self.learner is None:
                q1, q2 = self.q_values(self.critic_target, (s2, a2))
            else:
                rep2 = self.representation(self.rep_target, s2, a2)
                q1, q2 = self.q_values(self.critic_target, rep2, self._head_noise(s2.shape[0]))
            qmin = np.minimum(q1.data, q2.data)
        return reward + discount * (1.0 - done) * qmin

    # -- losses ---------------------------------------------------------------------
    def critic_loss(self, rep_or_sa, y, eps=None) -> Tensor:
        q1, q2 = self.q_values(self.critic, rep_or_sa, eps)
        return (q1 - y).square().mean() + (q2 - y).square().mean()

    def actor_loss(self, s, eps=None) -> Tensor:
        """``-mean min_i Q_i(s, pi(s))``; critics and representation receive no gradient.

        ``eps`` fixes the latent-variable head noise; it is sampled when omitted.
        """
        with frozen(self.critic, self.rep):
            a = self._policy(self.actor, s)
            if self.learner is None:
                rep = (s, a)
                eps = None
            else:
                rep = self.representation(self.rep, s, a)
                eps = self._head_noise(s.shape[0]) if eps is None else eps
            q1, q2 = self.q_values(self.critic, rep, eps)
            return -minimum(q1, q2).mean()

    def _check(self, name, value):
        if not np.isfinite(value):
            raise NonFiniteLoss(name, self.n_updates, value)

    # -- one training update -------------------------------------------------------
    def prepare(self, batch):
        s = self.state_norm.normalize(batch.state)
        s2 = self.state_norm.normalize(batch.next_state)
        a = np.asarray(batch.action, dtype=np.float64) / self.action_bound
        tgt = self.target_norm.normalize(batch.rep_target)
        return s, a, s2, tgt

    def update(self, batch) -> dict:
        cfg = self.cfg
        s, a, s2, tgt = self.prepare(batch)
        r = np.asarray(batch.reward, dtype=np.float64)
        done = np.asarray(batch.done, dtype=np.float64)
        disc = np.asarray(batch.discount, dtype=np.float64)
        logs = {}

        y = self.td_target(s2, r, done, disc)

        if self.learner is None:
            closs = self.critic_loss((s, a), y)
            self._check("critic", closs.item())
            backward(closs)
            adam_step(self.opt_critic, self.critic)
        else:
            phi_out = self.learner.phi(self.rep, s, a)
            rep_loss, rl = self.learner.loss(self.rep, s, a, tgt, self.rng, phi_out=phi_out)
            rep_out = self.learner.rep_from_phi(phi_out)
            eps_r = self._head_noise(s.shape[0])
            rloss = reward_loss(self.reward_head, self.rep, rep_out, r, eps_r)
            total = rep_loss + cfg.reward_weight * rloss
            logs.update(rl)
            logs["reward"] = rloss.item()
            for k, v in logs.items():
                self._check(k, v)
            eps_q = self._head_noise(s.shape[0])
            if cfg.coupled:
                closs = self.critic_loss(rep_out, y, eps_q)
                self._check("critic", closs.item())
                backward(total + closs)
                adam_step(self.opt_rep, self.rep)
                adam_step(self.opt_critic, self.critic)
            else:
                backward(total)
                adam_step(self.opt_rep, self.rep)
                detached = tuple(x.detach() for x in rep_out) if isinstance(rep_out, tuple) else rep_out.detach()
                closs = self.critic_loss(detached, y, eps_q)
                self._check("critic", closs.item())
                backward(closs)
                adam_step(self.opt_critic, self.critic)
        logs["critic"] = closs.item()

        self.n_updates += 1
        if self.n_updates % cfg.policy_delay == 0:
            aloss = self.actor_loss(s)
            self._check("actor", aloss.item())
            backward(aloss)
            adam_step(self.opt_actor, self.actor)
            logs["actor"] = aloss.item()
            self.actor_target.soft_update(self.actor, cfg.tau)
            self.critic_target.soft_update(self.critic, cfg.tau)
            self.rep_target.soft_update(self.rep, cfg.rep_tau)
        return logs

    # -- persistence ------------------------------------------------------------------
    def state_arrays(self) -> dict:
        out = {}
        for tag, ps in (("actor", self.actor), ("critic", self.critic), ("rep", self.rep),
                        ("actor_target", self.actor_target), ("critic_target", self.critic_target),
                        ("rep_target", self.rep_target)):
            for n, arr in ps.arrays().items():
                out[f"{tag}/{n}"] = arr
        out.update(self.state_norm.state_arrays("norm/state/"))
        out.update(self.target_norm.state_arrays("norm/target/"))
        return out

    def load_state_arrays(self, arrays) -> None:
        for tag, ps in (("actor", self.actor), ("critic", self.critic), ("rep", self.rep),
                        ("actor_target", self.actor_target), ("critic_target", self.critic_target),
                        ("rep_target", self.rep_target)):
            ps.load_arrays({n: arrays[f"{tag}/{n}"] for n in ps.names()})
        self.state_norm.load_arrays(arrays, "norm/state/")
        self.target_norm.load_arrays(arrays, "norm/target/")

    def config_dict(self) -> dict:
        d = asdict(self.cfg)
        d["rep"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d["rep"].items()}
        return d


def agent_config_from_dict(d: dict) -> AgentConfig:
    d = dict(d)
    rep = dict(d.pop("rep", {}))
    if rep.get("noise_schedule") is not None:
        rep["noise_schedule"] = np.asarray(rep["noise_schedule"], dtype=np.float64)
    return AgentConfig(rep=RepLearnerConfig(**rep), **d)
