"""Parameterized spectral pairs trained with the representation objectives.

Every learner owns networks for ``phi(s, a)`` and a next-state factor, and
exposes

- ``encode(params, s, a)``: the representation consumed by critic heads
- ``loss(params, s, a, s_next, rng)``: the representation objective and a
  dict of logged scalars

Noise-conditioned next-state networks take ``[s_tilde, embed(beta)]``.
In-batch negatives: the batch is split into groups of ``n_negatives + 1``
rows sharing one noise level, and every other row of the group serves as a
negative for a given row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn.autodiff import Tensor, concat
from ..nn.mlp import MlpSpec, init_mlp, mlp_forward
from ..nn.params import ParamSet
from . import losses as L

LEARNER_KINDS = ("scl", "lvrep", "diffsr", "ctrlsr")
HEAD_FOR_KIND = {"scl": "linear", "lvrep": "latent_variable", "diffsr": "ebm", "ctrlsr": "ebm"}


@dataclass
class RepLearnerConfig:
    kind: str = "ctrlsr"
    rep_dim: int = 32
    hidden: int = 64
    scl_lambda: float = 1.0
    vae_beta: float = 0.1
    n_levels: int = 25
    noise_lo: float = 0.01
    noise_hi: float = 0.5
    n_negatives: int = 31
    mc_samples: int = 4
    rff_count: int = 64
    denominator_mode: str = "include_positive"
    ncel_penalty: float = 0.0
    noise_embed_dim: int = 8
    residual: bool = True
    layer_norm: bool = False
    noise_schedule: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.scl_lambda <= 0:
            raise ValueError("scl_lambda must be positive")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.rff_count < 1:
            raise ValueError("rff_count must be >= 1")
        if self.denominator_mode not in L.DENOMINATOR_MODES:
            raise ValueError(f"unknown denominator_mode {self.denominator_mode!r}")
        if self.noise_schedule is None:
            self.noise_schedule = L.geometric_schedule(self.n_levels, self.noise_lo, self.noise_hi)
        self.noise_schedule = L.check_schedule(self.noise_schedule)


def noise_embedding(beta, dim: int) -> np.ndarray:
    """Sinusoidal embedding of ``log(beta)`` at geometric frequencies."""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1, 1)
    freqs = np.geomspace(0.25, 8.0, dim // 2)
    arg = np.log(beta) * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def _spec(widths, cfg: RepLearnerConfig):
    return MlpSpec(tuple(widths), activation="elu", residual=cfg.residual, layer_norm=cfg.layer_norm)


def group_layout(batch: int, group: int):
    """Number of groups and the (row, col) indices of off-diagonal entries."""
    if batch % group:
        raise ValueError(f"batch size {batch} is not a multiple of the group size {group}")
    rows, cols = np.nonzero(~np.eye(group, dtype=bool))
    return batch // group, rows, cols


class RepLearner:
    kind = None
    head_kind = None

    def __init__(self, cfg: RepLearnerConfig, state_dim: int, action_dim: int, target_dim: int = None,
                 rng=None, params: ParamSet = None, prefix: str = "rep."):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.target_dim = state_dim if target_dim is None else target_dim
        self.prefix = prefix
        self.params = ParamSet() if params is None else params
        rng = np.random.default_rng(0) if rng is None else rng
        h, d = cfg.hidden, cfg.rep_dim
        self.phi_spec = _spec((state_dim + action_dim, h, h, self.phi_out_dim()), cfg)
        init_mlp(self.phi_spec, rng, prefix=prefix + "phi.", params=self.params)
        self._build(rng, h, d)

    # subclasses override
    def phi_out_dim(self):
        return self.cfg.rep_dim

    def _build(self, rng, h, d):
        raise NotImplementedError

    @property
    def rep_dim(self):
        return self.cfg.rep_dim

    def phi(self, params, s, a) -> Tensor:
        if isinstance(s, Tensor) or isinstance(a, Tensor):
            x = concat([s if isinstance(s, Tensor) else Tensor(s), a if isinstance(a, Tensor) else Tensor(a)],
                       axis=-1)
        else:
            x = np.concatenate([np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64)], axis=-1)
        return mlp_forward(self.phi_spec, params, x, prefix=self.prefix + "phi.")

    def rep_from_phi(self, phi_out):
        return phi_out

    def encode(self, params, s, a):
        return self.rep_from_phi(self.phi(params, s, a))

    def sample_levels(self, rng, n_groups: int) -> np.ndarray:
        sched = self.cfg.noise_schedule
        return sched[rng.integers(0, len(sched), size=n_groups)]

    def loss(self, params, s, a, s_next, rng, phi_out=None):
        raise NotImplementedError


class _NoiseConditioned(RepLearner):
    """Shared plumbing for learners with a noise-conditioned next-state network."""

    def nu_in_dim(self):
        return self.target_dim + self.cfg.noise_embed_dim

    def nu_input(self, s_tilde, betas):
        return np.concatenate([s_tilde, noise_embedding(betas, self.cfg.noise_embed_dim)], axis=1)

    def perturbed_groups(self, s_next, rng):
        B = s_next.shape[0]
        n_groups, rows, cols = group_layout(B, self.cfg.n_negatives + 1)
        levels = self.sample_levels(rng, n_groups)
        betas = np.repeat(levels, B // n_groups)
        s_tilde, _ = L.perturb(s_next, betas[:, None], rng)
        return n_groups, rows, cols, betas, s_tilde

    def group_inner(self, phi_out, nu_out, n_groups):
        """Per-group inner-product matrices split into diagonal and off-diagonal parts."""
        B, d = phi_out.shape
        g = B // n_groups
        inner = phi_out.reshape(n_groups, g, d) @ nu_out.reshape(n_groups, g, d).transpose(0, 2, 1)
        idx = np.arange(g)
        pos = inner[:, idx, idx].reshape(B)
        rows, cols = np.nonzero(~np.eye(g, dtype=bool))
        neg = inner[:, rows, cols].reshape(B, g - 1)
        return pos, neg


class SclPair(_NoiseConditioned):
    """Spectral contrastive learner: ``phi(s,a) . nu(s_tilde', beta)`` fits the density ratio."""

    kind = "scl"
    head_kind = "linear"

    def _build(self, rng, h, d):
        self.nu_spec = _spec((self.nu_in_dim(), h, h, d), self.cfg)
        init_mlp(self.nu_spec, rng, prefix=self.prefix + "nu.", params=self.params)

    def loss(self, params, s, a, s_next, rng, phi_out=None):
        n_groups, _, _, betas, s_tilde = self.perturbed_groups(s_next, rng)
        phi_out = self.phi(params, s, a) if phi_out is None else phi_out
        nu_out = mlp_forward(self.nu_spec, params, self.nu_input(s_tilde, betas), prefix=self.prefix + "nu.")
        pos, neg = self.group_inner(phi_out, nu_out, n_groups)
        loss = L.scl_from_inner(pos, neg, self.cfg.scl_lambda)
        return loss, {"scl": loss.item()}


class CtrlSrPair(_NoiseConditioned):
    """Perturbed ranking NCE learner with energy ``phi(s,a) . nu(s_tilde', beta)``."""

    kind = "ctrlsr"
    head_kind = "ebm"

    def _build(self, rng, h, d):
        self.nu_spec = _spec((self.nu_in_dim(), h, h, d), self.cfg)
        init_mlp(self.nu_spec, rng, prefix=self.prefix + "nu.", params=self.params)

    def loss(self, params, s, a, s_next, rng, phi_out=None):
        n_groups, _, _, betas, s_tilde = self.perturbed_groups(s_next, rng)
        phi_out = self.phi(params, s, a) if phi_out is None else phi_out
        nu_out = mlp_forward(self.nu_spec, params, self.nu_input(s_tilde, betas), prefix=self.prefix + "nu.")
        pos, neg = self.group_inner(phi_out, nu_out, n_groups)
        loss = L.rp_nce_loss(pos, neg, self.cfg.denominator_mode)
        return loss, {"nce": loss.item()}


class DiffSrPair(_NoiseConditioned):
    """Conditional score matching learner: score(s_tilde' | s, a) ~ phi(s,a)^T kappa(s_tilde', beta).

    The score head output is divided by ``sqrt(beta)`` so that its raw scale
    stays O(1) across noise levels.
    """

    kind = "diffsr"
    head_kind = "ebm"

    def _build(self, rng, h, d):
        self.kappa_spec = _spec((self.nu_in_dim(), h, h, d * self.target_dim), self.cfg)
        init_mlp(self.kappa_spec, rng, prefix=self.prefix + "kappa.", params=self.params)

    def kappa(self, params, s_tilde, betas) -> Tensor:
        out = mlp_forward(self.kappa_spec, params, self.nu_input(s_tilde, betas), prefix=self.prefix + "kappa.")
        out = out * (1.0 / np.sqrt(np.asarray(betas, dtype=np.float64)))[:, None]
        return out.reshape(out.shape[0], self.cfg.rep_dim, self.target_dim)

    def loss(self, params, s, a, s_next, rng, phi_out=None):
        B = s_next.shape[0]
        sched = self.cfg.noise_schedule
        betas = sched[rng.integers(0, len(sched), size=B)]
        s_tilde, _ = L.perturb(s_next, betas[:, None], rng)
        phi_out = self.phi(params, s, a) if phi_out is None else phi_out
        loss = L.csm_loss(phi_out, self.kappa(params, s_tilde, betas), s_next, s_tilde, betas, sched)
        return loss, {"csm": loss.item()}


class LvRepPair(RepLearner):
    """Variational learner: prior ``phi(z|s,a)``, encoder ``q(z|s,a,s')``, decoder ``nu(s'|z)``."""

    kind = "lvrep"
    head_kind = "latent_variable"

    def phi_out_dim(self):
        return 2 * self.cfg.rep_dim

    def _build(self, rng, h, d):
        self.enc_spec = _spec((self.state_dim + self.action_dim + self.target_dim, h, h, 2 * d), self.cfg)
        self.dec_spec = _spec((d, h, h, self.target_dim), self.cfg)
        init_mlp(self.enc_spec, rng, prefix=self.prefix + "enc.", params=self.params)
        init_mlp(self.dec_spec, rng, prefix=self.prefix + "dec.", params=self.params)

    def _split(self, out):
        d = self.cfg.rep_dim
        return out[:, :d], out[:, d:]

    def rep_from_phi(self, phi_out):
        return self._split(phi_out)

    def loss(self, params, s, a, s_next, rng, phi_out=None):
        sa = np.concatenate([s, a], axis=-1)
        prior_out = self.phi(params, s, a) if phi_out is None else phi_out
        eps = rng.standard_normal((s.shape[0], self.cfg.rep_dim))

        def encoder(sa_, sn_):
            return self._split(mlp_forward(self.enc_spec, params, np.concatenate([sa_, sn_], axis=-1),
                                           prefix=self.prefix + "enc."))

        def prior(_):
            return self._split(prior_out)

        def decoder(z):
            return mlp_forward(self.dec_spec, params, z, prefix=self.prefix + "dec.")

        loss = L.elbo_loss(encoder, prior, decoder, self.cfg.vae_beta, (sa, s_next), eps)
        return loss, {"elbo": loss.item()}


LEARNERS = {"scl": SclPair, "lvrep": LvRepPair, "diffsr": DiffSrPair, "ctrlsr": CtrlSrPair}


def make_learner(cfg: RepLearnerConfig, state_dim, action_dim, target_dim=None, rng=None,
                 params=None, prefix="rep.") -> RepLearner:
    return LEARNERS[cfg.kind](cfg, state_dim, action_dim, target_dim, rng=rng, params=params, prefix=prefix)
