"""Q-value heads on top of a spectral representation.

A head maps a representation output to one scalar per datum:

- ``linear``: ``phi . xi + b``
- ``latent_variable``: ``mean_l xi(z_l)`` with ``z_l = mean + std * eps_l``
- ``ebm``: ``elu(W2 [cos(phi W1), sin(phi W1)] / sqrt(N) + b2) . eta``
"""
from __future__ import annotations

import numpy as np

from ..nn.autodiff import Tensor, concat
from ..nn.mlp import MlpSpec, init_mlp, mlp_forward
from ..nn.params import ParamSet

HEAD_KINDS = ("linear", "latent_variable", "ebm")


def _check_finite(x):
    arrs = x if isinstance(x, tuple) else (x,)
    for a in arrs:
        if a is None:
            continue
        data = a.data if isinstance(a, Tensor) else np.asarray(a)
        if not np.all(np.isfinite(data)):
            raise FloatingPointError("representation output is not finite")


class LinearHead:
    kind = "linear"

    def __init__(self, rep_dim: int, params: ParamSet, rng, prefix: str):
        self.rep_dim = rep_dim
        self.prefix = prefix
        params.add(prefix + "xi", rng.uniform(-1, 1, rep_dim) / np.sqrt(rep_dim))
        params.add(prefix + "bias", np.zeros(()))

    def __call__(self, params: ParamSet, phi, eps=None) -> Tensor:
        _check_finite(phi)
        phi = phi if isinstance(phi, Tensor) else Tensor(phi)
        return phi @ params[self.prefix + "xi"] + params[self.prefix + "bias"]


class LatentVariableHead:
    """Monte-Carlo average of a value network over reparameterized latent samples.

    The representation is ``(mean, log_std)``; ``log_std=None`` means a point
    mass at ``mean``. ``eps`` has shape (L, B, d).
    """

    kind = "latent_variable"

    def __init__(self, rep_dim: int, params: ParamSet, rng, prefix: str, hidden: int = 64,
                 n_samples: int = 4, spec: MlpSpec = None):
        self.rep_dim = rep_dim
        self.prefix = prefix
        self.n_samples = n_samples
        self.spec = spec or MlpSpec((rep_dim, hidden, 1), activation="elu")
        init_mlp(self.spec, rng, prefix=prefix, params=params)

    def sample_noise(self, rng, batch: int) -> np.ndarray:
        return rng.standard_normal((self.n_samples, batch, self.rep_dim))

    def __call__(self, params: ParamSet, rep, eps=None) -> Tensor:
        mean, log_std = rep
        _check_finite(rep)
        mean = mean if isinstance(mean, Tensor) else Tensor(mean)
        if log_std is None:
            z = mean.reshape(1, *mean.shape)
        else:
            if eps is None:
                raise ValueError("latent-variable head needs reparameterization noise")
            log_std = log_std if isinstance(log_std, Tensor) else Tensor(log_std)
            z = mean.reshape(1, *mean.shape) + log_std.clip(-20.0, 2.0).exp().reshape(1, *mean.shape) * Tensor(eps)
        v = mlp_forward(self.spec, params, z, prefix=self.prefix)
        return v.reshape(v.shape[0], v.shape[1]).mean(axis=0)


class EbmHead:
    """Sinusoidal features of ``phi`` followed by one elu layer and a linear readout.

    ``W1`` starts as unit-Gaussian frequencies; ``learn_frequencies=False``
    keeps it frozen.
    """

    kind = "ebm"

    def __init__(self, rep_dim: int, params: ParamSet, rng, prefix: str, n_rff: int = 64,
                 hidden: int = 64, learn_frequencies: bool = True):
        self.rep_dim = rep_dim
        self.prefix = prefix
        self.n_rff = n_rff
        params.add(prefix + "w1", rng.standard_normal((rep_dim, n_rff)), trainable=learn_frequencies)
        bound = 1.0 / np.sqrt(2 * n_rff)
        params.add(prefix + "w2", rng.uniform(-bound, bound, (2 * n_rff, hidden)) * np.sqrt(n_rff))
        params.add(prefix + "b2", rng.uniform(-bound, bound, hidden))
        params.add(prefix + "eta", rng.uniform(-1, 1, hidden) / np.sqrt(hidden))

    def features(self, params: ParamSet, phi) -> Tensor:
        phi = phi if isinstance(phi, Tensor) else Tensor(phi)
        proj = phi @ params[self.prefix + "w1"]
        return concat([proj.cos(), proj.sin()], axis=-1) * (1.0 / np.sqrt(self.n_rff))

    def __call__(self, params: ParamSet, phi, eps=None) -> Tensor:
        _check_finite(phi)
        h = self.features(params, phi) @ params[self.prefix + "w2"] + params[self.prefix + "b2"]
        return h.elu() @ params[self.prefix + "eta"]


def make_head(kind: str, rep_dim: int, params: ParamSet, rng, prefix: str, hidden: int = 64,
              n_rff: int = 64, mc_samples: int = 4, learn_frequencies: bool = True):
    if kind == "linear":
        return LinearHead(rep_dim, params, rng, prefix)
    if kind == "latent_variable":
        return LatentVariableHead(rep_dim, params, rng, prefix, hidden=hidden, n_samples=mc_samples)
    if kind == "ebm":
        return EbmHead(rep_dim, params, rng, prefix, n_rff=n_rff, hidden=hidden,
                       learn_frequencies=learn_frequencies)
    raise ValueError(f"unknown critic head kind {kind!r}")


def q_forward(head, params: ParamSet, rep, eps=None) -> Tensor:
    return head(params, rep, eps)


def reward_loss(head, params: ParamSet, rep, reward, eps=None) -> Tensor:
    """Mean squared reward-prediction error."""
    pred = head(params, rep, eps)
    return (pred - np.asarray(reward, dtype=np.float64)).square().mean()
