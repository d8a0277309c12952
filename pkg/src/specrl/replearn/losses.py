"""Representation-learning objectives as differentiable minimization targets."""
from __future__ import annotations

import math

import numpy as np

from ..nn.autodiff import Tensor, concat

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
DENOMINATOR_MODES = ("negatives_only", "include_positive")


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def geometric_schedule(n_levels: int = 25, lo: float = 0.01, hi: float = 0.5) -> np.ndarray:
    """Strictly increasing noise levels spaced geometrically in [lo, hi]."""
    if n_levels < 1:
        raise ValueError("need at least one noise level")
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError("noise levels must lie in (0, 1)")
    if n_levels == 1:
        return np.array([lo])
    return np.geomspace(lo, hi, n_levels)


def check_schedule(schedule) -> np.ndarray:
    s = np.asarray(schedule, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("noise schedule must be a non-empty sequence")
    if np.any(s <= 0) or np.any(s >= 1):
        raise ValueError("noise levels must lie in (0, 1)")
    if np.any(np.diff(s) <= 0):
        raise ValueError("noise schedule must be strictly increasing")
    return s


# -- spectral contrastive --------------------------------------------------------


def scl_from_inner(pos_inner, neg_inner, lam: float = 1.0) -> Tensor:
    """``lam * mean(neg^2) - 2 * mean(pos)``; ``neg_inner`` is (B,) or (B, K)."""
    pos_inner, neg_inner = _t(pos_inner), _t(neg_inner)
    if pos_inner.shape[0] == 0:
        raise ValueError("empty batch")
    if neg_inner.ndim == 1:
        neg_term = neg_inner.square().mean()
    else:
        neg_term = neg_inner.square().mean(axis=1).mean()
    return lam * neg_term - 2.0 * pos_inner.mean()


def scl_loss(phi_out, mu_pos, mu_neg, lam: float = 1.0) -> Tensor:
    """Empirical spectral contrastive loss with the constant term dropped.

    ``phi_out`` and ``mu_pos`` are (B, d). ``mu_neg`` is (B, d) for one
    negative per datum or (B, K, d) for K negatives whose squared inner
    products are averaged.
    """
    phi_out, mu_pos, mu_neg = _t(phi_out), _t(mu_pos), _t(mu_neg)
    if phi_out.shape[0] == 0:
        raise ValueError("empty batch")
    if not (phi_out.shape[0] == mu_pos.shape[0] == mu_neg.shape[0]):
        raise ValueError("phi, positive and negative batches must have equal size")
    pos = (phi_out * mu_pos).sum(axis=-1)
    if mu_neg.ndim == 2:
        neg = (phi_out * mu_neg).sum(axis=-1)
    else:
        neg = (phi_out.reshape(phi_out.shape[0], 1, -1) * mu_neg).sum(axis=-1)
    return scl_from_inner(pos, neg, lam)


# -- variational ------------------------------------------------------------------


def clamp_log_std(log_std) -> Tensor:
    return _t(log_std).clip(LOG_STD_MIN, LOG_STD_MAX)


def gaussian_kl(mean_q, log_std_q, mean_p, log_std_p) -> Tensor:
    """KL(N(mean_q, e^{2 log_std_q}) || N(mean_p, e^{2 log_std_p})) summed over the last axis."""
    mean_q, log_std_q, mean_p, log_std_p = map(_t, (mean_q, log_std_q, mean_p, log_std_p))
    var_ratio = (2.0 * (log_std_q - log_std_p)).exp()
    diff = (mean_q - mean_p) / log_std_p.exp()
    kl = (log_std_p - log_std_q) + 0.5 * (var_ratio + diff.square()) - 0.5
    out = kl.sum(axis=-1)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("KL divergence is not finite")
    return out


def unit_gaussian_log_density(x, mean) -> Tensor:
    x, mean = _t(x), _t(mean)
    dim = x.shape[-1]
    return -0.5 * (x - mean).square().sum(axis=-1) - 0.5 * dim * math.log(2.0 * math.pi)


def elbo_terms(enc_mean, enc_log_std, prior_mean, prior_log_std, decoder, target, eps):
    """Reconstruction log-likelihood and KL for one reparameterized latent sample.

    ``decoder`` maps a latent batch to the mean of a unit-variance Gaussian
    over the target. Log standard deviations are clamped to [-20, 2].
    """
    enc_log_std = clamp_log_std(enc_log_std)
    prior_log_std = clamp_log_std(prior_log_std)
    z = _t(enc_mean) + enc_log_std.exp() * _t(eps)
    recon = unit_gaussian_log_density(target, decoder(z))
    kl = gaussian_kl(enc_mean, enc_log_std, prior_mean, prior_log_std)
    return recon, kl


def elbo_loss(encoder, prior, decoder, beta: float, batch, eps) -> Tensor:
    """Negated beta-ELBO averaged over the batch.

    ``batch`` is ``(state_action, next_state)``; ``encoder(sa, s')`` and
    ``prior(sa)`` return ``(mean, log_std)``; ``eps`` is the standard normal
    draw used for the reparameterized latent sample.
    """
    sa, s_next = batch
    em, els = encoder(sa, s_next)
    pm, pls = prior(sa)
    recon, kl = elbo_terms(em, els, pm, pls, decoder, s_next, eps)
    return -(recon - beta * kl).mean()


# -- perturbation and score matching -------------------------------------------------


def perturb(x, beta, rng):
    """Sample ``sqrt(1 - beta) x + sqrt(beta) eps`` with ``eps ~ N(0, I)``.

    ``beta`` may be a scalar or broadcast against ``x`` (one level per row).
    Returns ``(x_tilde, eps)``.
    """
    x = np.asarray(x, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise ValueError("perturbation level must lie in (0, 1)")
    eps = rng.standard_normal(x.shape)
    return np.sqrt(1.0 - beta) * x + np.sqrt(beta) * eps, eps


def perturbation_score(x_tilde, x, beta):
    """Gradient of log N(x_tilde; sqrt(1-beta) x, beta I) with respect to x_tilde."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    return -(x_tilde - np.sqrt(1.0 - beta) * x) / beta


def csm_loss(phi_out, kappa, next_state, perturbed, betas, schedule) -> Tensor:
    """Conditional score matching: mean squared norm of ``phi^T kappa - target``.

    ``phi_out`` (B, d), ``kappa`` (B, d, D) are network outputs; ``next_state``
    and ``perturbed`` are (B, D) arrays and ``betas`` (B,) the level used per
    datum, each of which must belong to ``schedule``.
    """
    schedule = check_schedule(schedule)
    betas = np.asarray(betas, dtype=np.float64).reshape(-1)
    ok = np.isclose(betas[:, None], schedule[None, :], rtol=0, atol=1e-12).any(axis=1)
    if not np.all(ok):
        raise ValueError("noise level outside the configured schedule")
    phi_out, kappa = _t(phi_out), _t(kappa)
    target = perturbation_score(perturbed, next_state, betas[:, None])
    pred = (phi_out.reshape(phi_out.shape[0], phi_out.shape[1], 1) * kappa).sum(axis=1)
    return (pred - target).square().sum(axis=-1).mean()


# -- ranking noise contrastive estimation ---------------------------------------------


def _check_mode(mode):
    if mode not in DENOMINATOR_MODES:
        raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")


def rp_nce_terms(pos_logits, neg_logits, denominator_mode: str = "include_positive") -> Tensor:
    """Per-row negated log-ratio of the positive against the ranking denominator."""
    _check_mode(denominator_mode)
    pos_logits, neg_logits = _t(pos_logits), _t(neg_logits)
    if neg_logits.ndim != 2 or neg_logits.shape[1] == 0:
        raise ValueError("need at least one negative per datum (K >= 1)")
    if denominator_mode == "include_positive":
        den = concat([pos_logits.reshape(-1, 1), neg_logits], axis=1)
    else:
        den = neg_logits
    return -(pos_logits - den.logsumexp(axis=1))


def rp_nce_loss(pos_logits, neg_logits, denominator_mode: str = "include_positive") -> Tensor:
    """Mean of ``rp_nce_terms``.

    ``pos_logits`` is (B,), ``neg_logits`` is (B, K); rows stack every
    (noise level, datum) pair so the mean realizes the double average.
    """
    return rp_nce_terms(pos_logits, neg_logits, denominator_mode).mean()


def softplus(x):
    return np.logaddexp(0.0, x)


def rp_ncel_loss(pos_inner, neg_inner, denominator_mode: str = "include_positive",
                 penalty_weight: float = 0.0, margin: float = 1.0) -> Tensor:
    """Ranking NCE on SoftPlus-activated inner products, plus a linear-regime penalty.

    Each term is ``log(sp(pos) / sum(sp(den)))``; the penalty adds
    ``penalty_weight * mean(relu(margin - inner))`` over every inner product.
    """
    _check_mode(denominator_mode)
    pos_inner, neg_inner = _t(pos_inner), _t(neg_inner)
    if neg_inner.ndim != 2 or neg_inner.shape[1] == 0:
        raise ValueError("need at least one negative per datum (K >= 1)")
    sp_pos = pos_inner.softplus()
    sp_neg = neg_inner.softplus()
    den = sp_neg.sum(axis=1)
    if denominator_mode == "include_positive":
        den = den + sp_pos
    loss = -(sp_pos.log() - den.log()).mean()
    if penalty_weight:
        allv = concat([pos_inner.reshape(-1), neg_inner.reshape(-1)], axis=0)
        loss = loss + penalty_weight * (margin - allv).relu().mean()
    return loss
