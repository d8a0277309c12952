"""Random Fourier features for the unit Gaussian kernel and the EBM spectral map."""
from __future__ import annotations

import numpy as np


class DegenerateNormalizer(ZeroDivisionError):
    pass


class RffBank:
    """Frozen frequencies ``omega_i ~ N(0, I_d)``, i = 1..N.

    ``features(x)`` interleaves ``cos(omega_i . x) / sqrt(N)`` and
    ``sin(omega_i . x) / sqrt(N)``, so ``features(x) . features(y)``
    estimates ``exp(-|x - y|^2 / 2)``.
    """

    def __init__(self, n_features: int, dim: int, rng=None, frequencies=None):
        if frequencies is None:
            if n_features < 1:
                raise ValueError("need at least one random feature")
            rng = np.random.default_rng() if rng is None else rng
            frequencies = rng.standard_normal((n_features, dim))
        self.frequencies = np.array(frequencies, dtype=np.float64)
        self.frequencies.setflags(write=False)

    @property
    def n_features(self):
        return self.frequencies.shape[0]

    @property
    def dim(self):
        return self.frequencies.shape[1]

    def features(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        proj = x @ self.frequencies.T
        out = np.empty(proj.shape[:-1] + (2 * self.n_features,))
        scale = 1.0 / np.sqrt(self.n_features)
        out[..., 0::2] = np.cos(proj) * scale
        out[..., 1::2] = np.sin(proj) * scale
        return out


def rff_features(bank: RffBank, x) -> np.ndarray:
    return bank.features(x)


def gaussian_kernel(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.exp(-0.5 * np.sum((x - y) ** 2, axis=-1))


def ebm_rep(bank: RffBank, energy_feature, u) -> np.ndarray:
    """``zeta(phi_E) / <zeta(phi_E), u>``, the spectral map of a factorized EBM."""
    z = bank.features(energy_feature)
    den = z @ np.asarray(u, dtype=np.float64)
    if np.any(np.abs(den) < 1e-8):
        raise DegenerateNormalizer("normalizer <zeta(phi), u> is numerically zero")
    return z / np.asarray(den)[..., None]


def ebm_mu(bank: RffBank, nu_feature) -> np.ndarray:
    """``exp(|nu|^2 / 2) zeta(nu)``, the matching right factor (energy phi.nu)."""
    nu = np.asarray(nu_feature, dtype=np.float64)
    return np.exp(0.5 * np.sum(nu**2, axis=-1))[..., None] * bank.features(nu)
