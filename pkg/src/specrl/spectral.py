"""Closed-form spectral ground truth on tabular MDPs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .mdp import TabularMDP, TabularPolicy, occupancy_measure, state_transition
from .nn.params import ParamSet

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SpectralFactorization:
    """``phi @ mu.T`` approximates the (S*A, S) transition matrix.

    ``phi = U * sigma`` (left singular vectors scaled by singular values) and
    ``mu = V`` (right singular vectors), truncated to rank ``d``.
    """

    phi: np.ndarray  # (S*A, d)
    mu: np.ndarray  # (S, d)
    singular_values: np.ndarray  # (d,)

    @property
    def rank(self):
        return self.phi.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.phi @ self.mu.T

    def left_vectors(self) -> np.ndarray:
        """Orthonormal basis of the phi column space (the left singular vectors)."""
        return self.phi / self.singular_values

    def to_params(self) -> ParamSet:
        ps = ParamSet()
        ps.add("phi", self.phi, trainable=False)
        ps.add("mu", self.mu, trainable=False)
        ps.add("singular_values", self.singular_values, trainable=False)
        return ps

    @classmethod
    def from_arrays(cls, arrays):
        return cls(np.asarray(arrays["phi"]), np.asarray(arrays["mu"]), np.asarray(arrays["singular_values"]))


@dataclass(frozen=True)
class QWeights:
    eta: np.ndarray
    residual: float


def numerical_rank(matrix, tol=RANK_TOL) -> int:
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s > tol))


def factorize_matrix(M: np.ndarray, d=None) -> SpectralFactorization:
    M = np.asarray(M, dtype=np.float64)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if d is None:
        d = max(1, int(np.sum(s > RANK_TOL)))
    if not (1 <= d <= min(M.shape)):
        raise ValueError(f"rank d={d} outside [1, {min(M.shape)}]")
    return SpectralFactorization(U[:, :d] * s[:d], Vt[:d].T.copy(), s[:d].copy())


def exact_factorization(mdp: TabularMDP, d=None) -> SpectralFactorization:
    """Rank-``d`` truncated SVD of the flattened transition operator.

    ``d`` defaults to the numerical rank at threshold 1e-10. The max entry
    error of the reconstruction is bounded by the tail singular-value energy.
    """
    P = mdp.flat_transition()
    if d is not None and not (1 <= d <= min(P.shape)):
        raise ValueError(f"rank d={d} outside [1, {min(P.shape)}]")
    return factorize_matrix(P, d)


def tail_energy(mdp: TabularMDP, d: int) -> float:
    s = np.linalg.svd(mdp.flat_transition(), compute_uv=False)
    return float(np.sqrt(np.sum(s[d:] ** 2)))


def fit_q_weights(factorization: SpectralFactorization, q_table) -> QWeights:
    """Least-squares weights ``eta`` with ``phi @ eta ~= vec(Q)``; the residual is the 2-norm misfit."""
    q = np.asarray(q_table, dtype=np.float64).reshape(-1)
    eta, *_ = np.linalg.lstsq(factorization.phi, q, rcond=None)
    residual = float(np.linalg.norm(factorization.phi @ eta - q))
    return QWeights(eta, residual)


def next_state_marginal(mdp: TabularMDP, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    return rho @ mdp.flat_transition()


def scaled_svd_objective(mdp: TabularMDP, rho, phi, nu) -> float:
    """``2 E_{P(s,a,s')}[phi.nu] - E_{P(s,a) P(s')}[(phi.nu)^2]`` summed exactly.

    ``rho`` is the state-action sampling distribution (flattened ``s * A + a``),
    ``phi`` has shape (S*A, d) and ``nu`` has shape (S, d).
    """
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    if rho.shape != (mdp.n_states * mdp.n_actions,):
        raise ValueError("rho must have one entry per state-action pair")
    if np.any(rho <= 0):
        raise ValueError("rho must be strictly positive")
    marg = next_state_marginal(mdp, rho)
    if np.any(marg <= 0):
        raise ValueError("next-state marginal has zero-probability states")
    inner = np.asarray(phi) @ np.asarray(nu).T  # (SA, S)
    joint = rho[:, None] * mdp.flat_transition()
    product = rho[:, None] * marg[None, :]
    return float(2.0 * np.sum(joint * inner) - np.sum(product * inner**2))


def density_ratio(mdp: TabularMDP, rho) -> np.ndarray:
    """P(s,a,s') / (P(s,a) P(s')) = P(s'|s,a) / P(s'), the maximizer of the scaled-SVD objective."""
    marg = next_state_marginal(mdp, rho)
    return mdp.flat_transition() / marg[None, :]


def scaled_kernel(mdp: TabularMDP, rho) -> np.ndarray:
    """P(s,a,s') / sqrt(P(s,a) P(s')) as an (S*A, S) matrix."""
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    marg = next_state_marginal(mdp, rho)
    return (rho[:, None] * mdp.flat_transition()) / np.sqrt(rho[:, None] * marg[None, :])


def scaled_left_subspace(mdp: TabularMDP, rho, d: int) -> np.ndarray:
    """Top-``d`` left singular subspace of the scaled kernel mapped back to phi coordinates.

    Returns an orthonormal (S*A, d) basis of ``diag(rho)^{-1/2} U_d``.
    """
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    U, _, _ = np.linalg.svd(scaled_kernel(mdp, rho), full_matrices=False)
    B = U[:, :d] / np.sqrt(rho)[:, None]
    Q, _ = np.linalg.qr(B)
    return Q


def principal_angles_deg(A, B) -> np.ndarray:
    """Principal angles in degrees between the column spaces of A and B."""
    Qa, _ = np.linalg.qr(np.asarray(A, dtype=np.float64))
    Qb, _ = np.linalg.qr(np.asarray(B, dtype=np.float64))
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.degrees(np.arccos(np.clip(s, -1.0, 1.0)))


# -- alternative decompositions ----------------------------------------------


class ReducibleChainError(ValueError):
    def __init__(self, components):
        self.components = components
        names = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in components)
        super().__init__(f"policy-induced chain is not irreducible; components: {names}")


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    n, labels = connected_components(P > 0, directed=True, connection="strong")
    if n > 1:
        comps = [sorted(np.flatnonzero(labels == k).tolist()) for k in range(n)]
        raise ReducibleChainError(comps)
    w, v = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    return pi / pi.sum()


def reference_reps(mdp: TabularMDP, policy: TabularPolicy, kind: str, d: int) -> np.ndarray:
    """State representations from alternative decompositions of ``P_pi``.

    - ``successor``: top-``d`` left singular vectors of ``(I - gamma P_pi)^-1``
    - ``laplacian``: top-``d`` eigenvectors of ``L P_pi + P_pi^T L`` with
      ``L = diag(stationary distribution of P_pi)``
    - ``krylov``: columns ``P_pi^i r_pi`` for ``i = 1..d``
    """
    Ppi = state_transition(mdp, policy)
    S = mdp.n_states
    if kind == "successor":
        M = np.linalg.inv(np.eye(S) - mdp.gamma * Ppi)
        U, _, _ = np.linalg.svd(M)
        return U[:, :d]
    if kind == "laplacian":
        lam = np.diag(stationary_distribution(Ppi))
        M = lam @ Ppi + Ppi.T @ lam
        w, v = np.linalg.eigh(M)
        order = np.argsort(w)[::-1]
        return v[:, order[:d]]
    if kind == "krylov":
        r_pi = (policy.probs * mdp.reward).sum(axis=1)
        cols, x = [], r_pi
        for _ in range(d):
            x = Ppi @ x
            cols.append(x)
        return np.stack(cols, axis=1)
    raise ValueError(f"unknown representation kind {kind!r}")


def occupancy_factorization_check(mdp: TabularMDP, policy: TabularPolicy,
                                  factorization: SpectralFactorization) -> float:
    """Residual of fitting d^pi(s,a) as <eta, mu(s) pi(a|s)> by least squares."""
    S, A = mdp.n_states, mdp.n_actions
    d_pi = occupancy_measure(mdp, policy).reshape(-1)
    mu_pi = (factorization.mu[:, None, :] * policy.probs[:, :, None]).reshape(S * A, -1)
    eta, *_ = np.linalg.lstsq(mu_pi, d_pi, rcond=None)
    return float(np.linalg.norm(mu_pi @ eta - d_pi))


def project_reward_onto_span(mdp: TabularMDP, factorization: SpectralFactorization) -> np.ndarray:
    """Reward table projected onto span(phi); makes the reward linear in phi."""
    r = mdp.reward.reshape(-1)
    B = factorization.left_vectors()
    return (B @ (B.T @ r)).reshape(mdp.n_states, mdp.n_actions)
