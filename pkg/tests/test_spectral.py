import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specrl.mdp import TabularMDP, TabularPolicy, policy_evaluation_q, random_mdp, random_policy
from specrl.nn import load_params, save_params
from specrl.spectral import (
    ReducibleChainError,
    SpectralFactorization,
    density_ratio,
    exact_factorization,
    fit_q_weights,
    next_state_marginal,
    occupancy_factorization_check,
    principal_angles_deg,
    project_reward_onto_span,
    scaled_left_subspace,
    scaled_svd_objective,
    stationary_distribution,
    reference_reps,
    tail_energy,
)


def identity_mdp():
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    return TabularMDP(P, np.zeros((2, 1)), 0.5, np.array([0.5, 0.5]))


class TestExactFactorization:
    def test_identity(self):
        fac = exact_factorization(identity_mdp())
        np.testing.assert_allclose(fac.singular_values, [1.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(fac.reconstruct(), np.eye(2), atol=1e-14)

    def test_uniform_is_rank_one(self):
        P = np.full((3, 2, 3), 1.0 / 3)
        fac = exact_factorization(TabularMDP(P, np.zeros((3, 2)), 0.9, np.full(3, 1 / 3)))
        assert fac.rank == 1
        np.testing.assert_allclose(fac.phi, np.broadcast_to(fac.phi[0], fac.phi.shape), atol=1e-14)

    def test_random_full_rank(self):
        mdp = random_mdp(np.random.default_rng(0), 4, 2, gamma=0.9)
        fac = exact_factorization(mdp, d=4)
        assert np.max(np.abs(fac.reconstruct() - mdp.flat_transition())) < 1e-10

    def test_invalid_rank(self):
        mdp = random_mdp(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError):
            exact_factorization(mdp, d=0)
        with pytest.raises(ValueError):
            exact_factorization(mdp, d=4)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), S=st.integers(2, 6), A=st.integers(1, 4), data=st.data())
    def test_truncation_error_is_tail_energy(self, seed, S, A, data):
        mdp = random_mdp(np.random.default_rng(seed), S, A)
        d = data.draw(st.integers(1, S))
        fac = exact_factorization(mdp, d=d)
        err = np.linalg.norm(fac.reconstruct() - mdp.flat_transition())
        assert abs(err - tail_energy(mdp, d)) < 1e-10
        assert np.all(np.diff(fac.singular_values) <= 1e-12)
        assert np.all(fac.singular_values >= 0)

    def test_checkpoint_round_trip(self, tmp_path):
        fac = exact_factorization(random_mdp(np.random.default_rng(1), 3, 2))
        save_params(tmp_path / "f.bin", fac.to_params())
        back = SpectralFactorization.from_arrays(load_params(tmp_path / "f.bin"))
        assert np.array_equal(back.phi, fac.phi) and np.array_equal(back.mu, fac.mu)


class TestQWeights:
    def test_linear_q_fifty_problems(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(50):
            S, A = rng.integers(1, 6, size=2)
            mdp = random_mdp(rng, S, A, gamma=float(rng.uniform(0.0, 0.99)))
            fac = exact_factorization(mdp)
            # make the reward linear in phi so that Q is too
            mdp = TabularMDP(mdp.transition, project_reward_onto_span(mdp, fac), mdp.gamma, mdp.init_dist)
            q = policy_evaluation_q(mdp, random_policy(rng, S, A))
            worst = max(worst, fit_q_weights(fac, q).residual)
        assert worst < 1e-8

    def test_zero_discount_recovers_reward_weights(self):
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 4, 2, gamma=0.0)
        fac = exact_factorization(mdp)
        theta = rng.normal(size=fac.rank)
        r = (fac.phi @ theta).reshape(4, 2)
        mdp = TabularMDP(mdp.transition, r, 0.0, mdp.init_dist)
        q = policy_evaluation_q(mdp, TabularPolicy.uniform(4, 2))
        np.testing.assert_allclose(fit_q_weights(fac, q).eta, theta, atol=1e-10)

    def test_truncated_reports_residual(self):
        rng = np.random.default_rng(4)
        mdp = random_mdp(rng, 4, 2, gamma=0.0)
        full = exact_factorization(mdp, d=4)
        trunc = exact_factorization(mdp, d=2)
        # reward along a discarded left singular vector is invisible to the truncated phi
        r = full.left_vectors()[:, 3].reshape(4, 2)
        mdp = TabularMDP(mdp.transition, r, 0.0, mdp.init_dist)
        q = policy_evaluation_q(mdp, TabularPolicy.uniform(4, 2))
        res = fit_q_weights(trunc, q).residual
        assert res == pytest.approx(np.linalg.norm(r), rel=1e-8)
        assert res > 0.5


class TestScaledSvd:
    def setup_method(self):
        self.mdp = random_mdp(np.random.default_rng(5), 3, 2)
        self.rho = np.full(6, 1 / 6)

    def test_zero_factors(self):
        assert scaled_svd_objective(self.mdp, self.rho, np.zeros((6, 2)), np.ones((3, 2))) == 0.0

    def test_density_ratio_is_maximum(self):
        ratio = density_ratio(self.mdp, self.rho)
        marg = next_state_marginal(self.mdp, self.rho)
        # phi = ratio rows, nu = identity realizes phi . nu = ratio
        best = scaled_svd_objective(self.mdp, self.rho, ratio, np.eye(3))
        expected = np.sum(ratio**2 * self.rho[:, None] * marg[None, :])
        assert best == pytest.approx(expected, rel=1e-12)
        rng = np.random.default_rng(0)
        for _ in range(20):
            other = scaled_svd_objective(self.mdp, self.rho, ratio + 0.1 * rng.normal(size=ratio.shape), np.eye(3))
            assert other < best

    def test_scalar_case(self):
        mdp = TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.5, np.ones(1))
        xs = np.linspace(-1, 3, 401)
        vals = [scaled_svd_objective(mdp, [1.0], [[x]], [[1.0]]) for x in xs]
        np.testing.assert_allclose(vals, 2 * xs - xs**2, atol=1e-14)
        assert xs[int(np.argmax(vals))] == pytest.approx(1.0)

    def test_rejects_zero_rho(self):
        with pytest.raises(ValueError):
            scaled_svd_objective(self.mdp, np.array([1, 0, 0, 0, 0, 0.0]), np.ones((6, 1)), np.ones((3, 1)))

    def test_rejects_unreachable_state(self):
        P = np.zeros((2, 1, 2))
        P[:, 0, 0] = 1.0
        mdp = TabularMDP(P, np.zeros((2, 1)), 0.5, np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            scaled_svd_objective(mdp, [0.5, 0.5], np.ones((2, 1)), np.ones((2, 1)))

    def test_left_subspace_spans_transition_rows(self):
        # at full rank the scaled-kernel subspace equals span of P's column space
        mdp = random_mdp(np.random.default_rng(6), 3, 2)
        rho = np.random.default_rng(7).dirichlet(np.ones(6))
        B = scaled_left_subspace(mdp, rho, 3)
        assert np.max(principal_angles_deg(B, mdp.flat_transition())) < 1e-5


class TestPrincipalAngles:
    def test_same_space(self):
        A = np.random.default_rng(0).normal(size=(5, 2))
        assert np.max(principal_angles_deg(A, A @ np.array([[2.0, 1.0], [0.0, 3.0]]))) < 1e-5

    def test_orthogonal(self):
        np.testing.assert_allclose(principal_angles_deg(np.eye(3)[:, :1], np.eye(3)[:, 1:2]), [90.0])

    def test_known_angle(self):
        a = np.array([[1.0], [0.0]])
        b = np.array([[np.cos(0.3)], [np.sin(0.3)]])
        assert principal_angles_deg(a, b)[0] == pytest.approx(np.degrees(0.3), abs=1e-9)


class TestReferenceReps:
    def test_successor_identity(self):
        reps = reference_reps(identity_mdp(), TabularPolicy.uniform(2, 1), "successor", 2)
        np.testing.assert_allclose(np.abs(reps), np.eye(2), atol=1e-14)

    def test_krylov_single_column(self):
        rng = np.random.default_rng(1)
        mdp = random_mdp(rng, 3, 2)
        pi = random_policy(rng, 3, 2)
        Ppi = np.einsum("sa,sat->st", pi.probs, mdp.transition)
        r_pi = (pi.probs * mdp.reward).sum(1)
        np.testing.assert_allclose(reference_reps(mdp, pi, "krylov", 1)[:, 0], Ppi @ r_pi, atol=1e-14)

    def test_successor_matches_direct(self):
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng, 3, 2, gamma=0.8)
        pi = random_policy(rng, 3, 2)
        Ppi = np.einsum("sa,sat->st", pi.probs, mdp.transition)
        U, _, _ = np.linalg.svd(np.linalg.solve(np.eye(3) - 0.8 * Ppi, np.eye(3)))
        got = reference_reps(mdp, pi, "successor", 3)
        # compare up to column sign
        np.testing.assert_allclose(np.abs(got.T @ U), np.eye(3), atol=1e-9)

    def test_laplacian_stationary(self):
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 4, 2)
        pi = random_policy(rng, 4, 2)
        Ppi = np.einsum("sa,sat->st", pi.probs, mdp.transition)
        mu = stationary_distribution(Ppi)
        np.testing.assert_allclose(mu @ Ppi, mu, atol=1e-12)
        vecs = reference_reps(mdp, pi, "laplacian", 2)
        M = np.diag(mu) @ Ppi + Ppi.T @ np.diag(mu)
        w = np.linalg.eigvalsh(M)[::-1][:2]
        np.testing.assert_allclose(M @ vecs, vecs * w, atol=1e-10)

    def test_laplacian_reducible_chain(self):
        with pytest.raises(ReducibleChainError, match=r"\{0\}; \{1\}"):
            reference_reps(identity_mdp(), TabularPolicy.uniform(2, 1), "laplacian", 1)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            reference_reps(identity_mdp(), TabularPolicy.uniform(2, 1), "fourier", 1)


class TestOccupancyFactorization:
    def test_single_state(self):
        mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9, np.ones(1))
        fac = exact_factorization(mdp)
        assert occupancy_factorization_check(mdp, TabularPolicy.uniform(1, 1), fac) < 1e-15

    def test_full_rank_random(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            S, A = rng.integers(1, 6, size=2)
            mdp = random_mdp(rng, S, A, gamma=0.9)
            fac = exact_factorization(mdp)
            assert occupancy_factorization_check(mdp, random_policy(rng, S, A), fac) < 1e-8

    def test_truncated_reports_residual(self):
        rng = np.random.default_rng(9)
        mdp = random_mdp(rng, 5, 2, gamma=0.9)
        res = occupancy_factorization_check(mdp, random_policy(rng, 5, 2), exact_factorization(mdp, d=1))
        assert res >= 0.0
