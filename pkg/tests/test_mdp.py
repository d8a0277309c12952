import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specrl.mdp import (
    InvalidMDP,
    TabularMDP,
    TabularPolicy,
    bellman_residual,
    dumps_mdp,
    load_mdp,
    loads_mdp,
    occupancy_measure,
    occupancy_residual,
    policy_evaluation_q,
    random_mdp,
    random_policy,
    save_mdp,
    state_values,
    value_iteration,
)


def chain_mdp(gamma):
    # s0 -> s1 deterministically, s1 absorbing; reward 1 in s0 only
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMDP(P, np.array([[1.0], [0.0]]), gamma, np.array([1.0, 0.0]))


class TestValidation:
    def test_rejects_nonstochastic_rows(self):
        P = np.full((2, 1, 2), 0.6)
        with pytest.raises(InvalidMDP):
            TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([0.5, 0.5]))

    def test_rejects_negative_entries(self):
        P = np.array([[[1.5, -0.5]], [[0.0, 1.0]]])
        with pytest.raises(InvalidMDP):
            TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([0.5, 0.5]))

    def test_rejects_gamma_one(self):
        with pytest.raises(InvalidMDP):
            TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0, np.ones(1))

    def test_rejects_bad_init(self):
        with pytest.raises(InvalidMDP):
            TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.5, np.array([0.7]))

    def test_policy_rows(self):
        with pytest.raises(ValueError):
            TabularPolicy(np.array([[0.5, 0.4]]))

    def test_tol_must_be_positive(self):
        mdp = chain_mdp(0.9)
        with pytest.raises(ValueError):
            policy_evaluation_q(mdp, TabularPolicy.uniform(2, 1), tol=0.0)


class TestPolicyEvaluation:
    def test_single_state_geometric_series(self):
        mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.5, np.ones(1))
        q = policy_evaluation_q(mdp, TabularPolicy.uniform(1, 1))
        assert q[0, 0] == pytest.approx(2.0, abs=1e-12)

    def test_zero_discount_returns_reward(self):
        rng = np.random.default_rng(0)
        mdp = random_mdp(rng, 4, 3, gamma=0.0)
        q = policy_evaluation_q(mdp, random_policy(rng, 4, 3))
        np.testing.assert_allclose(q, mdp.reward, atol=1e-14)

    def test_two_state_chain(self):
        q = policy_evaluation_q(chain_mdp(0.9), TabularPolicy.uniform(2, 1))
        np.testing.assert_allclose(q, [[1.0], [0.0]], atol=1e-12)

    def test_iterative_path_matches_direct(self, monkeypatch):
        import specrl.mdp as m

        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 5, 2, gamma=0.8)
        pi = random_policy(rng, 5, 2)
        direct = policy_evaluation_q(mdp, pi)
        monkeypatch.setattr(m, "DIRECT_SOLVE_MAX_STATES", 0)
        iterative = m.policy_evaluation_q(mdp, pi, tol=1e-11)
        assert np.max(np.abs(direct - iterative)) < 1e-10

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), S=st.integers(1, 6), A=st.integers(1, 6),
           gamma=st.floats(0.0, 0.98))
    def test_bellman_substitution(self, seed, S, A, gamma):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, S, A, gamma=gamma)
        pi = random_policy(rng, S, A)
        q = policy_evaluation_q(mdp, pi)
        assert bellman_residual(mdp, pi, q) < 1e-10


class TestOccupancy:
    def test_single_pair(self):
        mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.7, np.ones(1))
        assert occupancy_measure(mdp, TabularPolicy.uniform(1, 1))[0, 0] == pytest.approx(1.0, abs=1e-14)

    def test_two_state_chain(self):
        d = occupancy_measure(chain_mdp(0.5), TabularPolicy.uniform(2, 1))
        np.testing.assert_allclose(d.ravel(), [0.5, 0.5], atol=1e-14)

    def test_hundred_random_problems(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            S, A = rng.integers(1, 7, size=2)
            mdp = random_mdp(rng, S, A, gamma=float(rng.uniform(0, 0.99)))
            pi = random_policy(rng, S, A)
            d = occupancy_measure(mdp, pi)
            assert np.all(d >= -1e-14)
            assert abs(d.sum() - 1.0) < 1e-10
            assert occupancy_residual(mdp, pi, d) < 1e-10

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), S=st.integers(1, 6), A=st.integers(1, 6),
           gamma=st.floats(0.0, 0.98))
    def test_reward_identity(self, seed, S, A, gamma):
        # sum d(s,a) r(s,a) = (1 - gamma) sum d0(s) V(s)
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, S, A, gamma=gamma)
        pi = random_policy(rng, S, A)
        lhs = np.sum(occupancy_measure(mdp, pi) * mdp.reward)
        rhs = (1.0 - gamma) * mdp.init_dist @ state_values(mdp, pi)
        assert abs(lhs - rhs) < 1e-8


class TestValueIteration:
    def test_matches_policy_evaluation_of_greedy(self):
        rng = np.random.default_rng(5)
        mdp = random_mdp(rng, 6, 3, gamma=0.9)
        q, pi = value_iteration(mdp, tol=1e-12)
        np.testing.assert_allclose(q, policy_evaluation_q(mdp, pi), atol=1e-9)

    def test_reward_override(self):
        mdp = chain_mdp(0.9)
        q, _ = value_iteration(mdp, reward=np.zeros((2, 1)))
        np.testing.assert_array_equal(q, 0.0)


class TestSerialization:
    def test_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng, 4, 3, gamma=0.93)
        path = tmp_path / "m.txt"
        save_mdp(path, mdp)
        back = load_mdp(path)
        assert np.array_equal(back.transition, mdp.transition)
        assert np.array_equal(back.reward, mdp.reward)
        assert np.array_equal(back.init_dist, mdp.init_dist)
        assert back.gamma == mdp.gamma
        assert dumps_mdp(back) == dumps_mdp(mdp)

    def test_header_required(self):
        with pytest.raises(InvalidMDP):
            loads_mdp("1 1\n0.5\n1.0\n1.0\n0.0\n")

    def test_row_count_checked(self):
        text = dumps_mdp(chain_mdp(0.5)).splitlines()
        with pytest.raises(InvalidMDP):
            loads_mdp("\n".join(text[:-1]))
