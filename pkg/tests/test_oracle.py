import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zmdp.envs import chain_env, random_env
from zmdp.errors import CapExplosion, Cyclic, MuTooLarge
from zmdp.mdp import MdpSpec, Transition, default_mu, validate
from zmdp.oracle import enumerate_z, enumerate_z_likelihood, iter_trajectories, optimal_path_stats

from conftest import BETA, MU, tree_z


class TestEnumerateZ:
    def test_tree_root(self, tree):
        res = enumerate_z(tree, "S0", BETA, MU, 2)
        assert res.partial_sum == pytest.approx(tree_z()["S0"], rel=1e-12)
        assert res.partial_sum == pytest.approx(0.830509, abs=1e-6)
        rho = math.exp(MU + math.log(3))
        assert res.tail_bound == pytest.approx(math.exp(BETA * 1.0) * rho**3 / (1 - rho), rel=1e-12)
        assert res.exhausted and res.n_trajectories == 4 and res.len_cap == 2

    def test_tree_s3(self, tree):
        res = enumerate_z(tree, "S3", BETA, MU, 5)
        assert res.partial_sum == pytest.approx(math.exp(-1.2), rel=1e-12)
        assert res.partial_sum == pytest.approx(0.301194, abs=1e-6)

    @pytest.mark.parametrize("beta", [0.0, 0.7, 3.0])
    def test_chain_one(self, beta):
        m = validate(chain_env(1, 0.0, 0.0))
        assert enumerate_z(m, "c1", beta, -0.3, 1).partial_sum == pytest.approx(math.exp(-0.3), rel=1e-14)

    def test_chain_three(self):
        m = validate(chain_env(3, 0.0, 1.0))
        res = enumerate_z(m, "c3", 2.0, -0.5, 3)
        assert res.partial_sum == pytest.approx(math.exp(2.0 - 1.5), rel=1e-14)

    def test_cut_by_cap(self, tree):
        res = enumerate_z(tree, "S0", BETA, MU, 1)
        assert res.partial_sum == 0.0 and not res.exhausted

    def test_terminal_start(self, tree):
        res = enumerate_z(tree, "S4", 2.0, MU, 3)
        assert res.partial_sum == pytest.approx(math.exp(2.0)) and res.exhausted

    def test_mu_too_large(self, tree):
        with pytest.raises(MuTooLarge):
            enumerate_z(tree, "S0", BETA, -math.log(3), 2)

    def test_node_budget(self):
        loops = (Transition("s", "a", "s"), Transition("s", "b", "s"), Transition("s", "c", "t"))
        m = validate(MdpSpec(("s", "t"), loops, {"t": 0.0}))
        with pytest.raises(CapExplosion):
            enumerate_z(m, "s", 1.0, default_mu(m), 40, node_budget=1000)

    def test_monotone_in_cap(self):
        m = validate(random_env(5, n_states=5, acyclic=False))
        mu = default_mu(m)
        results = [enumerate_z(m, "x0", 1.0, mu, cap) for cap in range(1, 9)]
        for a, b in zip(results, results[1:]):
            assert b.partial_sum >= a.partial_sum
            assert b.tail_bound <= a.tail_bound


class TestLikelihood:
    def test_coin(self, coin):
        res = enumerate_z_likelihood(coin, "s0", BETA, MU, 1)
        assert res.partial_sum == pytest.approx(0.5 * math.exp(BETA + MU) + 0.5 * math.exp(MU), rel=1e-12)
        assert res.partial_sum == pytest.approx(0.559962, abs=1e-6)

    def test_coin_beta_zero(self, coin):
        assert enumerate_z_likelihood(coin, "s0", 0.0, MU, 1).partial_sum == pytest.approx(math.exp(MU), rel=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), beta=st.floats(0.0, 5.0), cyclic=st.booleans())
    def test_equals_plain_on_deterministic(self, seed, beta, cyclic):
        m = validate(random_env(seed, n_states=6, acyclic=not cyclic))
        mu = default_mu(m)
        for s in m.states:
            a = enumerate_z(m, s, beta, mu, 6)
            b = enumerate_z_likelihood(m, s, beta, mu, 6)
            assert (a.partial_sum, a.tail_bound, a.exhausted) == (b.partial_sum, b.tail_bound, b.exhausted)


class TestTrajectories:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), stochastic=st.booleans())
    def test_invariants(self, seed, stochastic):
        m = validate(random_env(seed, stochastic=stochastic))
        for traj in iter_trajectories(m, m.states[0], 10):
            assert m.is_terminal(traj.terminal_state)
            assert not any(m.is_terminal(s) for s, _, _ in traj.steps)
            assert traj.log_likelihood <= 0.0
            if not stochastic:
                assert traj.log_likelihood == 0.0
            assert traj.energy == pytest.approx(-traj.total_reward)


class TestOptimalPathStats:
    def test_tree_root(self, tree):
        r, n = optimal_path_stats(tree, "S0", MU)
        assert r == 1.0
        assert n == pytest.approx(3 * math.exp(-2.4), rel=1e-12)
        assert n == pytest.approx(0.272154, abs=1e-6)

    def test_tree_s3(self, tree):
        assert optimal_path_stats(tree, "S3", MU) == pytest.approx((0.0, math.exp(-1.2)))

    def test_chain(self, chain2):
        r, n = optimal_path_stats(chain2, "c2", -0.5)
        assert r == -2.0
        assert n == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_cyclic(self):
        spec = MdpSpec(
            ("s", "t"), (Transition("s", "stay", "s", 1.0, 0.0), Transition("s", "go", "t", 1.0, -1.0)), {"t": 0.0}
        )
        with pytest.raises(Cyclic):
            optimal_path_stats(validate(spec), "s", -1.0)
