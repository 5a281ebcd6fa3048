import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zmdp.envs import chain_env, coin_env, fork_env, random_env, random_layered_env, tree_env
from zmdp.errors import NonEpisodic, UnknownStateAction, ValidationError
from zmdp.learner import (
    EpsilonGreedy,
    LearnerConfig,
    LogZsaTable,
    Proportional,
    Transition,
    logsumexp,
    plan_zsa,
    q_diagnostic,
    select_action,
    sup_error,
    train,
    update_zsa,
    zsa_from_z,
)
from zmdp.mdp import MdpSpec, default_mu, validate
from zmdp.mdp import Transition as Edge
from zmdp.planner import solve_power
from zmdp.stochastic import solve_averaged, solve_variational

from conftest import BETA, MU


# s -go-> m, and m has two actions into t
TWO_STEP = validate(
    MdpSpec(("s", "m", "t"), (Edge("s", "go", "m"), Edge("m", "x", "t"), Edge("m", "y", "t")), {"t": 0.0})
)


@pytest.fixture
def two_step():
    return TWO_STEP


class TestUpdate:
    def test_hand_example(self, two_step):
        table = LogZsaTable(two_step, beta=1.0, mu=-2.0)
        update_zsa(table, Transition("s", "go", 0.0, "m", False), 0.5)
        assert table[("s", "go")] == pytest.approx(0.5 * (-2 + math.log(2)), abs=1e-15)
        assert table[("s", "go")] == pytest.approx(-0.653426, abs=1e-6)
        assert math.exp(table[("s", "go")]) == pytest.approx(0.520260, abs=1e-6)

    def test_alpha_one_replaces(self, two_step):
        table = LogZsaTable(two_step, 1.0, -2.0, [3.0, 0.4, -0.1])
        update_zsa(table, Transition("s", "go", -0.5, "m", False), 1.0)
        assert table[("s", "go")] == -0.5 - 2.0 + logsumexp([0.4, -0.1])

    def test_alpha_zero_keeps(self, two_step):
        table = LogZsaTable(two_step, 1.0, -2.0, [3.0, 0.4, -0.1])
        update_zsa(table, Transition("s", "go", -0.5, "m", False), 0.0)
        assert table.values.tolist() == [3.0, 0.4, -0.1]

    def test_terminal_uses_boundary(self, tree):
        table = LogZsaTable(tree, 2.0, MU)
        update_zsa(table, Transition("S2", "1", 0.0, "S6", True), 1.0)
        assert table[("S2", "1")] == 2.0 * 1.0 + MU

    def test_unknown_pair(self, tree):
        with pytest.raises(UnknownStateAction):
            update_zsa(LogZsaTable(tree, BETA, MU), Transition("S0", "9", 0.0, "S1", False), 0.5)
        with pytest.raises(UnknownStateAction):
            LogZsaTable(tree, BETA, MU)[("S4", "1")]

    def test_done_flag_checked(self, tree):
        with pytest.raises(ValidationError):
            update_zsa(LogZsaTable(tree, BETA, MU), Transition("S0", "1", 0.0, "S1", True), 0.5)

    @settings(max_examples=200)
    @given(
        old=st.floats(-50, 50),
        nxt=st.lists(st.floats(-50, 50), min_size=2, max_size=2),
        r=st.floats(-5, 0),
        alpha=st.floats(0, 1),
        beta=st.floats(0, 20),
        mu=st.floats(-5, -0.7),
    )
    def test_log_linear_interpolation(self, old, nxt, r, alpha, beta, mu):
        table = LogZsaTable(TWO_STEP, beta, mu, [old, *nxt])
        update_zsa(table, Transition("s", "go", r, "m", False), alpha)
        m = max(nxt)
        lse = m + math.log(math.fsum([math.exp(x - m) for x in nxt]))
        assert table[("s", "go")] == (1.0 - alpha) * old + alpha * (beta * r + mu + lse)

    @pytest.mark.parametrize("spec", [tree_env(), chain_env(3, -0.5, 1.0), random_layered_env(3), random_env(8)])
    def test_planned_table_is_stationary(self, spec):
        m = validate(spec)
        mu = default_mu(m)
        planned = plan_zsa(m, 1.3, mu)
        for alpha in (0.1, 0.5, 1.0):
            for s, a in m.arms:
                table = planned.copy()
                s2, r = m.step(s, a)
                update_zsa(table, Transition(s, a, r, s2, m.is_terminal(s2)), alpha)
                assert table[(s, a)] == pytest.approx(planned[(s, a)], abs=1e-12)


class TestPlanZsa:
    def test_tree(self, tree):
        t = plan_zsa(tree, BETA, MU)
        assert math.exp(t[("S0", "1")]) == pytest.approx(math.exp(-1.2) * 2 * math.exp(-0.2), rel=1e-12)
        assert math.exp(t[("S0", "1")]) == pytest.approx(0.493194, abs=1e-6)
        assert math.exp(t.state_log_z("S0")) == pytest.approx(0.830509, abs=1e-6)
        assert t[("S2", "1")] == pytest.approx(BETA + MU, abs=1e-15)

    @pytest.mark.parametrize(
        "spec", [tree_env(), chain_env(3, -0.5, 1.0), random_layered_env(0), random_env(2), random_env(6, acyclic=False)]
    )
    def test_consistent_with_planner(self, spec):
        m = validate(spec)
        mu = default_mu(m)
        for beta in (0.0, 1.0, 10.0):
            zsa, z = plan_zsa(m, beta, mu), solve_power(m, beta, mu)
            for s in m.states:
                assert math.exp(zsa.state_log_z(s)) == pytest.approx(z.z(s), rel=1e-8)

    def test_zsa_from_z_matches_plan(self, tree):
        a = plan_zsa(tree, BETA, MU).values
        b = zsa_from_z(tree, solve_power(tree, BETA, MU)).values
        assert np.max(np.abs(a - b)) <= 1e-10

    @pytest.mark.parametrize("env", [coin_env, fork_env])
    @pytest.mark.parametrize("solver", [solve_averaged, solve_variational])
    def test_zsa_from_z_stochastic_consistency(self, env, solver):
        m = validate(env())
        table = solver(m, BETA, MU)
        zsa = zsa_from_z(m, table)
        for s in m.states:
            if not m.is_terminal(s):
                assert zsa.state_log_z(s) == pytest.approx(table[s], abs=1e-10)


class TestSelectAction:
    def test_proportional(self, tree):
        table = LogZsaTable(tree, BETA, MU)
        for a, v in zip("123", (math.log(2), 0.0, 0.0)):
            table[("S0", a)] = v
        rng = np.random.default_rng(0)
        n = 40_000
        counts = {a: 0 for a in "123"}
        for _ in range(n):
            counts[select_action(table, "S0", Proportional(), rng)] += 1
        assert [counts[a] / n for a in "123"] == pytest.approx([0.5, 0.25, 0.25], abs=0.01)
        assert table.policy().row("S0") == pytest.approx({"1": 0.5, "2": 0.25, "3": 0.25})

    def test_epsilon_one_uniform(self, tree):
        table = LogZsaTable(tree, BETA, MU, [5.0, 0, 0, 0, 0, 0, 0])
        rng = np.random.default_rng(1)
        counts = {a: 0 for a in "123"}
        for _ in range(30_000):
            counts[select_action(table, "S0", EpsilonGreedy(1.0), rng)] += 1
        assert [c / 30_000 for c in counts.values()] == pytest.approx([1 / 3] * 3, abs=0.01)

    def test_epsilon_zero_tie_lowest(self, tree):
        table = LogZsaTable(tree, BETA, MU)
        for a, v in zip("123", (0.2, 0.2, -1.0)):
            table[("S0", a)] = v
        rng = np.random.default_rng(2)
        assert {select_action(table, "S0", EpsilonGreedy(0.0), rng) for _ in range(50)} == {"1"}

    def test_epsilon_range(self):
        with pytest.raises(ValidationError):
            EpsilonGreedy(1.5)


class TestTrain:
    def test_zero_episodes(self, tree):
        table, curve = train(tree, LearnerConfig(BETA, MU, episodes=0))
        assert table.values.tolist() == [0.0] * len(tree.arms) and curve.rows == []

    def test_seeded(self, tree):
        cfg = LearnerConfig(BETA, MU, episodes=300, seed=4, eval_every=50)
        a, ca = train(tree, cfg)
        b, cb = train(tree, cfg)
        assert a.values.tolist() == b.values.tolist() and ca.rows == cb.rows

    def test_curve(self, tree):
        ref = plan_zsa(tree, BETA, MU)
        _, curve = train(tree, LearnerConfig(BETA, MU, episodes=250, eval_every=100, reference=ref))
        assert [r.episode for r in curve.rows] == [100, 200, 250]
        assert all(r.error >= 0 for r in curve.rows)

    def test_epsilon_schedule(self, tree):
        cfg = LearnerConfig(BETA, MU, episodes=100, explore="epsilon", eval_every=10)
        assert cfg.epsilon(0) == 1.0 and cfg.epsilon(50) == pytest.approx(0.05) and cfg.epsilon(99) == pytest.approx(0.05)
        _, curve = train(tree, cfg)
        eps = [r.epsilon for r in curve.rows]
        assert eps == sorted(eps, reverse=True)

    def test_alpha_schedule(self):
        cfg = LearnerConfig(BETA, MU, alpha0=0.5, alpha_decay=500)
        assert cfg.alpha(0) == 0.5 and cfg.alpha(500) == 0.25

    def test_non_episodic(self):
        spec = MdpSpec(("s", "t"), (Edge("s", "stay", "s"), Edge("s", "go", "t", 1.0, -100.0)), {"t": 0.0})
        m = validate(spec)
        with pytest.raises(NonEpisodic):
            train(m, LearnerConfig(BETA, -1.0, episodes=5, explore="epsilon", epsilon_start=0, epsilon_end=0, max_steps=50))

    def test_bad_config(self, tree):
        with pytest.raises(ValidationError):
            LearnerConfig(BETA, MU, alpha0=0.0)
        with pytest.raises(ValidationError):
            LearnerConfig(BETA, MU, explore="boltzmann")
        with pytest.raises(ValidationError):
            train(tree, LearnerConfig(BETA, MU, start_state="S4"))

    def test_converges_on_tree(self, tree):
        ref = plan_zsa(tree, BETA, MU)
        table, _ = train(tree, LearnerConfig(BETA, MU, episodes=5000, seed=1))
        assert sup_error(table, ref) <= 0.05

    def test_stochastic_tracks_variational(self, fork):
        # the log-space update averages sampled targets, so the variational table is the fixed point
        var = zsa_from_z(fork, solve_variational(fork, BETA, MU))
        avg = zsa_from_z(fork, solve_averaged(fork, BETA, MU))
        tables = [train(fork, LearnerConfig(BETA, MU, episodes=10_000, alpha_decay=50, seed=seed))[0] for seed in range(10)]
        assert np.median([sup_error(t, var) for t in tables]) <= 0.1
        mean_b = np.mean([t[("s0", "B")] for t in tables])
        assert mean_b == pytest.approx(var[("s0", "B")], abs=0.05)
        assert abs(mean_b - avg[("s0", "B")]) > 0.8


class TestQDiagnostic:
    def test_tree_large_beta(self, tree):
        q = q_diagnostic(tree, 50.0, MU, 1e-3)
        assert q[("S0", "3")] == pytest.approx(0.0, abs=1e-4)
        assert q[("S0", "1")] == pytest.approx(1.0, abs=1e-4)
        assert q[("S0", "2")] == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("beta", [0.0, 0.5, 4.0])
    def test_chain_one(self, beta):
        m = validate(chain_env(1, 0.0, 1.0))
        assert q_diagnostic(m, beta, -0.5)[("c1", "next")] == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_rewards(self, two_step):
        q = q_diagnostic(two_step, 0.0, -1.0)
        assert q[("m", "x")] == pytest.approx(q[("m", "y")], abs=1e-12)
