import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zmdp.envs import random_env, tree_env
from zmdp.errors import (
    DanglingState,
    DeadEnd,
    MuTooLarge,
    NotDeterministic,
    ProbSumViolation,
    TerminalWithActions,
    ValidationError,
)
from zmdp.mdp import Hyperparams, MdpSpec, Transition, default_mu, validate

from conftest import fan_spec


def single(reward=0.0):
    return MdpSpec(states=("s", "t"), transitions=(Transition("s", "go", "t", 1.0, reward),), terminals={"t": 0.0})


class TestValidate:
    def test_tree(self):
        m = validate(tree_env())
        assert (m.d, m.K, m.reward_shift, m.is_deterministic) == (3, 1.0, 0.0, True)

    def test_single_transition(self):
        m = validate(single())
        assert (m.d, m.K, m.reward_shift) == (1, 0.0, 0.0)

    def test_positive_reward_is_shifted(self):
        m = validate(single(2.0))
        assert m.reward_shift == 2.0
        assert m.spec.transitions[0].reward == 0.0
        assert m.original_reward(0.0) == 2.0

    def test_terminal_rewards_not_shifted(self):
        spec = MdpSpec(("s", "t"), (Transition("s", "go", "t", 1.0, 3.0),), {"t": 5.0})
        m = validate(spec)
        assert m.spec.terminals == {"t": 5.0}
        assert m.K == 5.0

    def test_dangling(self):
        spec = MdpSpec(("s", "t"), (Transition("s", "go", "u"),), {"t": 0.0})
        with pytest.raises(DanglingState):
            validate(spec)
        with pytest.raises(DanglingState):
            validate(MdpSpec(("s",), (), {"t": 0.0}))

    def test_prob_sum(self):
        spec = MdpSpec(("s", "t"), (Transition("s", "go", "t", 0.9),), {"t": 0.0})
        with pytest.raises(ProbSumViolation):
            validate(spec)

    def test_prob_sum_tolerance(self):
        spec = MdpSpec(
            ("s", "t", "u"),
            (Transition("s", "go", "t", 0.3), Transition("s", "go", "u", 0.7 + 5e-10)),
            {"t": 0.0, "u": 0.0},
        )
        assert not validate(spec).is_deterministic

    def test_dead_end(self):
        spec = MdpSpec(("s", "x", "t"), (Transition("s", "go", "t"),), {"t": 0.0})
        with pytest.raises(DeadEnd):
            validate(spec)

    def test_terminal_with_actions(self):
        spec = MdpSpec(("s", "t"), (Transition("s", "go", "t"), Transition("t", "go", "s")), {"t": 0.0})
        with pytest.raises(TerminalWithActions):
            validate(spec)

    def test_bad_prob(self):
        spec = MdpSpec(("s", "t"), (Transition("s", "go", "t", 1.5),), {"t": 0.0})
        with pytest.raises(ValidationError):
            validate(spec)

    def test_duplicate_states(self):
        with pytest.raises(ValidationError):
            validate(MdpSpec(("s", "s", "t"), (Transition("s", "go", "t"),), {"t": 0.0}))

    def test_zero_prob_outcome_keeps_determinism(self):
        spec = MdpSpec(
            ("s", "t", "u"),
            (Transition("s", "go", "t", 1.0), Transition("s", "go", "u", 0.0)),
            {"t": 0.0, "u": 0.0},
        )
        m = validate(spec)
        assert m.is_deterministic
        assert m.step("s", "go") == ("t", 0.0)

    def test_step_requires_determinism(self, coin):
        with pytest.raises(NotDeterministic):
            coin.step("s0", "a")

    def test_d_counts_actions(self):
        for d in (1, 2, 5):
            assert validate(fan_spec(d)).d == d

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), offset=st.floats(0.0, 5.0), stochastic=st.booleans())
    def test_round_trip_only_shifts_rewards(self, seed, offset, stochastic):
        raw = random_env(seed, stochastic=stochastic, acyclic=False)
        lifted = MdpSpec(
            raw.states,
            tuple(Transition(t.source, t.action, t.target, t.prob, t.reward + offset) for t in raw.transitions),
            raw.terminals,
        )
        m = validate(lifted)
        assert all(t.reward <= 0 for t in m.spec.transitions)
        assert m.reward_shift == max(0.0, max(t.reward for t in lifted.transitions))
        assert m.spec.states == lifted.states and m.spec.terminals == lifted.terminals
        for a, b in zip(lifted.transitions, m.spec.transitions):
            assert (a.source, a.action, a.target, a.prob) == (b.source, b.action, b.target, b.prob)
            assert b.reward == a.reward - m.reward_shift


class TestDefaultMu:
    def test_examples(self):
        assert default_mu(validate(fan_spec(3)), 0.1014) == pytest.approx(-1.2, abs=1e-4)
        assert default_mu(validate(fan_spec(1)), 0.5) == -0.5
        assert default_mu(validate(fan_spec(2)), 0.01) == pytest.approx(-0.70315, abs=1e-5)

    @given(d=st.integers(1, 20), margin=st.floats(1e-6, 10.0))
    def test_identity(self, d, margin):
        m = validate(fan_spec(d))
        assert default_mu(m, margin) + math.log(d) == pytest.approx(-margin, abs=1e-12)
        m.check_mu(default_mu(m, margin))

    def test_rejects_non_positive_margin(self, tree):
        with pytest.raises(ValidationError):
            default_mu(tree, 0.0)


class TestHyperparams:
    def test_check_mu(self, tree):
        Hyperparams(mu=-1.2).check(tree)
        with pytest.raises(MuTooLarge):
            Hyperparams(mu=-math.log(3)).check(tree)

    @pytest.mark.parametrize(
        "kw", [{"beta": -1}, {"tol": 0}, {"max_iter": 0}, {"fd_step": -1}, {"alpha0": 0}, {"alpha0": 1.5},
               {"alpha_decay": 0}, {"seed": -1}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            Hyperparams(**kw)
