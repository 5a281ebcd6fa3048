import math

import pytest

from zmdp.envs import chain_env, coin_env, fork_env, tree_env
from zmdp.mdp import MdpSpec, Transition, validate

BETA, MU = 1.0, -1.2

# filled by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def fan_spec(d: int) -> MdpSpec:
    """One state with ``d`` actions, all into a zero-reward terminal."""
    return MdpSpec(
        states=("s", "t"),
        transitions=tuple(Transition("s", f"a{i}", "t") for i in range(d)),
        terminals={"t": 0.0},
    )


@pytest.fixture
def tree():
    return validate(tree_env())


@pytest.fixture
def coin():
    return validate(coin_env())


@pytest.fixture
def fork():
    return validate(fork_env())


@pytest.fixture
def chain2():
    return validate(chain_env(2, -1.0, 0.0))


def tree_z():
    """Hand closed forms for the tree at (BETA, MU)."""
    b, m = BETA, MU
    return {
        "S1": 2 * math.exp(b + m),
        "S2": math.exp(b + m),
        "S3": math.exp(m),
        "S0": 3 * math.exp(b + 2 * m) + math.exp(2 * m),
    }
