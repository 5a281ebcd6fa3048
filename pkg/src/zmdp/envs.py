"""Built-in environments and the JSON MDP file format.

The MDP file is a JSON object::

    {
      "states": ["s0", "t"],
      "terminals": {"t": 0.0},
      "transitions": [{"from": "s0", "action": "a", "to": "t", "prob": 1.0, "reward": 0.0}]
    }

``prob`` may be omitted and defaults to 1.0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import IoError, ParseError, ValidationError
from .mdp import MdpSpec, Transition


def tree_env() -> MdpSpec:
    """The 8-state decision tree: S0 -> {S1, S2, S3}, S1 -> {S4, S5}, S2 -> S6, S3 -> S7.

    All transition rewards are 0; terminal rewards are 1 for S4, S5, S6 and 0 for S7.
    """
    edges = [
        ("S0", "1", "S1"), ("S0", "2", "S2"), ("S0", "3", "S3"),
        ("S1", "1", "S4"), ("S1", "2", "S5"),
        ("S2", "1", "S6"),
        ("S3", "1", "S7"),
    ]
    return MdpSpec(
        states=tuple(f"S{i}" for i in range(8)),
        transitions=tuple(Transition(s, a, t, 1.0, 0.0) for s, a, t in edges),
        terminals={"S4": 1.0, "S5": 1.0, "S6": 1.0, "S7": 0.0},
    )


def chain_env(n: int, step_reward: float = 0.0, terminal_reward: float = 0.0) -> MdpSpec:
    """Linear chain ``c_n -> ... -> c_1 -> t`` with a single action ``"next"`` per state."""
    if n < 1:
        raise ValidationError("chain length must be >= 1")
    names = [f"c{i}" for i in range(n, 0, -1)] + ["t"]
    transitions = tuple(
        Transition(names[i], "next", names[i + 1], 1.0, float(step_reward)) for i in range(n)
    )
    return MdpSpec(states=tuple(names), transitions=transitions, terminals={"t": float(terminal_reward)})


def coin_env() -> MdpSpec:
    """One state ``s0`` whose single action lands on ``t1`` (R=1) or ``t2`` (R=0) with equal odds."""
    return MdpSpec(
        states=("s0", "t1", "t2"),
        transitions=(
            Transition("s0", "a", "t1", 0.5, 0.0),
            Transition("s0", "a", "t2", 0.5, 0.0),
        ),
        terminals={"t1": 1.0, "t2": 0.0},
    )


def fork_env() -> MdpSpec:
    """Two-action fork at ``s0``.

    ``A`` moves to ``t`` with reward -1. ``B`` has the same mean reward but
    gambles: reward 0 straight to ``t``, or reward -2 into ``s1`` which needs
    one more step to finish.
    """
    return MdpSpec(
        states=("s0", "s1", "t"),
        transitions=(
            Transition("s0", "A", "t", 1.0, -1.0),
            Transition("s0", "B", "t", 0.5, 0.0),
            Transition("s0", "B", "s1", 0.5, -2.0),
            Transition("s1", "1", "t", 1.0, 0.0),
        ),
        terminals={"t": 0.0},
    )


def random_env(
    seed: int,
    n_states: int = 8,
    max_actions: int = 3,
    stochastic: bool = False,
    max_branch: int = 3,
    acyclic: bool = True,
    n_terminals: int | None = None,
    reward_low: float = -1.0,
    terminal_high: float = 1.0,
) -> MdpSpec:
    """Random finite MDP for property tests.

    States ``x0 .. x{n-1}``; the last ``n_terminals`` are terminal. With
    ``acyclic`` every transition goes to a higher index. Transition rewards
    are uniform on ``[reward_low, 0]`` and terminal rewards on ``[0, terminal_high]``.
    """
    rng = np.random.default_rng(seed)
    if n_states < 2:
        raise ValidationError("need at least 2 states")
    if n_terminals is None:
        n_terminals = int(rng.integers(1, max(1, n_states // 2) + 1))
    n_terminals = min(max(1, n_terminals), n_states - 1)
    names = [f"x{i}" for i in range(n_states)]
    first_terminal = n_states - n_terminals
    transitions = []
    for i in range(first_terminal):
        targets_pool = np.arange(i + 1, n_states) if acyclic else np.arange(n_states)
        for k in range(int(rng.integers(1, max_actions + 1))):
            if stochastic:
                m = int(rng.integers(1, min(max_branch, len(targets_pool)) + 1))
                targets = rng.choice(targets_pool, size=m, replace=False)
                probs = rng.dirichlet(np.ones(m))
                probs[-1] = 1.0 - probs[:-1].sum()
            else:
                targets = [int(rng.choice(targets_pool))]
                probs = [1.0]
            for j, p in zip(targets, probs):
                r = float(rng.uniform(reward_low, 0.0))
                transitions.append(Transition(names[i], f"a{k}", names[int(j)], float(p), r))
    terminals = {names[j]: float(rng.uniform(0.0, terminal_high)) for j in range(first_terminal, n_states)}
    return MdpSpec(states=tuple(names), transitions=tuple(transitions), terminals=terminals)


def random_layered_env(seed: int, layers: int = 3, width: int = 3, max_actions: int = 3, grid: float = 0.25) -> MdpSpec:
    """Random deterministic layered DAG; every trajectory from a layer has the same length.

    Rewards live on a grid of spacing ``grid``, so distinct returns differ by
    at least ``grid``. The last layer is terminal.
    """
    rng = np.random.default_rng(seed)
    names = [[f"L{k}_{j}" for j in range(width if k else 1)] for k in range(layers + 1)]
    transitions = []
    for k in range(layers):
        for s in names[k]:
            n_act = int(rng.integers(1, max_actions + 1))
            for a in range(n_act):
                t = names[k + 1][int(rng.integers(len(names[k + 1])))]
                r = -grid * int(rng.integers(0, int(round(1 / grid)) + 1))
                transitions.append(Transition(s, f"a{a}", t, 1.0, r))
    terminals = {s: grid * int(rng.integers(0, int(round(1 / grid)) + 1)) for s in names[-1]}
    states = tuple(s for layer in names for s in layer)
    return MdpSpec(states=states, transitions=tuple(transitions), terminals=terminals)


@dataclass(frozen=True)
class EnvCatalogEntry:
    name: str
    builder: Callable[..., MdpSpec]
    params: dict[str, Any]


CATALOG: dict[str, EnvCatalogEntry] = {
    e.name: e
    for e in (
        EnvCatalogEntry("tree", tree_env, {}),
        EnvCatalogEntry("chain", chain_env, {"n": 3, "step_reward": 0.0, "terminal_reward": 0.0}),
        EnvCatalogEntry("coin", coin_env, {}),
        EnvCatalogEntry("fork", fork_env, {}),
        EnvCatalogEntry(
            "random",
            random_env,
            {"seed": 0, "n_states": 8, "max_actions": 3, "stochastic": False, "max_branch": 3, "acyclic": True},
        ),
        EnvCatalogEntry("layered", random_layered_env, {"seed": 0, "layers": 3, "width": 3, "max_actions": 3}),
    )
}


def build_env(name: str, **params) -> MdpSpec:
    """Build a catalog environment, filling unspecified parameters with defaults."""
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ValidationError(f"unknown environment {name!r}; choose from {sorted(CATALOG)}") from None
    unknown = set(params) - set(entry.params)
    if unknown:
        raise ValidationError(f"environment {name!r} takes no parameter(s) {sorted(unknown)}")
    return entry.builder(**{**entry.params, **params})


def spec_to_dict(spec: MdpSpec) -> dict:
    return {
        "states": list(spec.states),
        "terminals": dict(spec.terminals),
        "transitions": [
            {"from": t.source, "action": t.action, "to": t.target, "prob": t.prob, "reward": t.reward}
            for t in spec.transitions
        ],
    }


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(f"{where}: non-finite value")
    return value


def spec_from_dict(doc: Any) -> MdpSpec:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("states", "terminals", "transitions"):
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")
    states = doc["states"]
    if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
        raise ParseError("'states' must be an array of strings")
    terminals = doc["terminals"]
    if not isinstance(terminals, dict):
        raise ParseError("'terminals' must be an object mapping state to reward")
    terminals = {k: _number(v, f"terminals[{k!r}]") for k, v in terminals.items()}
    raw = doc["transitions"]
    if not isinstance(raw, list):
        raise ParseError("'transitions' must be an array")
    transitions = []
    for i, item in enumerate(raw):
        where = f"transitions[{i}]"
        if not isinstance(item, dict):
            raise ParseError(f"{where}: expected an object")
        for key in ("from", "action", "to"):
            if not isinstance(item.get(key), str):
                raise ParseError(f"{where}: field {key!r} must be a string")
        prob = _number(item.get("prob", 1.0), f"{where}.prob")
        if not 0.0 <= prob <= 1.0:
            raise ParseError(f"{where}.prob: {prob} is outside [0, 1]")
        reward = _number(item.get("reward", 0.0), f"{where}.reward")
        transitions.append(Transition(item["from"], item["action"], item["to"], prob, reward))
    return MdpSpec(states=tuple(states), transitions=tuple(transitions), terminals=terminals)


def load_spec(path) -> MdpSpec:
    """Read an MDP file. Raises :class:`ParseError` or :class:`IoError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(doc)


def save_spec(spec: MdpSpec, path):
    try:
        Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
