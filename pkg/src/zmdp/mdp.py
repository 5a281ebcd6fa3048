"""Finite MDP definition, validation and normalization.

An :class:`MdpSpec` is the raw user-facing description. :func:`validate`
checks it and returns a :class:`ValidatedMdp` whose transition rewards are
all non-positive (shifted by the largest positive reward if needed), along
with the derived constants the solvers rely on: the action fan-out ``d``
and the terminal-reward bound ``K``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import (
    DanglingState,
    DeadEnd,
    MuTooLarge,
    NotDeterministic,
    ProbSumViolation,
    TerminalWithActions,
    UnknownStateAction,
    ValidationError,
)

PROB_TOL = 1e-9


@dataclass(frozen=True)
class Transition:
    source: str
    action: str
    target: str
    prob: float = 1.0
    reward: float = 0.0


@dataclass(frozen=True)
class MdpSpec:
    """Raw finite MDP.

    Attributes:
        states: Ordered state identifiers. Terminal states are listed here too.
        transitions: ``(source, action, target, prob, reward)`` records.
        terminals: Terminal state -> terminal reward ``R(s_f)``.
    """

    states: tuple[str, ...]
    transitions: tuple[Transition, ...]
    terminals: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(
            self,
            "transitions",
            tuple(t if isinstance(t, Transition) else Transition(*t) for t in self.transitions),
        )
        object.__setattr__(self, "terminals", {k: float(v) for k, v in dict(self.terminals).items()})


@dataclass(frozen=True, eq=False)
class ValidatedMdp:
    """A checked MDP with non-positive transition rewards.

    Immutable; the index structures below are computed lazily and cached.
    """

    spec: MdpSpec
    d: int
    K: float
    reward_shift: float
    is_deterministic: bool

    @cached_property
    def states(self) -> tuple[str, ...]:
        return self.spec.states

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.spec.states)}

    @property
    def n_states(self) -> int:
        return len(self.spec.states)

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        for s in self.spec.terminals:
            mask[self.index[s]] = True
        return mask

    @cached_property
    def terminal_rewards(self) -> np.ndarray:
        """Terminal rewards by state index (0 for non-terminal states)."""
        out = np.zeros(self.n_states)
        for s, r in self.spec.terminals.items():
            out[self.index[s]] = r
        return out

    def is_terminal(self, state: str) -> bool:
        return state in self.spec.terminals

    @cached_property
    def _outcomes(self) -> dict[str, dict[str, tuple[tuple[str, float, float], ...]]]:
        table: dict[str, dict[str, list]] = {s: {} for s in self.spec.states}
        for t in self.spec.transitions:
            table[t.source].setdefault(t.action, []).append((t.target, t.prob, t.reward))
        return {s: {a: tuple(v) for a, v in acts.items()} for s, acts in table.items()}

    def actions(self, state: str) -> tuple[str, ...]:
        """Action labels available at ``state``, in order of first appearance."""
        return tuple(self._outcomes[state])

    def outcomes(self, state: str, action: str) -> tuple[tuple[str, float, float], ...]:
        """``(target, prob, reward)`` triples for a state-action pair."""
        try:
            return self._outcomes[state][action]
        except KeyError:
            raise UnknownStateAction(f"unknown state-action pair ({state!r}, {action!r})") from None

    def step(self, state: str, action: str) -> tuple[str, float]:
        """Deterministic successor and reward of ``(state, action)``."""
        out = [o for o in self.outcomes(state, action) if o[1] > 0]
        if len(out) != 1:
            raise NotDeterministic(f"({state!r}, {action!r}) has {len(out)} outcomes")
        return out[0][0], out[0][2]

    @cached_property
    def arms(self) -> tuple[tuple[str, str], ...]:
        """All ``(state, action)`` pairs, grouped by state in state order."""
        return tuple((s, a) for s in self.spec.states for a in self._outcomes[s])

    @cached_property
    def arm_index(self) -> dict[tuple[str, str], int]:
        return {arm: k for k, arm in enumerate(self.arms)}

    @cached_property
    def arm_state(self) -> np.ndarray:
        return np.array([self.index[s] for s, _ in self.arms], dtype=np.intp)

    @cached_property
    def edges(self) -> "EdgeArrays":
        """Positive-probability transitions as flat arrays (zero-probability ones dropped)."""
        arm, target, prob, reward = [], [], [], []
        for k, (s, a) in enumerate(self.arms):
            for s2, p, r in self._outcomes[s][a]:
                if p > 0.0:
                    arm.append(k)
                    target.append(self.index[s2])
                    prob.append(p)
                    reward.append(r)
        arm_arr = np.array(arm, dtype=np.intp)
        return EdgeArrays(
            arm=arm_arr,
            state=self.arm_state[arm_arr] if arm else np.zeros(0, dtype=np.intp),
            target=np.array(target, dtype=np.intp),
            prob=np.array(prob, dtype=float),
            reward=np.array(reward, dtype=float),
        )

    @cached_property
    def max_branching(self) -> int:
        """Largest number of positive-probability ``(action, landing state)`` pairs at a state."""
        counts = np.bincount(self.edges.state, minlength=self.n_states) if self.n_states else [0]
        return max(1, int(np.max(counts)))

    @cached_property
    def can_reach_terminal(self) -> np.ndarray:
        """States from which some terminal is reachable through positive-probability edges."""
        preds = defaultdict(set)
        e = self.edges
        for s, t in zip(e.state.tolist(), e.target.tolist()):
            preds[t].add(s)
        seen = self.terminal_mask.copy()
        stack = list(np.flatnonzero(seen))
        while stack:
            t = stack.pop()
            for s in preds[t]:
                if not seen[s]:
                    seen[s] = True
                    stack.append(s)
        return seen

    def original_reward(self, reward: float) -> float:
        """Undo the reward shift applied by :func:`validate`."""
        return reward + self.reward_shift

    def require_deterministic(self):
        if not self.is_deterministic:
            raise NotDeterministic("this operation requires a deterministic MDP")

    def check_mu(self, mu: float):
        if not mu < -math.log(self.d):
            raise MuTooLarge(f"mu={mu} must be < -log(d) = {-math.log(self.d):.6g} (d={self.d})")


@dataclass(frozen=True)
class EdgeArrays:
    arm: np.ndarray
    state: np.ndarray
    target: np.ndarray
    prob: np.ndarray
    reward: np.ndarray


def validate(spec: MdpSpec) -> ValidatedMdp:
    """Check ``spec`` and shift rewards so every transition reward is <= 0.

    Terminal rewards are left untouched. Zero-probability transitions are
    kept in the spec but ignored by every solver.

    Raises:
        DanglingState: a transition or terminal names an unknown state.
        ProbSumViolation: probabilities of some ``(state, action)`` do not sum to 1.
        DeadEnd: a non-terminal state has no action.
        TerminalWithActions: a terminal state is the source of a transition.
    """
    known = set(spec.states)
    if len(known) != len(spec.states):
        raise ValidationError("duplicate state identifiers")
    for s in spec.terminals:
        if s not in known:
            raise DanglingState(f"terminal {s!r} is not a declared state")

    sums: dict[tuple[str, str], float] = defaultdict(float)
    seen_edges: set[tuple[str, str, str]] = set()
    for i, t in enumerate(spec.transitions):
        for name in (t.source, t.target):
            if name not in known:
                raise DanglingState(f"transition {i} references unknown state {name!r}")
        if t.source in spec.terminals:
            raise TerminalWithActions(f"transition {i} leaves terminal state {t.source!r}")
        if not 0.0 <= t.prob <= 1.0 or not math.isfinite(t.reward):
            raise ValidationError(f"transition {i}: prob must be in [0, 1] and reward finite")
        key = (t.source, t.action, t.target)
        if key in seen_edges:
            raise ValidationError(f"transition {i} duplicates {key}")
        seen_edges.add(key)
        sums[(t.source, t.action)] += t.prob

    for (s, a), total in sums.items():
        if abs(total - 1.0) > PROB_TOL:
            raise ProbSumViolation(f"probabilities of ({s!r}, {a!r}) sum to {total!r}")

    n_actions: dict[str, int] = defaultdict(int)
    for s, _ in sums:
        n_actions[s] += 1
    for s in spec.states:
        if s not in spec.terminals and n_actions[s] == 0:
            raise DeadEnd(f"non-terminal state {s!r} has no action")

    positive = defaultdict(int)
    for t in spec.transitions:
        if t.prob > 0.0:
            positive[(t.source, t.action)] += 1
    # one positive-probability outcome per pair; the sum check pins it at 1
    is_det = all(positive[key] == 1 for key in sums)

    max_reward = max((t.reward for t in spec.transitions), default=0.0)
    shift = max(0.0, max_reward)
    if shift > 0.0:
        spec = replace(
            spec,
            transitions=tuple(replace(t, reward=t.reward - shift) for t in spec.transitions),
        )

    d = max(n_actions.values(), default=1)
    K = max(spec.terminals.values(), default=0.0)
    return ValidatedMdp(spec=spec, d=d, K=K, reward_shift=shift, is_deterministic=is_det)


def default_mu(mdp: ValidatedMdp, margin: float = 0.1) -> float:
    """Chemical potential ``-log(d) - margin``, strictly inside the convergence region."""
    if not margin > 0:
        raise ValidationError("margin must be positive")
    return -math.log(mdp.d) - margin


@dataclass
class Hyperparams:
    """Solver and learner hyperparameters.

    ``mu`` is only checked against an MDP at call time (see :meth:`check`).
    """

    beta: float = 1.0
    mu: float = -1.0
    tol: float = 1e-10
    max_iter: int = 100_000
    fd_step: float = 1e-4
    alpha0: float = 0.5
    alpha_decay: float = 500.0
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValidationError("beta must be >= 0")
        if self.tol <= 0 or self.fd_step <= 0:
            raise ValidationError("tol and fd_step must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be a positive integer")
        if not 0 < self.alpha0 <= 1:
            raise ValidationError("alpha0 must be in (0, 1]")
        if self.alpha_decay <= 0:
            raise ValidationError("alpha_decay must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")

    def check(self, mdp: ValidatedMdp):
        mdp.check_mu(self.mu)
