"""Classical tabular baselines: value iteration, Q-learning, Boltzmann policies.

All baselines work on the user's original reward scale: the shift applied by
:func:`zmdp.mdp.validate` is added back. A terminal state's value is its
terminal reward ``R(s_f)``; terminal states carry no actions, so their
``Q(s, .)`` is empty (the usual "Q = 0 at terminals" with the terminal reward
folded into the incoming target).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded, NonEpisodic, ValidationError
from .learner import CurveRow, LearningCurve, logsumexp, sample_transition
from .mdp import ValidatedMdp
from .planner import PolicyTable, VTable

TIE_TOL = 1e-12


@dataclass
class QTable:
    q: dict[tuple[str, str], float]
    gamma: float
    mdp: ValidatedMdp = field(repr=False, compare=False)

    def __getitem__(self, key):
        return self.q[key]

    def row(self, state: str) -> list[float]:
        return [self.q[(state, a)] for a in self.mdp.actions(state)]

    def value(self, state: str) -> float:
        if self.mdp.is_terminal(state):
            return self.mdp.spec.terminals[state]
        return max(self.row(state))


def _check_gamma(gamma):
    if not 0 <= gamma < 1:
        raise ValidationError("gamma must be in [0, 1)")


def _greedy_index(values) -> int:
    best = max(values)
    return next(i for i, x in enumerate(values) if x >= best - TIE_TOL)


def q_from_values(mdp: ValidatedMdp, v: dict[str, float], gamma: float) -> QTable:
    """One-step lookahead ``Q(s,a) = sum_{s'} P (R + gamma V(s'))`` in original reward units."""
    q = {}
    for s, a in mdp.arms:
        q[(s, a)] = math.fsum(
            p * (mdp.original_reward(r) + gamma * v[s2]) for s2, p, r in mdp.outcomes(s, a) if p > 0
        )
    return QTable(q, gamma, mdp)


def greedy_policy(qtable: QTable) -> PolicyTable:
    """Deterministic greedy policy; ties go to the lowest action index."""
    probs = {}
    mdp = qtable.mdp
    for s in mdp.states:
        acts = mdp.actions(s)
        if not acts:
            continue
        best = _greedy_index(qtable.row(s))
        for i, a in enumerate(acts):
            probs[(s, a)] = 1.0 if i == best else 0.0
    return PolicyTable(probs)


def value_iteration(
    mdp: ValidatedMdp, gamma: float = 0.99, tol: float = 1e-12, max_iter: int = 100_000
) -> tuple[VTable, PolicyTable]:
    """Iterate ``V(s) = max_a E[R + gamma V(s')]`` to sup-norm ``tol``.

    Returns the value table and the greedy policy. Use :func:`q_from_values`
    for the matching Q-table.
    """
    _check_gamma(gamma)
    v = {s: (mdp.spec.terminals[s] if mdp.is_terminal(s) else 0.0) for s in mdp.states}
    for _ in range(max_iter):
        q = q_from_values(mdp, v, gamma)
        new = {s: (v[s] if mdp.is_terminal(s) else max(q.row(s))) for s in mdp.states}
        change = max((abs(new[s] - v[s]) for s in mdp.states), default=0.0)
        v = new
        if change <= tol:
            break
    else:
        raise MaxIterExceeded(f"value iteration did not converge within {max_iter} iterations", VTable(v, "value_iteration"))
    return VTable(v, "value_iteration"), greedy_policy(q_from_values(mdp, v, gamma))


def q_update(qtable: QTable, transition, alpha: float) -> QTable:
    """``Q <- (1 - alpha) Q + alpha (r + gamma max_a' Q(s', a'))`` in place.

    ``r`` is in original reward units; at a terminal ``s'`` the bootstrap is ``R(s')``.
    """
    s, a, r, s2, _ = transition
    target = r + qtable.gamma * qtable.value(s2)
    qtable.q[(s, a)] = (1.0 - alpha) * qtable.q[(s, a)] + alpha * target
    return qtable


def q_sweep(qtable: QTable, alpha: float = 1.0) -> QTable:
    """Apply :func:`q_update` once to every arm of a deterministic MDP, in arm order."""
    mdp = qtable.mdp
    mdp.require_deterministic()
    for s, a in mdp.arms:
        s2, r = mdp.step(s, a)
        q_update(qtable, (s, a, mdp.original_reward(r), s2, mdp.is_terminal(s2)), alpha)
    return qtable


def q_learning(
    mdp: ValidatedMdp,
    gamma: float = 0.99,
    alpha0: float = 0.5,
    alpha_decay: float = 500.0,
    explore: str = "epsilon",
    episodes: int = 1000,
    seed: int = 0,
    epsilon_start: float = 1.0,
    epsilon_end: float = 0.05,
    boltzmann_beta: float = 1.0,
    start_state: str | None = None,
    max_steps: int = 10_000,
    eval_every: int = 100,
    reference: QTable | None = None,
    curve: LearningCurve | None = None,
) -> QTable:
    """Tabular Q-learning on the MDP used as a simulator.

    The learning rate of a pair visited ``t`` times is ``alpha0 / (1 + t / alpha_decay)``.
    ``explore`` is ``epsilon`` (linear decay over the first half of training)
    or ``boltzmann`` (softmax of Q at ``boltzmann_beta``). Rows are appended to
    ``curve`` every ``eval_every`` episodes when given.
    """
    _check_gamma(gamma)
    if explore not in ("epsilon", "boltzmann"):
        raise ValidationError("explore must be 'epsilon' or 'boltzmann'")
    if not 0 <= alpha0 <= 1:
        raise ValidationError("alpha0 must be in [0, 1]")
    rng = np.random.default_rng(seed)
    qt = QTable({arm: 0.0 for arm in mdp.arms}, gamma, mdp)
    start = start_state or mdp.states[0]
    visits = dict.fromkeys(mdp.arms, 0)
    half = max(1, episodes // 2)
    alpha = alpha0
    for ep in range(episodes):
        eps = epsilon_start + min(1.0, ep / half) * (epsilon_end - epsilon_start)
        s = start
        ret = 0.0
        for _ in range(max_steps):
            acts = mdp.actions(s)
            row = qt.row(s)
            if explore == "epsilon":
                if eps > 0 and rng.random() < eps:
                    a = acts[int(rng.integers(len(acts)))]
                else:
                    a = acts[_greedy_index(row)]
            else:
                logits = [boltzmann_beta * x for x in row]
                norm = logsumexp(logits)
                probs = np.exp(np.array(logits) - norm)
                a = acts[int(rng.choice(len(acts), p=probs / probs.sum()))]
            s2, r = sample_transition(mdp, s, a, rng)
            alpha = alpha0 / (1.0 + visits[(s, a)] / alpha_decay)
            visits[(s, a)] += 1
            r = mdp.original_reward(r)
            done = mdp.is_terminal(s2)
            q_update(qt, (s, a, r, s2, done), alpha)
            ret += r
            s = s2
            if done:
                ret += mdp.spec.terminals[s2]
                break
        else:
            raise NonEpisodic(f"episode {ep} did not terminate within {max_steps} steps")
        if curve is not None and ((ep + 1) % eval_every == 0 or ep + 1 == episodes):
            err = (
                max(abs(qt.q[k] - reference.q[k]) for k in qt.q) if reference is not None and qt.q else math.nan
            )
            curve.rows.append(CurveRow(ep + 1, ret, err, eps if explore == "epsilon" else math.nan, alpha))
    return qt


def boltzmann_policy(qtable: QTable, beta: float) -> PolicyTable:
    """``pi(a|s) ∝ exp(beta Q(s, a))``; splits ties evenly regardless of how many ways each action wins."""
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    probs = {}
    mdp = qtable.mdp
    for s in mdp.states:
        acts = mdp.actions(s)
        if not acts:
            continue
        logits = np.array([beta * x for x in qtable.row(s)])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        for a, p in zip(acts, w.tolist()):
            probs[(s, a)] = p
    return PolicyTable(probs)
