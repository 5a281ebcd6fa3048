"""Partition functions for stochastic MDPs.

Two constructions:

* **averaged**: ``Z(s) = sum_{a,s'} P(s'|s,a) exp(beta R + mu) Z(s')``. Its
  trajectory form weights each trajectory by its likelihood as well, and the
  implied weights depend on the landing state, so they are not a policy the
  agent could actually follow (see :func:`diagnose_averaged_policy`).
* **variational**: ``Z(s) = sum_a prod_{s'} [exp(beta R + mu) Z(s')]^{P(s'|s,a)}``,
  the per-state table of the product family ``Z(rho) = prod_i Z(S_i)^{rho_i}``
  over belief states. Its policy depends on the current state only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import _bellman
from .errors import MaxIterExceeded, ValidationError
from .mdp import PROB_TOL, ValidatedMdp
from .planner import LogZTable, PolicyTable, _policy_from_arm_scores, _table


class StochasticZTable(LogZTable):
    """A :class:`LogZTable` whose ``variant`` is ``averaged`` or ``variational``."""


def _solve(mdp: ValidatedMdp, beta, mu, tol, max_iter, variant) -> StochasticZTable:
    mdp.check_mu(mu)
    values, residual, it, ok, dead = _bellman.iterate(mdp, beta, mu, tol, max_iter, variant)
    base = _table(mdp, values, beta, mu, residual, it, ok, dead, variant, "power")
    table = StochasticZTable(**{f: getattr(base, f) for f in base.__dataclass_fields__})
    if not ok:
        raise MaxIterExceeded(f"{variant} solver did not converge within {max_iter} iterations", table)
    return table


def solve_averaged(mdp: ValidatedMdp, beta: float, mu: float, tol: float = 1e-10, max_iter: int = 100_000) -> StochasticZTable:
    """Fixed point of the likelihood-averaged Bellman equation (log-space iteration)."""
    return _solve(mdp, beta, mu, tol, max_iter, "averaged")


def solve_variational(mdp: ValidatedMdp, beta: float, mu: float, tol: float = 1e-10, max_iter: int = 100_000) -> StochasticZTable:
    """Fixed point of the geometric-mean Bellman equation.

    In log space each action scores ``sum_{s'} P [beta R + mu + log Z(s')]``
    and the state value is the log-sum-exp over actions. Zero-probability
    transitions are skipped. A state is dead (Z = 0) when every action can land
    on a dead state with positive probability.
    """
    return _solve(mdp, beta, mu, tol, max_iter, "variational")


def _require(table: LogZTable, variant: str):
    if table.variant != variant:
        raise ValidationError(f"expected a {variant} table, got {table.variant}")


def diagnose_averaged_policy(mdp: ValidatedMdp, table: LogZTable) -> dict[tuple[str, str, str], float]:
    """Landing-state dependent weights ``w(s,a,s') = exp(beta R + mu) Z(s') P(s'|s,a) / Z(s)``.

    These are what the averaged construction implicitly "chooses"; they sum to
    one per state but require knowing ``s'`` in advance. Terminal and dead
    states are omitted.
    """
    if table.variant not in ("averaged", "deterministic"):
        raise ValidationError("diagnosis applies to averaged (or deterministic) tables")
    dead = table.dead_mask
    w = _bellman.edge_weights(mdp, table.values, dead, table.beta, table.mu, "averaged")
    e = mdp.edges
    report: dict[tuple[str, str, str], float] = {}
    for k in range(len(w)):
        s = int(e.state[k])
        if dead[s]:
            continue
        src, act = mdp.arms[int(e.arm[k])]
        report[(src, act, mdp.states[int(e.target[k])])] = float(w[k])
    return report


def policy_variational(mdp: ValidatedMdp, table: LogZTable) -> PolicyTable:
    """``pi(a|s) ∝ prod_{s'} [exp(beta R + mu) Z(s')]^{P(s'|s,a)}``, normalized per state."""
    if table.variant not in ("variational", "deterministic"):
        raise ValidationError("policy_variational needs a variational (or deterministic) table")
    lz = np.where(table.dead_mask, -np.inf, table.values)
    arms = _bellman.arm_log_values(mdp, lz, table.beta, table.mu, "variational")
    return _policy_from_arm_scores(mdp, arms)


@dataclass(frozen=True)
class BeliefState:
    """Probability distribution over the states of an MDP."""

    weights: Mapping[str, float]

    def __post_init__(self):
        w = {s: float(p) for s, p in self.weights.items() if p != 0}
        if any(p < 0 for p in w.values()) or abs(math.fsum(w.values()) - 1.0) > PROB_TOL:
            raise ValidationError("belief weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, state: str) -> "BeliefState":
        return cls({state: 1.0})

    def support(self) -> set[str]:
        return set(self.weights)

    def log_z(self, table: LogZTable) -> float:
        """Product-family value ``log prod_i Z(S_i)^{rho_i}``."""
        return math.fsum(p * table[s] for s, p in self.weights.items())


def belief_boundary(mdp: ValidatedMdp, rho: BeliefState, beta: float) -> float:
    """``log Z(rho_f) = beta * sum_i alpha_i R(f_i)`` for a mixture of terminal states."""
    if not all(mdp.is_terminal(s) for s in rho.support()):
        raise ValidationError("belief has non-terminal support")
    return beta * math.fsum(p * mdp.spec.terminals[s] for s, p in rho.weights.items())


def shared_actions(mdp: ValidatedMdp) -> tuple[str, ...]:
    """Action set common to every non-terminal state (required by the belief MDP)."""
    sets = [mdp.actions(s) for s in mdp.states if not mdp.is_terminal(s)]
    if not sets or any(set(a) != set(sets[0]) for a in sets):
        raise ValidationError("belief-space operator needs the same actions at every non-terminal state")
    return sets[0]


def belief_step(mdp: ValidatedMdp, rho: BeliefState, action: str) -> tuple[BeliefState, float]:
    """``(P_a^T rho, R(rho, a))``; terminal mass stays put and earns nothing."""
    nxt: dict[str, float] = {}
    reward = 0.0
    for s, p in rho.weights.items():
        if mdp.is_terminal(s):
            nxt[s] = nxt.get(s, 0.0) + p
            continue
        for s2, q, r in mdp.outcomes(s, action):
            nxt[s2] = nxt.get(s2, 0.0) + p * q
            reward += p * q * r
    total = math.fsum(nxt.values())
    return BeliefState({s: v / total for s, v in nxt.items()}), reward


def belief_operator(
    mdp: ValidatedMdp, X: Callable[[BeliefState], float], rho: BeliefState, beta: float, mu: float
) -> float:
    """Belief-space Bellman operator applied to ``X`` at ``rho`` (Z scale, not log).

    Final beliefs keep their value; elsewhere
    ``sum_a exp(beta R(rho,a) + mu) X(P_a^T rho)``.
    """
    if all(mdp.is_terminal(s) for s in rho.support()):
        return X(rho)
    total = 0.0
    for a in shared_actions(mdp):
        nxt, r = belief_step(mdp, rho, a)
        total += math.exp(beta * r + mu) * X(nxt)
    return total
