"""Brute-force partition functions by explicit trajectory enumeration.

This module deliberately shares no code with the Bellman solvers: it walks
every trajectory up to a length cap, sums the Gibbs weights directly, and
bounds the missing tail with the geometric series
``e^{beta K} rho^{cap+1} / (1 - rho)`` where ``rho = e^mu * branching``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .errors import CapExplosion, Cyclic, MuTooLarge
from .mdp import ValidatedMdp

DEFAULT_NODE_BUDGET = 10_000_000


@dataclass(frozen=True)
class Trajectory:
    """A finished trajectory.

    ``steps`` holds ``(state, action, reward)`` tuples; the last one lands on
    ``terminal_state``.
    """

    steps: tuple[tuple[str, str, float], ...]
    terminal_state: str
    terminal_reward: float
    log_likelihood: float = 0.0

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def total_reward(self) -> float:
        return math.fsum([r for _, _, r in self.steps] + [self.terminal_reward])

    @property
    def energy(self) -> float:
        return -self.total_reward

    def log_weight(self, beta: float, mu: float, likelihood: bool = False) -> float:
        w = -beta * self.energy + mu * self.length
        return w + self.log_likelihood if likelihood else w


@dataclass(frozen=True)
class EnumResult:
    """``partial_sum <= Z <= partial_sum + tail_bound`` whenever the tail bound is valid."""

    partial_sum: float
    tail_bound: float
    len_cap: int
    exhausted: bool
    n_trajectories: int
    log_partial_sum: float


def iter_trajectories(
    mdp: ValidatedMdp, start: str, len_cap: int, node_budget: int = DEFAULT_NODE_BUDGET
) -> Iterator[Trajectory | None]:
    """Depth-first enumeration of trajectories of length <= ``len_cap`` from ``start``.

    Yields finished trajectories in a fixed order. A ``None`` is yielded for
    every prefix cut off by the cap, so callers can tell whether the whole
    ensemble was covered. Zero-probability transitions are skipped.
    """
    if mdp.is_terminal(start):
        return
    expanded = 0
    # items are open prefixes (state, steps, loglik), finished Trajectory objects, or None
    stack: list = [(start, (), 0.0)]
    while stack:
        item = stack.pop()
        if item is None or isinstance(item, Trajectory):
            yield item
            continue
        state, prefix, loglik = item
        expanded += 1
        if expanded > node_budget:
            raise CapExplosion(f"more than {node_budget} prefixes expanded; lower len_cap")
        children = []
        for action in mdp.actions(state):
            for target, prob, reward in mdp.outcomes(state, action):
                if prob <= 0.0:
                    continue
                steps = prefix + ((state, action, reward),)
                ll = loglik + math.log(prob)
                if mdp.is_terminal(target):
                    children.append(Trajectory(steps, target, mdp.spec.terminals[target], ll))
                elif len(steps) >= len_cap:
                    children.append(None)
                else:
                    children.append((target, steps, ll))
        # reversed push keeps the natural action order on pop
        stack.extend(reversed(children))


def _logsumexp(xs: list[float]) -> float:
    if not xs:
        return -math.inf
    m = max(xs)
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


def _enumerate(mdp, s, beta, mu, len_cap, likelihood, node_budget) -> EnumResult:
    if len_cap < 1:
        raise ValueError("len_cap must be >= 1")
    # with the likelihood weight the per-step mass is at most d; without it
    # every (action, landing state) pair counts separately
    branching = mdp.d if likelihood else mdp.max_branching
    rho_log = mu + math.log(branching)
    if not rho_log < 0:
        raise MuTooLarge(f"mu={mu} must be < -log({branching}) for a valid tail bound")
    if mdp.is_terminal(s):
        logz = beta * mdp.spec.terminals[s]
        return EnumResult(math.exp(logz), 0.0, len_cap, True, 0, logz)

    terms = []
    exhausted = True
    for traj in iter_trajectories(mdp, s, len_cap, node_budget):
        if traj is None:
            exhausted = False
        else:
            terms.append(traj.log_weight(beta, mu, likelihood))
    log_total = _logsumexp(terms)
    rho = math.exp(rho_log)
    tail = math.exp(beta * mdp.K + (len_cap + 1) * rho_log) / (1.0 - rho)
    return EnumResult(math.exp(log_total), tail, len_cap, exhausted, len(terms), log_total)


def enumerate_z(
    mdp: ValidatedMdp, s: str, beta: float, mu: float, len_cap: int, node_budget: int = DEFAULT_NODE_BUDGET
) -> EnumResult:
    """Sum ``exp(-beta E + mu |w|)`` over trajectories from ``s`` of length <= ``len_cap``.

    On a terminal state the boundary value ``exp(beta R(s))`` is returned exactly.

    Raises:
        MuTooLarge: the tail bound would diverge.
        CapExplosion: more than ``node_budget`` prefixes were expanded.
    """
    return _enumerate(mdp, s, beta, mu, len_cap, False, node_budget)


def enumerate_z_likelihood(
    mdp: ValidatedMdp, s: str, beta: float, mu: float, len_cap: int, node_budget: int = DEFAULT_NODE_BUDGET
) -> EnumResult:
    """Like :func:`enumerate_z` with each trajectory also weighted by its likelihood."""
    return _enumerate(mdp, s, beta, mu, len_cap, True, node_budget)


def optimal_path_stats(mdp: ValidatedMdp, s: str, mu: float, len_cap: int | None = None) -> tuple[float, float]:
    """Best achievable return from ``s`` and the weighted count of trajectories achieving it.

    The count is ``sum(exp(mu * |w|))`` over maximizing trajectories.
    Returns within 1e-12 of the maximum count as ties.

    Raises:
        Cyclic: a trajectory of length ``len_cap`` (default ``|S|``) did not finish.
    """
    mdp.require_deterministic()
    cap = mdp.n_states if len_cap is None else len_cap
    if mdp.is_terminal(s):
        return mdp.spec.terminals[s], 1.0
    best = -math.inf
    lengths: list[tuple[float, int]] = []
    for traj in iter_trajectories(mdp, s, cap):
        if traj is None:
            raise Cyclic(f"state {s!r} has trajectories longer than {cap}; cannot certify the maximum")
        ret = traj.total_reward
        lengths.append((ret, traj.length))
        best = max(best, ret)
    n_max = math.fsum(math.exp(mu * n) for ret, n in lengths if abs(ret - best) <= 1e-12)
    return best, n_max
