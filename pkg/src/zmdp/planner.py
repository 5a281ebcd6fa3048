"""Partition-function planning on deterministic MDPs.

``Z(s, beta)`` sums ``exp(beta * return + mu * length)`` over all
trajectories from ``s`` and satisfies a *linear* Bellman equation
``Z(s) = sum_a exp(beta R(s,a) + mu) Z(s+a)`` with boundary values
``Z(s_f) = exp(beta R(s_f))``. Everything here works with ``log Z``.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import _bellman
from ._bellman import LOG_FLOOR
from .errors import SingularSystem, SystemTooLarge
from .mdp import ValidatedMdp

DENSE_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class LogZTable:
    """Solved ``log Z(s, beta)`` for every state.

    Attributes:
        states: State order matching ``values``.
        values: ``log Z`` per state; dead states (Z = 0) sit at ``LOG_FLOOR``.
        dead: States with vanishing partition function.
        variant: ``deterministic``, ``averaged`` or ``variational``.
    """

    states: tuple[str, ...]
    values: np.ndarray
    beta: float
    mu: float
    residual: float
    iterations: int = 0
    converged: bool = True
    dead: frozenset = field(default_factory=frozenset)
    variant: str = "deterministic"
    method: str = "power"

    @cached_property
    def log_z(self) -> dict[str, float]:
        return dict(zip(self.states, self.values.tolist()))

    def __getitem__(self, state: str) -> float:
        return self.log_z[state]

    def z(self, state: str) -> float:
        if state in self.dead:
            return 0.0
        x = self.log_z[state]
        return math.exp(x) if x < 709.0 else math.inf

    @property
    def dead_mask(self) -> np.ndarray:
        return np.array([s in self.dead for s in self.states], dtype=bool)


@dataclass(frozen=True)
class BellmanMatrix:
    """Dense ``C(beta)``: ``C[s, s'] = sum over edges s->s' of exp(beta R + mu)``, unit rows on terminals."""

    matrix: np.ndarray
    states: tuple[str, ...]
    beta: float
    mu: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


@dataclass(frozen=True)
class PolicyTable:
    """Stochastic policy; ``probs[(state, action)]`` is a probability."""

    probs: dict[tuple[str, str], float]

    def row(self, state: str) -> dict[str, float]:
        return {a: p for (s, a), p in self.probs.items() if s == state}

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self.probs[key]


@dataclass(frozen=True)
class VTable:
    v: dict[str, float]
    method: str

    def __getitem__(self, state: str) -> float:
        return self.v[state]


def build_bellman_matrix(mdp: ValidatedMdp, beta: float, mu: float) -> BellmanMatrix:
    """Matrix form of the deterministic Bellman operator.

    Two actions reaching the same successor add up in one entry.
    """
    mdp.require_deterministic()
    n = mdp.n_states
    C = np.zeros((n, n))
    e = mdp.edges
    np.add.at(C, (e.state, e.target), np.exp(beta * e.reward + mu))
    term = np.flatnonzero(mdp.terminal_mask)
    C[term, term] = 1.0
    return BellmanMatrix(C, mdp.states, beta, mu)


def log_bellman_operator(mdp: ValidatedMdp, log_z: np.ndarray, beta: float, mu: float) -> np.ndarray:
    """One log-space sweep ``log(C(beta) exp(log_z))`` with terminal entries pinned."""
    mdp.require_deterministic()
    return _bellman.sweep(mdp, np.asarray(log_z, dtype=float), beta, mu, "averaged")


def _table(mdp, values, beta, mu, residual, iterations, converged, dead, variant, method) -> LogZTable:
    return LogZTable(
        states=mdp.states,
        values=values,
        beta=beta,
        mu=mu,
        residual=residual,
        iterations=iterations,
        converged=converged,
        dead=frozenset(s for s, flag in zip(mdp.states, dead) if flag),
        variant=variant,
        method=method,
    )


def solve_power(mdp: ValidatedMdp, beta: float, mu: float, tol: float = 1e-10, max_iter: int = 100_000) -> LogZTable:
    """Fixed point of ``Z = C(beta) Z`` by repeated log-space sweeps.

    Starts from the boundary values on terminals and ``log Z = 0`` elsewhere
    and stops once the sup-norm change of ``log Z`` is at most ``tol``.

    Raises:
        MuTooLarge: ``mu >= -log(d)``.
        NotDeterministic: use :mod:`zmdp.stochastic` instead.
        MaxIterExceeded: carries the last iterate as ``result``.
    """
    mdp.require_deterministic()
    mdp.check_mu(mu)
    values, residual, it, ok, dead = _bellman.iterate(mdp, beta, mu, tol, max_iter, "averaged")
    table = _table(mdp, values, beta, mu, residual, it, ok, dead, "deterministic", "power")
    if not ok:
        _bellman.raise_unconverged(table, max_iter)
    return table


def solve_linear(mdp: ValidatedMdp, beta: float, mu: float) -> LogZTable:
    """Direct solve of ``[I - C(beta)] Z = 0`` with terminal rows replaced by the boundary values.

    The system is scaled by ``exp(-beta K)`` so the largest boundary value is 1.
    LAPACK ``gesv`` (LU with partial pivoting) does the elimination.

    Raises:
        SystemTooLarge: more than ``DENSE_LIMIT`` states.
        SingularSystem: with a condition-number estimate.
    """
    mdp.require_deterministic()
    mdp.check_mu(mu)
    n = mdp.n_states
    if n > DENSE_LIMIT:
        raise SystemTooLarge(f"{n} states exceeds the dense limit {DENSE_LIMIT}; use solve_power")
    C = build_bellman_matrix(mdp, beta, mu).matrix
    A = np.eye(n) - C
    term = mdp.terminal_mask
    A[term] = 0.0
    A[term, term] = 1.0
    scale = beta * mdp.K
    b = np.where(term, np.exp(beta * mdp.terminal_rewards - scale), 0.0)
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"singular Bellman system: {exc}", float(np.linalg.cond(A))) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution", float(np.linalg.cond(A)))
    dead = ~mdp.can_reach_terminal
    with np.errstate(divide="ignore"):
        values = np.log(np.clip(x, 0.0, None)) + scale
    values = np.where(dead, LOG_FLOOR, np.maximum(values, LOG_FLOOR))
    live = ~dead & ~term
    swept = _bellman.sweep(mdp, np.where(dead, -np.inf, values), beta, mu, "averaged")
    residual = float(np.max(np.abs(swept[live] - values[live]))) if live.any() else 0.0
    return _table(mdp, values, beta, mu, residual, 1, True, dead, "deterministic", "linear")


def _fd(solver, mdp, beta, mu, h, **kw) -> np.ndarray:
    def f(b):
        return solver(mdp, b, mu, **kw).values

    if beta - h >= 0:
        return (f(beta + h) - f(beta - h)) / (2 * h)
    # second-order one-sided stencil keeps beta >= 0
    return (-3 * f(beta) + 4 * f(beta + h) - f(beta + 2 * h)) / (2 * h)


def value_from_z(
    mdp: ValidatedMdp,
    beta: float,
    mu: float,
    fd_step: float = 1e-4,
    method: str = "finite_difference",
    solver: Callable[..., LogZTable] = solve_power,
    **solver_kwargs,
) -> VTable:
    """Value function ``V(s) = d/dbeta log Z(s, beta)``.

    Args:
        solver: Any solver returning a :class:`LogZTable` (deterministic or stochastic).
        method: ``finite_difference`` (central difference of ``log Z`` in beta)
            or ``analytic_recursion`` (solve the linear recursion
            ``V(s) = sum pi (R + V)`` induced by the solved table).

    Terminal states get ``R(s_f)``; dead states get NaN.
    """
    table = solver(mdp, beta, mu, **solver_kwargs)
    dead = table.dead_mask
    if method == "finite_difference":
        v = _fd(solver, mdp, beta, mu, fd_step, **solver_kwargs)
        v = np.where(mdp.terminal_mask, mdp.terminal_rewards, v)
    elif method == "analytic_recursion":
        variant = "variational" if table.variant == "variational" else "averaged"
        w = _bellman.edge_weights(mdp, table.values, dead, beta, mu, variant)
        v = _bellman.solve_values(mdp, w, dead)
    else:
        raise ValueError(f"unknown method {method!r}")
    v = np.where(dead, np.nan, v)
    return VTable(dict(zip(mdp.states, v.tolist())), method)


def _policy_from_arm_scores(mdp: ValidatedMdp, arms: np.ndarray) -> PolicyTable:
    norm = _bellman.segment_logsumexp(arms, mdp.arm_state, mdp.n_states)
    with np.errstate(invalid="ignore"):
        p = np.exp(arms - norm[mdp.arm_state])
    probs: dict[tuple[str, str], float] = {}
    for i, s in enumerate(mdp.states):
        ks = np.flatnonzero(mdp.arm_state == i)
        if len(ks) == 0:
            continue
        row = p[ks]
        if not np.all(np.isfinite(row)) or row.sum() == 0:
            # dead state: no trajectory to weigh, fall back to uniform
            row = np.full(len(ks), 1.0 / len(ks))
        row = row / row.sum()
        for k, q in zip(ks, row):
            probs[mdp.arms[k]] = float(q)
    return PolicyTable(probs)


def policy_from_z(mdp: ValidatedMdp, table: LogZTable, beta: float | None = None, mu: float | None = None) -> PolicyTable:
    """Entropy-aware policy ``pi(a|s) ∝ exp(beta R(s,a) + mu) Z(s+a)``.

    Computed in log space and renormalized per row, which absorbs any
    residual solver error. Dead states get uniform rows.
    """
    mdp.require_deterministic()
    beta = table.beta if beta is None else beta
    mu = table.mu if mu is None else mu
    lz = np.where(table.dead_mask, -np.inf, table.values)
    arms = _bellman.arm_log_values(mdp, lz, beta, mu, "averaged")
    return _policy_from_arm_scores(mdp, arms)
