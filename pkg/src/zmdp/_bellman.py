"""Log-space Bellman sweeps shared by the deterministic and stochastic solvers.

Three variants share one edge-array kernel:

* ``averaged``: ``log Z(s) = LSE_{a,s'} [log P + beta R + mu + log Z(s')]``;
  on a deterministic MDP this is exactly the deterministic recursion.
* ``variational``: ``log Z(s) = LSE_a sum_{s'} P [beta R + mu + log Z(s')]``.

States whose partition function is exactly zero ("dead" states) are held at
``-inf`` during iteration and reported at :data:`LOG_FLOOR`.
"""

from __future__ import annotations

import numpy as np

from .errors import MaxIterExceeded
from .mdp import ValidatedMdp

LOG_FLOOR = -745.0
VARIANTS = ("averaged", "variational")


def segment_logsumexp(values: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    """Log-sum-exp of ``values`` grouped by ``segments``; empty groups give ``-inf``."""
    peak = np.full(n, -np.inf)
    np.maximum.at(peak, segments, values)
    shift = np.where(np.isfinite(peak), peak, 0.0)
    acc = np.zeros(n)
    np.add.at(acc, segments, np.exp(values - shift[segments]))
    with np.errstate(divide="ignore"):
        return shift + np.log(acc)


def boundary(mdp: ValidatedMdp, beta: float) -> np.ndarray:
    return beta * mdp.terminal_rewards


def dead_mask(mdp: ValidatedMdp, variant: str) -> np.ndarray:
    """States whose partition function vanishes.

    ``averaged``: no terminal reachable. ``variational``: additionally every
    action has some positive-probability landing state that is dead (its
    geometric mean then contains a zero factor); closed under iteration.
    """
    dead = ~mdp.can_reach_terminal
    if variant != "variational":
        return dead
    e = mdp.edges
    n_arms = len(mdp.arms)
    while True:
        arm_dead = np.zeros(n_arms, dtype=bool)
        np.logical_or.at(arm_dead, e.arm, dead[e.target])
        state_alive = np.zeros(mdp.n_states, dtype=bool)
        np.logical_or.at(state_alive, mdp.arm_state, ~arm_dead)
        new = dead | (~state_alive & ~mdp.terminal_mask)
        if (new == dead).all():
            return dead
        dead = new


def arm_log_values(mdp: ValidatedMdp, log_z: np.ndarray, beta: float, mu: float, variant: str) -> np.ndarray:
    """Per-arm log weights: ``log Z(s, a)`` in the averaged sense, or the variational score."""
    e = mdp.edges
    base = beta * e.reward + mu + log_z[e.target]
    n_arms = len(mdp.arms)
    if variant == "averaged":
        return segment_logsumexp(np.log(e.prob) + base, e.arm, n_arms)
    if variant == "variational":
        acc = np.zeros(n_arms)
        np.add.at(acc, e.arm, e.prob * base)
        return acc
    raise ValueError(f"unknown variant {variant!r}")


def sweep(mdp: ValidatedMdp, log_z: np.ndarray, beta: float, mu: float, variant: str) -> np.ndarray:
    """One application of the Bellman operator in log space; terminal entries stay at the boundary."""
    arms = arm_log_values(mdp, log_z, beta, mu, variant)
    new = segment_logsumexp(arms, mdp.arm_state, mdp.n_states)
    return np.where(mdp.terminal_mask, boundary(mdp, beta), new)


def _sup_change(a: np.ndarray, b: np.ndarray, live: np.ndarray) -> float:
    if not live.any():
        return 0.0
    return float(np.max(np.abs(a[live] - b[live])))


def iterate(
    mdp: ValidatedMdp, beta: float, mu: float, tol: float, max_iter: int, variant: str
) -> tuple[np.ndarray, float, int, bool, np.ndarray]:
    """Fixed-point iteration from ``boundary on terminals, 0 elsewhere``.

    Returns ``(log_z, residual, iterations, converged, dead)`` with dead
    states floored. ``residual`` is the sup-norm Bellman residual of the
    returned iterate.
    """
    dead = dead_mask(mdp, variant)
    live = ~dead & ~mdp.terminal_mask
    log_z = np.where(mdp.terminal_mask, boundary(mdp, beta), 0.0)
    log_z[dead] = -np.inf
    converged = False
    it = 0
    while it < max_iter:
        new = sweep(mdp, log_z, beta, mu, variant)
        it += 1
        change = _sup_change(new, log_z, live)
        log_z = new
        if change <= tol:
            converged = True
            break
    residual = _sup_change(sweep(mdp, log_z, beta, mu, variant), log_z, live)
    out = np.where(dead, LOG_FLOOR, log_z)
    return out, residual, it, converged, dead


def edge_weights(mdp: ValidatedMdp, log_z: np.ndarray, dead: np.ndarray, beta: float, mu: float, variant: str) -> np.ndarray:
    """Per-edge weights ``w`` such that ``V(s) = sum_e w_e (R_e + V(s'_e))``.

    ``averaged`` gives the landing-state dependent weights; ``variational``
    gives ``pi(a|s) P(s'|s,a)``. Each live state's weights sum to 1.
    """
    lz = np.where(dead, -np.inf, log_z)
    e = mdp.edges
    if variant == "averaged":
        terms = np.log(e.prob) + beta * e.reward + mu + lz[e.target]
        norm = segment_logsumexp(terms, e.state, mdp.n_states)
        with np.errstate(invalid="ignore"):
            w = np.exp(terms - norm[e.state])
    else:
        arms = arm_log_values(mdp, lz, beta, mu, "variational")
        norm = segment_logsumexp(arms, mdp.arm_state, mdp.n_states)
        with np.errstate(invalid="ignore"):
            pi = np.exp(arms - norm[mdp.arm_state])
        w = pi[e.arm] * e.prob
    return np.nan_to_num(w, nan=0.0)


def solve_values(mdp: ValidatedMdp, weights: np.ndarray, dead: np.ndarray) -> np.ndarray:
    """Solve ``V = W (R + V)`` on live states, ``V(s_f) = R(s_f)`` on terminals; dead states get NaN."""
    e = mdp.edges
    n = mdp.n_states
    A = np.eye(n)
    b = np.where(mdp.terminal_mask, mdp.terminal_rewards, 0.0)
    keep = ~mdp.terminal_mask[e.state] & ~dead[e.state] & ~dead[e.target]
    np.add.at(A, (e.state[keep], e.target[keep]), -weights[keep])
    np.add.at(b, e.state[keep], weights[keep] * e.reward[keep])
    v = np.full(n, np.nan)
    idx = np.flatnonzero(~dead)
    v[idx] = np.linalg.solve(A[np.ix_(idx, idx)], b[idx])
    return v


def raise_unconverged(result, max_iter: int):
    raise MaxIterExceeded(f"no convergence within {max_iter} iterations (residual {result.residual:.3g})", result)
