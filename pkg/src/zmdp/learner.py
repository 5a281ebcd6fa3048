"""Model-free learning of state-action partition functions ``Z(s, a, beta)``.

The update is geometric interpolation toward a one-step target,

    Z(s,a) <- Z(s,a)^(1-alpha) * (exp(beta r + mu) * sum_a' Z(s',a'))^alpha,

which in log space is plain linear interpolation. Differentiating in beta
turns it into the expected-SARSA update on ``Q = d/dbeta log Z`` under the
policy ``pi(a|s) ∝ Z(s,a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from . import _bellman
from ._bellman import LOG_FLOOR
from .errors import MaxIterExceeded, NonEpisodic, UnknownStateAction, ValidationError
from .mdp import ValidatedMdp
from .planner import LogZTable, PolicyTable


def logsumexp(xs) -> float:
    m = max(xs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.fsum([math.exp(x - m) for x in xs]))


class LogZsaTable:
    """Mutable table of ``log Z(s, a, beta)`` over the arms of an MDP.

    Terminal states have no arms; their ``log Z`` is the boundary
    ``beta R(s_f)``.
    """

    def __init__(self, mdp: ValidatedMdp, beta: float, mu: float, values=None):
        self.mdp = mdp
        self.beta = beta
        self.mu = mu
        n = len(mdp.arms)
        self._v: list[float] = [0.0] * n if values is None else [float(x) for x in values]
        if len(self._v) != n:
            raise ValidationError("values length does not match the number of arms")
        self._arms_of = {s: [mdp.arm_index[(s, a)] for a in mdp.actions(s)] for s in mdp.states}

    @property
    def values(self) -> np.ndarray:
        return np.array(self._v)

    @property
    def log_zsa(self) -> dict[tuple[str, str], float]:
        return dict(zip(self.mdp.arms, self._v))

    def copy(self) -> "LogZsaTable":
        return LogZsaTable(self.mdp, self.beta, self.mu, self._v)

    def index(self, state: str, action: str) -> int:
        try:
            return self.mdp.arm_index[(state, action)]
        except KeyError:
            raise UnknownStateAction(f"unknown state-action pair ({state!r}, {action!r})") from None

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self._v[self.index(*key)]

    def __setitem__(self, key: tuple[str, str], value: float):
        self._v[self.index(*key)] = float(value)

    def row(self, state: str) -> list[float]:
        return [self._v[k] for k in self._arms_of[state]]

    def state_log_z(self, state: str) -> float:
        """``log sum_a Z(s, a)``, or the boundary value on a terminal."""
        if self.mdp.is_terminal(state):
            return self.beta * self.mdp.spec.terminals[state]
        return logsumexp(self.row(state))

    def policy(self) -> PolicyTable:
        """``pi(a|s) ∝ Z(s, a)``."""
        probs = {}
        for s in self.mdp.states:
            ks = self._arms_of[s]
            if not ks:
                continue
            norm = logsumexp([self._v[k] for k in ks])
            for k in ks:
                probs[self.mdp.arms[k]] = math.exp(self._v[k] - norm) if norm > -math.inf else 1.0 / len(ks)
        return PolicyTable(probs)


def plan_zsa(mdp: ValidatedMdp, beta: float, mu: float, tol: float = 1e-10, max_iter: int = 100_000) -> LogZsaTable:
    """Exact ``log Z(s, a)`` from ``Z(s,a) = exp(beta R(s,a) + mu) sum_a' Z(s+a, a')``.

    Iterated directly on the arms (log space), independently of the state
    solver. Arms leading to dead states are reported at ``LOG_FLOOR``.
    """
    mdp.require_deterministic()
    mdp.check_mu(mu)
    e = mdp.edges
    # deterministic: edge k belongs to arm k
    dead_state = ~mdp.can_reach_terminal
    dead_arm = dead_state[e.target]
    term = mdp.terminal_mask
    bound = beta * mdp.terminal_rewards
    step = beta * e.reward + mu
    v = np.where(dead_arm, -np.inf, 0.0)
    ok = False
    for _ in range(max_iter):
        nxt = _bellman.segment_logsumexp(v, mdp.arm_state, mdp.n_states)
        nxt = np.where(term, bound, nxt)
        new = step + nxt[e.target]
        live = ~dead_arm
        change = float(np.max(np.abs(new[live] - v[live]))) if live.any() else 0.0
        v = new
        if change <= tol:
            ok = True
            break
    table = LogZsaTable(mdp, beta, mu, np.where(dead_arm, LOG_FLOOR, v))
    if not ok:
        raise MaxIterExceeded(f"plan_zsa did not converge within {max_iter} iterations", table)
    return table


def zsa_from_z(mdp: ValidatedMdp, table: LogZTable) -> LogZsaTable:
    """State-action table implied by a solved state table.

    Averaged and deterministic tables give ``Z(s,a) = sum_{s'} P exp(beta R + mu) Z(s')``;
    variational tables give ``log Z(s,a) = sum_{s'} P [beta R + mu + log Z(s')]``.
    The variational table is the one online learning settles on in stochastic
    environments, since each update averages log-space targets over sampled ``s'``.
    """
    variant = "variational" if table.variant == "variational" else "averaged"
    lz = np.where(table.dead_mask, -np.inf, table.values)
    arms = _bellman.arm_log_values(mdp, lz, table.beta, table.mu, variant)
    return LogZsaTable(mdp, table.beta, table.mu, np.maximum(arms, LOG_FLOOR))


class Transition(NamedTuple):
    state: str
    action: str
    reward: float
    next_state: str
    done: bool


def update_zsa(table: LogZsaTable, transition, alpha: float) -> LogZsaTable:
    """Geometric-interpolation update of one entry, done in place (the table is returned).

    ``log Z <- (1 - alpha) log Z + alpha (beta r + mu + log sum_a' Z(s', a'))``.
    When ``s'`` is terminal the sum is replaced by the boundary ``exp(beta R(s'))``.
    """
    s, a, r, s2, done = transition
    k = table.index(s, a)
    terminal = table.mdp.is_terminal(s2)
    if done and not terminal:
        raise ValidationError(f"transition marked done but {s2!r} is not terminal")
    if terminal:
        nxt = table.beta * table.mdp.spec.terminals[s2]
    else:
        nxt = logsumexp(table.row(s2))
    target = table.beta * r + table.mu + nxt
    table._v[k] = (1.0 - alpha) * table._v[k] + alpha * target
    return table


@dataclass(frozen=True)
class Proportional:
    """Sample ``a`` with probability ``∝ Z(s, a)``."""


@dataclass(frozen=True)
class EpsilonGreedy:
    """Argmax of ``Z(s, ·)`` (lowest index on ties) with prob ``1 - epsilon``, else uniform."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must be in [0, 1]")


Exploration = Union[Proportional, EpsilonGreedy]


def select_action(table: LogZsaTable, s: str, exploration: Exploration, rng: np.random.Generator) -> str:
    actions = table.mdp.actions(s)
    row = table.row(s)
    if isinstance(exploration, EpsilonGreedy):
        if exploration.epsilon > 0 and rng.random() < exploration.epsilon:
            return actions[int(rng.integers(len(actions)))]
        return actions[int(np.argmax(row))]
    norm = logsumexp(row)
    u = rng.random()
    acc = 0.0
    for a, x in zip(actions, row):
        acc += math.exp(x - norm)
        if u < acc:
            return a
    return actions[-1]


def sample_transition(mdp: ValidatedMdp, s: str, a: str, rng: np.random.Generator) -> tuple[str, float]:
    """Draw ``(s', r)`` from the MDP's dynamics."""
    outs = mdp.outcomes(s, a)
    if len(outs) == 1:
        return outs[0][0], outs[0][2]
    u = rng.random()
    acc = 0.0
    for s2, p, r in outs:
        acc += p
        if u < acc:
            return s2, r
    positive = [o for o in outs if o[1] > 0]
    return positive[-1][0], positive[-1][2]


@dataclass
class LearnerConfig:
    """Training configuration.

    The learning rate of a pair visited ``t`` times before is
    ``alpha0 / (1 + t / alpha_decay)``. With ``explore="epsilon"`` the
    exploration rate falls linearly from ``epsilon_start`` to ``epsilon_end``
    over the first half of training.
    """

    beta: float
    mu: float
    episodes: int = 1000
    alpha0: float = 0.5
    alpha_decay: float = 500.0
    explore: str = "proportional"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    seed: int = 0
    eval_every: int = 100
    start_state: str | None = None
    max_steps: int = 10_000
    reference: LogZsaTable | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1:
            raise ValidationError("alpha0 must be in (0, 1]")
        if self.alpha_decay <= 0:
            raise ValidationError("alpha_decay must be positive")
        if self.explore not in ("proportional", "epsilon"):
            raise ValidationError("explore must be 'proportional' or 'epsilon'")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0 <= eps <= 1:
                raise ValidationError("epsilon schedule must stay in [0, 1]")
        if self.episodes < 0 or self.eval_every < 1 or self.max_steps < 1:
            raise ValidationError("episodes >= 0, eval_every >= 1 and max_steps >= 1 required")

    def epsilon(self, episode: int) -> float:
        half = max(1, self.episodes // 2)
        frac = min(1.0, episode / half)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def alpha(self, visits: int) -> float:
        return self.alpha0 / (1.0 + visits / self.alpha_decay)


class CurveRow(NamedTuple):
    episode: int
    episode_return: float
    error: float
    epsilon: float
    alpha: float


@dataclass
class LearningCurve:
    rows: list[CurveRow] = field(default_factory=list)


def sup_error(table: LogZsaTable, reference: LogZsaTable) -> float:
    return float(np.max(np.abs(table.values - reference.values))) if table._v else 0.0


def train(mdp: ValidatedMdp, config: LearnerConfig) -> tuple[LogZsaTable, LearningCurve]:
    """Episodic online learning with :func:`update_zsa`.

    Episodes start at ``config.start_state`` (default: the first listed
    state) and run until a terminal is reached. Stochastic transitions are
    sampled from the MDP with the config's seeded generator; the table then
    tracks the variational state-action table (see :func:`zsa_from_z`).

    Raises:
        NonEpisodic: an episode ran ``max_steps`` steps without terminating.
    """
    mdp.check_mu(config.mu)
    rng = np.random.default_rng(config.seed)
    table = LogZsaTable(mdp, config.beta, config.mu)
    curve = LearningCurve()
    start = config.start_state or mdp.states[0]
    if start not in mdp.index:
        raise ValidationError(f"unknown start state {start!r}")
    if mdp.is_terminal(start):
        raise ValidationError("start state is terminal")
    visits = [0] * len(mdp.arms)
    alpha = config.alpha0
    for ep in range(config.episodes):
        eps = config.epsilon(ep) if config.explore == "epsilon" else math.nan
        explore = EpsilonGreedy(eps) if config.explore == "epsilon" else Proportional()
        s = start
        ret = 0.0
        for _ in range(config.max_steps):
            a = select_action(table, s, explore, rng)
            s2, r = sample_transition(mdp, s, a, rng)
            k = mdp.arm_index[(s, a)]
            alpha = config.alpha(visits[k])
            visits[k] += 1
            done = mdp.is_terminal(s2)
            update_zsa(table, Transition(s, a, r, s2, done), alpha)
            ret += r
            s = s2
            if done:
                ret += mdp.spec.terminals[s2]
                break
        else:
            raise NonEpisodic(f"episode {ep} did not terminate within {config.max_steps} steps")
        if (ep + 1) % config.eval_every == 0 or ep + 1 == config.episodes:
            err = sup_error(table, config.reference) if config.reference is not None else math.nan
            curve.rows.append(CurveRow(ep + 1, ret, err, eps, alpha))
    return table, curve


def q_diagnostic(mdp: ValidatedMdp, beta: float, mu: float, h: float = 1e-3) -> dict[tuple[str, str], float]:
    """``Q(s, a, beta) = d/dbeta log Z(s, a, beta)`` by central differences of :func:`plan_zsa`."""
    if beta - h >= 0:
        lo, hi = plan_zsa(mdp, beta - h, mu).values, plan_zsa(mdp, beta + h, mu).values
        q = (hi - lo) / (2 * h)
    else:
        f0 = plan_zsa(mdp, beta, mu).values
        f1 = plan_zsa(mdp, beta + h, mu).values
        f2 = plan_zsa(mdp, beta + 2 * h, mu).values
        q = (-3 * f0 + 4 * f1 - f2) / (2 * h)
    return dict(zip(mdp.arms, q.tolist()))
