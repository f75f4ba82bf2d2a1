"""Tabular Q-learning / SARSA with reversibility penalty, threshold-scaled
updates and rollback."""

from __future__ import annotations

import csv
import math
import random
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .envs import StepOutcome
from .precedence import PhiTable, PrecedenceBuffer

ALGORITHMS = ("q_learning", "sarsa")
TIE_BREAKS = ("first", "random")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; message names the field."""


@dataclass
class AgentConfig:
    algorithm: str = "q_learning"
    use_precedence: bool = False
    use_threshold_penalty: bool = False
    use_rollback: bool = False
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon: float = 0.1
    q_init: float = -1.0
    horizon_k: int | None = None
    ema_rate: float | None = None
    penalty_weight: float | None = None
    phi_init: float | None = None
    threshold: float | None = None
    penalty_factor: float | None = None
    threshold_on_penalized_target: bool = True
    # "first" mirrors numpy.argmax; "random" picks uniformly among maximizers.
    tie_break: str = "first"

    def validate(self) -> "AgentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(f"tie_break: expected one of {TIE_BREAKS}, got {self.tie_break!r}")
        for name in ("use_precedence", "use_threshold_penalty", "use_rollback",
                     "threshold_on_penalized_target"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name}: expected a boolean, got {getattr(self, name)!r}")
        _check_range("alpha", self.alpha, 0.0, 1.0, low_open=True)
        _check_range("gamma", self.gamma, 0.0, 1.0)
        _check_range("epsilon", self.epsilon, 0.0, 1.0)
        _check_range("q_init", self.q_init, -math.inf, math.inf, low_open=True, high_open=True)
        if self.horizon_k is not None:
            if isinstance(self.horizon_k, bool) or not isinstance(self.horizon_k, int) or self.horizon_k < 0:
                raise ConfigError(f"horizon_k: expected a non-negative integer, got {self.horizon_k!r}")
        if self.ema_rate is not None:
            _check_range("ema_rate", self.ema_rate, 0.0, 1.0, low_open=True, high_open=True)
        if self.penalty_weight is not None:
            _check_range("penalty_weight", self.penalty_weight, 0.0, math.inf, high_open=True)
        if self.phi_init is not None:
            _check_range("phi_init", self.phi_init, 0.0, 1.0)
        if self.threshold is not None:
            _check_range("threshold", self.threshold, 0.0, math.inf, low_open=True)
        if self.penalty_factor is not None:
            _check_range("penalty_factor", self.penalty_factor, 0.0, math.inf, low_open=True)

        if self.use_precedence:
            for name in ("horizon_k", "ema_rate", "penalty_weight", "phi_init"):
                if getattr(self, name) is None:
                    raise ConfigError(f"{name}: required when use_precedence is true")
        if (self.use_threshold_penalty or self.use_rollback) and self.threshold is None:
            raise ConfigError("threshold: required when use_threshold_penalty or use_rollback is true")
        if self.use_threshold_penalty and self.penalty_factor is None:
            raise ConfigError("penalty_factor: required when use_threshold_penalty is true")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def _check_range(name, value, low, high, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if math.isnan(value):
        raise ConfigError(f"{name}: NaN is not allowed")
    too_low = value <= low if low_open else value < low
    too_high = value >= high if high_open else value > high
    if too_low or too_high:
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ConfigError(f"{name}: {value} outside {lo}{low}, {high}{hi}")


class QTable:
    def __init__(self, n_states: int, n_actions: int, init_value: float):
        self.n_states = n_states
        self.n_actions = n_actions
        self.init_value = float(init_value)
        self.values = [[self.init_value] * n_actions for _ in range(n_states)]

    def reset(self) -> None:
        self.values = [[self.init_value] * self.n_actions for _ in range(self.n_states)]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for row in self.values for v in row)

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["state", "action", "q"])
            for s, row in enumerate(self.values):
                for a, v in enumerate(row):
                    writer.writerow([s, a, repr(v)])


class StepResult(NamedTuple):
    action: int
    outcome: StepOutcome
    td_error: float
    beta_applied: float
    rollback_fired: bool
    effective_next_state: int
    effective_next_action: int | None


def select_action(q_row: Sequence[float], epsilon: float, rng: random.Random,
                  tie_break: str = "first") -> int:
    """Epsilon-greedy choice over one Q-table row.

    Always draws exactly one uniform for the explore test, then either a
    random action or (with ``tie_break="random"`` and several maximizers)
    a random maximizer.
    """
    n = len(q_row)
    if n == 0:
        raise ValueError("cannot select from an empty action row")
    if rng.random() < epsilon:
        return rng.randrange(n)
    best = max(q_row)
    if tie_break == "first":
        return q_row.index(best)
    ties = [i for i, v in enumerate(q_row) if v == best]
    return ties[0] if len(ties) == 1 else rng.choice(ties)


def penalized_reward(reward: float, phi_sa: float, penalty_weight: float) -> float:
    return reward - penalty_weight * (1.0 - phi_sa)


def td_target(reward: float, next_q, gamma: float, done: bool,
              algorithm: str = "q_learning") -> float:
    """Bootstrapped target.

    ``next_q`` is the full next-state row for Q-learning and the scalar
    Q(s', a') for SARSA; it is ignored when ``done``.
    """
    if done:
        return reward
    if algorithm == "q_learning":
        return reward + gamma * max(next_q)
    return reward + gamma * next_q


def threshold_decision(target: float, q_sa: float, cfg: AgentConfig) -> tuple[float, bool]:
    """Return ``(beta, rollback)`` for the condition ``target <= threshold * q_sa``."""
    if not (cfg.use_threshold_penalty or cfg.use_rollback):
        return 1.0, False
    if target <= cfg.threshold * q_sa:
        beta = cfg.penalty_factor if cfg.use_threshold_penalty else 1.0
        return beta, cfg.use_rollback
    return 1.0, False


def apply_update(q: QTable, state: int, action: int, alpha: float, beta: float, delta: float) -> None:
    row = q.values[state]
    new = row[action] + alpha * beta * delta
    if not math.isfinite(new):
        raise FloatingPointError(
            f"non-finite Q value at (state={state}, action={action}): {new}"
        )
    row[action] = new


class TabularAgent:
    """One learner: Q-table, optional reversibility table and pending-record buffer."""

    def __init__(self, config: AgentConfig, n_states: int, n_actions: int):
        self.config = config.validate()
        self.n_states = n_states
        self.n_actions = n_actions
        self.q = QTable(n_states, n_actions, config.q_init)
        if config.use_precedence:
            self.phi = PhiTable(n_states, n_actions, config.phi_init, config.ema_rate)
            self.buffer = PrecedenceBuffer(config.horizon_k)
        else:
            self.phi = None
            self.buffer = None
        self._sarsa = config.algorithm == "sarsa"
        self._gated = config.use_threshold_penalty or config.use_rollback
        self._next_action: int | None = None

    def reset_tables(self) -> None:
        self.q.reset()
        if self.phi is not None:
            self.phi.reset()
            self.buffer.clear()

    def begin_episode(self, state: int, rng: random.Random) -> None:
        """Drop pending records from the previous episode; SARSA picks its first action."""
        if self.buffer is not None:
            self.buffer.clear()
        self._next_action = None
        if self._sarsa:
            cfg = self.config
            self._next_action = select_action(self.q.values[state], cfg.epsilon, rng, cfg.tie_break)

    def step(self, env, state: int, t: int, rng: random.Random, sim_state: int | None = None) -> StepResult:
        """Act once from ``state``; ``t`` is the step counter before this step.

        ``state`` is the agent's (effective) state, used for action choice
        and learning. ``sim_state`` is where the simulator actually is; it
        differs from ``state`` only after a rollback that did not restore
        the environment. None means the two coincide.
        """
        cfg = self.config
        q = self.q.values
        if self._sarsa:
            action = self._next_action
            if action is None:
                raise RuntimeError("begin_episode() must be called before stepping a SARSA agent")
        else:
            action = select_action(q[state], cfg.epsilon, rng, cfg.tie_break)

        outcome = env.step(state if sim_state is None else sim_state, action)
        t += 1
        nxt, reward, done = outcome.next_state, outcome.reward, outcome.terminated

        if self.buffer is not None:
            self.buffer.resolve_and_update(self.phi, nxt, t)
            self.buffer.enqueue(state, action, t)
            r_eff = penalized_reward(reward, self.phi.values[state][action], cfg.penalty_weight)
        else:
            r_eff = reward

        next_action = None
        if done:
            next_q = None
        elif self._sarsa:
            next_action = select_action(q[nxt], cfg.epsilon, rng, cfg.tie_break)
            next_q = q[nxt][next_action]
        else:
            next_q = q[nxt]

        target = td_target(r_eff, next_q, cfg.gamma, done, cfg.algorithm)
        q_sa = q[state][action]
        delta = target - q_sa
        if self._gated:
            tested = target
            if not cfg.threshold_on_penalized_target:
                tested = td_target(reward, next_q, cfg.gamma, done, cfg.algorithm)
            beta, rollback = threshold_decision(tested, q_sa, cfg)
        else:
            beta, rollback = 1.0, False
        apply_update(self.q, state, action, cfg.alpha, beta, delta)

        fired = rollback and not done
        if fired:
            eff_state = state
            eff_action = action if self._sarsa else None
        else:
            eff_state = nxt
            eff_action = next_action
        self._next_action = eff_action
        return StepResult(action, outcome, delta, beta, fired, eff_state, eff_action)
