"""Tabular learners: Q-learning with FIFO experience replay, and REINFORCE.

Observation spaces here are small enough to tabulate exactly, so the
value-based learner keeps a plain table keyed by encoded observations and
updates it with the Bellman backup

    Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))

with the bootstrap term dropped on terminal transitions.  The replay
buffer is a fixed-capacity FIFO: once full, every push evicts the oldest
transition, which is exactly the mechanism behind replay-driven forgetting
in long runs.

The policy-gradient learner is plain Monte-Carlo REINFORCE on a tabular
softmax policy: after each complete episode the logits move along the
return-weighted log-likelihood gradient.

Each agent owns its own learner and is trained only on its own
observations, actions, and rewards (decentralized training).  All
randomness flows through explicitly passed ``random.Random`` instances.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .envcore import Observation


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by the training loop and the learners.

    The replay capacity default matches a 60,000-transition buffer; the
    exploration schedule decays linearly from ``epsilon_start`` to
    ``epsilon_end`` over ``epsilon_decay_steps`` environment steps and
    stays at the floor afterwards.
    """

    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_steps: int = 20_000
    replay_capacity: int = 60_000
    batch_size: int = 32
    pg_step_size: float = 0.01

    def __post_init__(self) -> None:
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be >= 1")
        if self.replay_capacity < 1:
            raise ValueError("replay_capacity must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.pg_step_size <= 0:
            raise ValueError("pg_step_size must be > 0")


def epsilon_at(config: LearnerConfig, step: int) -> float:
    """Exploration rate after ``step`` environment steps."""
    if step >= config.epsilon_decay_steps:
        return config.epsilon_end
    span = config.epsilon_start - config.epsilon_end
    return config.epsilon_start - span * step / config.epsilon_decay_steps


def encode_observation(obs: Observation) -> str:
    """Stable, injective string key for an observation.

    The mode is part of the key, so a classify view never aliases the
    detect view obtained by thresholding it.
    """
    return obs.mode + "|" + ";".join(",".join(map(str, frame)) for frame in obs.frames)


class Transition(NamedTuple):
    """One experienced step, in encoded-observation space."""

    key: str
    action: int
    reward: float
    next_key: str
    done: bool


class QPolicy:
    """Observation-keyed action-value table.

    Unseen observations read as a row of ``default_value``; rows are only
    materialized when written to.
    """

    def __init__(self, num_actions: int, default_value: float = 0.0):
        if num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        self.num_actions = num_actions
        self.default_value = default_value
        self.table: dict[str, list[float]] = {}

    def values(self, key: str) -> list[float]:
        """Action values for ``key`` (read-only; does not materialize)."""
        row = self.table.get(key)
        if row is None:
            return [self.default_value] * self.num_actions
        return row

    def row(self, key: str) -> list[float]:
        """Mutable action-value row for ``key``, materializing if needed."""
        row = self.table.get(key)
        if row is None:
            row = [self.default_value] * self.num_actions
            self.table[key] = row
        return row

    def greedy_action(self, key: str) -> int:
        values = self.values(key)
        return values.index(max(values))

    def __len__(self) -> int:
        return len(self.table)


def select_action(policy: QPolicy, key: str, epsilon: float, rng: random.Random) -> int:
    """Epsilon-greedy action index; greedy ties break to the lowest index."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return rng.randrange(policy.num_actions)
    return policy.greedy_action(key)


def q_update(policy: QPolicy, transition: Transition, alpha: float, gamma: float) -> QPolicy:
    """Apply one Bellman backup in place; only entry (s, a) changes."""
    if alpha == 0.0:
        return policy
    target = transition.reward
    if not transition.done:
        target += gamma * max(policy.values(transition.next_key))
    row = policy.row(transition.key)
    row[transition.action] += alpha * (target - row[transition.action])
    return policy


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling.

    Implemented as a ring so that pushes are O(1) and sampling does not
    copy the whole buffer; eviction is strictly oldest-first.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._slots: list[Transition | None] = [None] * capacity
        self._next = 0
        self._size = 0

    def push(self, transition: Transition) -> None:
        self._slots[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        if self._size < self.capacity:
            self._size += 1

    def sample(self, batch_size: int, rng: random.Random) -> list[Transition]:
        """Uniform sample without replacement."""
        if batch_size > self._size:
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer of {self._size}"
            )
        indices = rng.sample(range(self._size), batch_size)
        if self._size < self.capacity:
            return [self._slots[i] for i in indices]
        start = self._next
        return [self._slots[(start + i) % self.capacity] for i in indices]

    @property
    def entries(self) -> tuple[Transition, ...]:
        """Contents in insertion order, oldest first."""
        if self._size < self.capacity:
            return tuple(self._slots[: self._size])
        return tuple(
            self._slots[(self._next + i) % self.capacity] for i in range(self.capacity)
        )

    def __len__(self) -> int:
        return self._size


def replay_push(buffer: ReplayBuffer, transition: Transition) -> ReplayBuffer:
    """Append a transition, evicting the oldest when over capacity."""
    buffer.push(transition)
    return buffer


def replay_sample(buffer: ReplayBuffer, batch_size: int, rng: random.Random) -> list[Transition]:
    """Uniform batch without replacement."""
    return buffer.sample(batch_size, rng)


class SoftmaxPolicy:
    """Tabular softmax policy over action logits."""

    def __init__(self, num_actions: int):
        if num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        self.num_actions = num_actions
        self.logits: dict[str, list[float]] = {}

    def _row(self, key: str) -> list[float]:
        row = self.logits.get(key)
        if row is None:
            row = [0.0] * self.num_actions
            self.logits[key] = row
        return row

    def probabilities(self, key: str) -> list[float]:
        logits = self.logits.get(key, [0.0] * self.num_actions)
        peak = max(logits)
        weights = [math.exp(v - peak) for v in logits]
        total = sum(weights)
        return [w / total for w in weights]

    def sample_action(self, key: str, rng: random.Random) -> int:
        threshold = rng.random()
        cumulative = 0.0
        probs = self.probabilities(key)
        for action, p in enumerate(probs):
            cumulative += p
            if threshold < cumulative:
                return action
        return self.num_actions - 1

    def greedy_action(self, key: str) -> int:
        probs = self.probabilities(key)
        return probs.index(max(probs))


def discounted_returns(rewards: Sequence[float], gamma: float) -> list[float]:
    """Return-to-go for each step of one episode."""
    returns = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        returns[t] = acc
    return returns


class PgStep(NamedTuple):
    """One step of a policy-gradient trajectory."""

    key: str
    action: int
    reward: float


def pg_update(
    policy: SoftmaxPolicy,
    trajectory: Sequence[PgStep],
    gamma: float,
    step_size: float,
) -> SoftmaxPolicy:
    """REINFORCE update from one complete episode, applied in place.

    The logits move along sum_t G_t * grad log pi(a_t | s_t); with all-zero
    returns the parameters are unchanged.
    """
    if not trajectory:
        raise ValueError("trajectory must contain at least one step")
    returns = discounted_returns([step.reward for step in trajectory], gamma)
    for step, ret in zip(trajectory, returns):
        if ret == 0.0:
            continue
        probs = policy.probabilities(step.key)
        row = policy._row(step.key)
        scale = step_size * ret
        for action in range(policy.num_actions):
            indicator = 1.0 if action == step.action else 0.0
            row[action] += scale * (indicator - probs[action])
    return policy


CHECKPOINT_VERSION = 1


def checkpoint_to_dict(
    policies: Mapping[str, QPolicy | SoftmaxPolicy],
    algorithm: str,
    metadata: dict | None = None,
) -> dict:
    """Versioned JSON-ready snapshot of per-agent policies."""
    agents = {}
    for agent_id, policy in policies.items():
        if isinstance(policy, QPolicy):
            agents[agent_id] = {
                "kind": "q",
                "num_actions": policy.num_actions,
                "default_value": policy.default_value,
                "table": policy.table,
            }
        elif isinstance(policy, SoftmaxPolicy):
            agents[agent_id] = {
                "kind": "softmax",
                "num_actions": policy.num_actions,
                "logits": policy.logits,
            }
        else:
            raise TypeError(f"unsupported policy type {type(policy).__name__}")
    return {
        "version": CHECKPOINT_VERSION,
        "algorithm": algorithm,
        "metadata": metadata or {},
        "policies": agents,
    }


def checkpoint_from_dict(data: Mapping) -> tuple[dict[str, QPolicy | SoftmaxPolicy], str, dict]:
    """Rebuild per-agent policies from a checkpoint dictionary."""
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    policies: dict[str, QPolicy | SoftmaxPolicy] = {}
    for agent_id, entry in data["policies"].items():
        kind = entry.get("kind")
        if kind == "q":
            policy = QPolicy(entry["num_actions"], entry.get("default_value", 0.0))
            policy.table = {k: list(map(float, v)) for k, v in entry["table"].items()}
            policies[agent_id] = policy
        elif kind == "softmax":
            soft = SoftmaxPolicy(entry["num_actions"])
            soft.logits = {k: list(map(float, v)) for k, v in entry["logits"].items()}
            policies[agent_id] = soft
        else:
            raise ValueError(f"unsupported policy kind {kind!r} for agent '{agent_id}'")
    return policies, data.get("algorithm", "q"), dict(data.get("metadata", {}))


def save_checkpoint(
    path: str | Path,
    policies: Mapping[str, QPolicy | SoftmaxPolicy],
    algorithm: str,
    metadata: dict | None = None,
) -> Path:
    """Write a policy checkpoint for resuming or greedy evaluation."""
    path = Path(path)
    path.write_text(
        json.dumps(checkpoint_to_dict(policies, algorithm, metadata)) + "\n",
        encoding="utf-8",
    )
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, QPolicy | SoftmaxPolicy], str, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    return checkpoint_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
