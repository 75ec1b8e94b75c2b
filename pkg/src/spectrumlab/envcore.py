"""The multi-agent spectrum environment.

Each timestep, every agent either transmits on one of ``num_channels``
discrete channels or stays silent, scripted entities occupy their
pattern-determined channels, and the environment computes per-channel
occupancy, per-agent observations, and rewards:

* ``dsa`` rewards transmitting on a channel with no other occupant
  (+1 clear, 0 silent, -1 any collision involving self);
* ``jam`` rewards co-channel transmission with a named target entity
  (+1 on target, 0 silent, -1 anywhere else, including when the target
  is idle).

Group rewards are the sum of member rewards; the mean variant divides by
group size.  With singleton groups both collapse to the individual reward,
which models a fully decentralized system.

The environment itself is deterministic given the action sequence; all
stochasticity (exploration, sampling) lives in the learners.  Agents act
simultaneously on the same observation snapshot, and each agent's own
transmission is excluded from its own observation so that a dsa learner
never mistakes its own signal for an occupied channel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .entities import entity_channel
from .scenario import AgentSpec, ScenarioSpec

# An agent action is either a channel index or None (no transmission).
AgentAction = int | None

# Classify-view labels: 0 is an empty channel, entities then agents get
# 1..E+A in scenario order, and a multi-occupant channel reads COLLISION.
EMPTY_LABEL = 0
COLLISION_LABEL = -1

# Action-index convention shared with the learners: index 0 is the
# no-transmit action, index k (1 <= k <= C) transmits on channel k-1.
NO_TRANSMIT_INDEX = 0


def num_actions(num_channels: int) -> int:
    """Size of the discrete action space: every channel plus no-transmit."""
    return num_channels + 1


def action_choice(index: int, num_channels: int) -> AgentAction:
    """Map an action index to an environment action."""
    if not 0 <= index <= num_channels:
        raise ValueError(f"action index must be in [0, {num_channels}], got {index}")
    return None if index == NO_TRANSMIT_INDEX else index - 1


def action_index(choice: AgentAction) -> int:
    """Map an environment action back to its action index."""
    return NO_TRANSMIT_INDEX if choice is None else choice + 1


def occupant_labels(spec: ScenarioSpec) -> dict[str, int]:
    """Stable classify labels: entities then agents, in scenario order."""
    labels: dict[str, int] = {}
    for ent in spec.entities:
        labels[ent.id] = len(labels) + 1
    for agent in spec.agents:
        labels[agent.id] = len(labels) + 1
    return labels


@dataclass(frozen=True, slots=True)
class OccupancyFrame:
    """Who transmitted on which channel during one timestep."""

    t: int
    occupants: tuple[tuple[str, ...], ...]

    def occupied_channels(self) -> tuple[int, ...]:
        return tuple(c for c, ids in enumerate(self.occupants) if ids)


@dataclass(frozen=True, slots=True)
class Observation:
    """An agent's view of the last ``history_length`` frames.

    ``frames`` is ordered oldest to newest and padded with empty frames
    while the episode is younger than the history window.  Detect frames
    hold 0/1 occupancy bits; classify frames hold occupant labels with
    ``COLLISION_LABEL`` marking multi-occupant channels.
    """

    mode: str
    frames: tuple[tuple[int, ...], ...]


def reward_dsa(action: AgentAction, frame: OccupancyFrame, self_id: str) -> int:
    """Dynamic-spectrum-access reward: +1 clear, 0 silent, -1 collision."""
    if action is None:
        return 0
    occupants = frame.occupants[action]
    for occupant in occupants:
        if occupant != self_id:
            return -1
    return 1


def reward_jam(action: AgentAction, target_channel: int | None) -> int:
    """Jamming reward: +1 on the target's channel, 0 silent, -1 elsewhere."""
    if action is None:
        return 0
    if target_channel is None:
        return -1
    return 1 if action == target_channel else -1


def group_reward(rewards: dict[str, int], members: tuple[str, ...]) -> int:
    """Group reward: sum of the members' individual rewards."""
    return sum(rewards[m] for m in members)


def mean_group_reward(rewards: dict[str, int], members: tuple[str, ...]) -> float:
    """Mean reward attributed to each agent in a group (sum / group size).

    Returned as a float; for singleton groups this equals the member's own
    reward exactly.
    """
    if not members:
        raise ValueError("group is empty")
    return group_reward(rewards, members) / len(members)


def build_observation(
    history: list[OccupancyFrame] | deque[OccupancyFrame],
    agent_spec: AgentSpec,
    labels: dict[str, int],
    num_channels: int,
) -> Observation:
    """Build an agent's observation from the most recent frames.

    The agent's own transmissions are removed before labelling, so a
    channel it occupied alone reads empty and a channel it shared with one
    other occupant reads as that occupant, not as a collision.
    """
    if not history:
        raise ValueError("history must contain at least one frame")
    frames: list[tuple[int, ...]] = []
    recent = list(history)[-agent_spec.history_length :]
    pad = agent_spec.history_length - len(recent)
    empty = (0,) * num_channels
    frames.extend([empty] * pad)
    classify = agent_spec.observation_mode == "classify"
    self_id = agent_spec.id
    for frame in recent:
        view: list[int] = []
        for occupants in frame.occupants:
            others = [o for o in occupants if o != self_id]
            if not others:
                view.append(0)
            elif classify:
                view.append(labels[others[0]] if len(others) == 1 else COLLISION_LABEL)
            else:
                view.append(1)
        frames.append(tuple(view))
    return Observation(mode=agent_spec.observation_mode, frames=tuple(frames))


@dataclass
class EnvState:
    """Mutable per-episode state; owned by exactly one :class:`SpectrumEnv`.

    Observation and action histories are stored independently per agent and
    always have length ``t``.  The reset observation is the starting view,
    not part of the history.
    """

    spec: ScenarioSpec
    seed: int
    t: int = 0
    observation_history: dict[str, list[Observation]] = field(default_factory=dict)
    action_history: dict[str, list[AgentAction]] = field(default_factory=dict)
    cumulative_rewards: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class StepResult:
    """Everything one environment step produces."""

    observations: dict[str, Observation]
    rewards: dict[str, int]
    group_rewards: tuple[int, ...]
    done: bool
    frame: OccupancyFrame


class SpectrumEnv:
    """Discrete-channel multi-agent environment over a parsed scenario.

    One instance is driven by one caller at a time (no internal locking);
    independent instances can run in parallel.  ``reset`` then repeated
    ``step`` calls advance an episode of ``spec.episode_length`` steps.
    """

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.labels = occupant_labels(spec)
        self._agent_ids = tuple(a.id for a in spec.agents)
        self._max_history = max((a.history_length for a in spec.agents), default=1)
        self._frames: deque[OccupancyFrame] = deque(maxlen=self._max_history)
        self.state = EnvState(spec=spec, seed=0)
        self._done = True

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return self._agent_ids

    @property
    def done(self) -> bool:
        return self._done

    def _entity_frame_channels(self, t: int) -> list[tuple[str, int]]:
        out = []
        for ent in self.spec.entities:
            channel = entity_channel(ent, t, self.spec.num_channels)
            if channel is not None:
                out.append((ent.id, channel))
        return out

    def reset(self, seed: int = 0) -> dict[str, Observation]:
        """Start a new episode; returns the initial per-agent observations.

        The initial view shows the t=0 entity occupancy with every agent
        idle.  Deterministic for a fixed ``(spec, seed)``.
        """
        self.state = EnvState(
            spec=self.spec,
            seed=seed,
            observation_history={a: [] for a in self._agent_ids},
            action_history={a: [] for a in self._agent_ids},
            cumulative_rewards={a: 0 for a in self._agent_ids},
        )
        self._done = False
        self._frames.clear()
        frame = self._assemble_frame(0, {})
        self._frames.append(frame)
        return self._observe_all(frame)

    def _assemble_frame(self, t: int, actions: dict[str, AgentAction]) -> OccupancyFrame:
        channels: list[list[str]] = [[] for _ in range(self.spec.num_channels)]
        for occupant_id, channel in self._entity_frame_channels(t):
            channels[channel].append(occupant_id)
        for agent_id in self._agent_ids:
            choice = actions.get(agent_id)
            if choice is not None:
                channels[choice].append(agent_id)
        return OccupancyFrame(t=t, occupants=tuple(tuple(c) for c in channels))

    def _observe_all(self, frame: OccupancyFrame) -> dict[str, Observation]:
        return {
            agent.id: build_observation(
                self._frames, agent, self.labels, self.spec.num_channels
            )
            for agent in self.spec.agents
        }

    def step(self, actions: dict[str, AgentAction]) -> StepResult:
        """Advance one timestep with one action per agent.

        The returned frame is the outcome of this step; the returned
        observations show it, so actions chosen from them take effect on
        the next step (one step of reaction latency).
        """
        if self._done:
            raise RuntimeError("episode is complete; call reset() first")
        missing = [a for a in self._agent_ids if a not in actions]
        extra = [a for a in actions if a not in self._agent_ids]
        if missing or extra:
            raise ValueError(
                f"actions must cover every agent exactly once "
                f"(missing: {missing}, unknown: {extra})"
            )
        for agent_id, choice in actions.items():
            if choice is not None and not 0 <= choice < self.spec.num_channels:
                raise ValueError(
                    f"action for '{agent_id}' must be None or in "
                    f"[0, {self.spec.num_channels}), got {choice}"
                )

        state = self.state
        t = state.t
        frame = self._assemble_frame(t, actions)

        target_channels: dict[str, int | None] = {}
        rewards: dict[str, int] = {}
        for agent in self.spec.agents:
            choice = actions[agent.id]
            if agent.reward_mode == "dsa":
                rewards[agent.id] = reward_dsa(choice, frame, agent.id)
            else:
                target = agent.target_entity
                if target not in target_channels:
                    target_channels[target] = entity_channel(
                        self.spec.entity(target), t, self.spec.num_channels
                    )
                rewards[agent.id] = reward_jam(choice, target_channels[target])

        group_rewards = tuple(group_reward(rewards, g) for g in self.spec.groups)

        self._frames.append(frame)
        observations = self._observe_all(frame)
        for agent_id in self._agent_ids:
            state.observation_history[agent_id].append(observations[agent_id])
            state.action_history[agent_id].append(actions[agent_id])
            state.cumulative_rewards[agent_id] += rewards[agent_id]
        state.t = t + 1
        self._done = state.t >= self.spec.episode_length

        return StepResult(
            observations=observations,
            rewards=rewards,
            group_rewards=group_rewards,
            done=self._done,
            frame=frame,
        )
