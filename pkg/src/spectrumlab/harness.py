"""Training and evaluation harness.

Runs the episode loop for a scenario with one learner per agent, logs
per-agent and per-group rewards for every training episode, renders frames
as colored terminal lines on request, and emits a CSV with both raw and
EWMA-smoothed reward columns so curves can be plotted from the data alone.

A full run is deterministic for a fixed (scenario, algorithm, seed): the
same triple always produces byte-identical CSV output.  Multiple runs can
execute concurrently as long as each writes to its own output files.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterator, Sequence

from .envcore import (
    OccupancyFrame,
    SpectrumEnv,
    action_choice,
    num_actions,
    occupant_labels,
)
from .learners import (
    LearnerConfig,
    PgStep,
    QPolicy,
    ReplayBuffer,
    SoftmaxPolicy,
    Transition,
    encode_observation,
    epsilon_at,
    pg_update,
    q_update,
    save_checkpoint,
    select_action,
)
from .scenario import ScenarioSpec, load_scenario

ALGORITHMS = ("q", "reinforce")
RENDER_MODES = ("off", "terminal")


def ewma(series: Sequence[float], beta: float) -> list[float]:
    """Exponentially weighted moving average with s0 = x0.

    s_t = beta * s_{t-1} + (1 - beta) * x_t.  Starting at the first sample
    avoids warm-up bias: a constant series is a fixed point.
    """
    if len(series) == 0:
        raise ValueError("series must be nonempty")
    if not 0 <= beta < 1:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    smoothed = [float(series[0])]
    for x in series[1:]:
        smoothed.append(beta * smoothed[-1] + (1.0 - beta) * x)
    return smoothed


@dataclass(frozen=True)
class EpisodeRecord:
    """Rewards accrued during one training episode."""

    episode: int
    agent_rewards: dict[str, int]
    total: int
    group_rewards: tuple[int, ...]


@dataclass
class EpisodeLog:
    """Per-episode reward series for a whole run, plus run metadata."""

    scenario_id: str
    algorithm: str
    seed: int
    ewma_beta: float
    agent_ids: tuple[str, ...]
    groups: tuple[tuple[str, ...], ...]
    config: dict = field(default_factory=dict)
    records: list[EpisodeRecord] = field(default_factory=list)

    def append(self, record: EpisodeRecord) -> None:
        if record.episode != len(self.records):
            raise ValueError(
                f"episode indices must be contiguous from 0; "
                f"expected {len(self.records)}, got {record.episode}"
            )
        if record.total != sum(record.agent_rewards.values()):
            raise ValueError("episode total must equal the sum of per-agent rewards")
        self.records.append(record)

    def agent_series(self, agent_id: str) -> list[int]:
        return [r.agent_rewards[agent_id] for r in self.records]

    def totals(self) -> list[int]:
        return [r.total for r in self.records]


# A stable palette of distinct terminal colors; occupants cycle through it
# in scenario order (entities first, then agents).
_PALETTE = (31, 32, 33, 34, 35, 36, 91, 92, 93, 94, 95, 96)
_COLLISION_CELL = "\x1b[1;91mX\x1b[0m"
_EMPTY_CELL = "\x1b[2m.\x1b[0m"


def _colored(text: str, color_index: int) -> str:
    return f"\x1b[{_PALETTE[color_index % len(_PALETTE)]}m{text}\x1b[0m"


def render_frame(
    frame: OccupancyFrame,
    labels: dict[str, int],
    cumulative_rewards: dict[str, int],
) -> list[str]:
    """Render one occupancy frame as terminal text.

    One cell per channel: a dim dot for empty, a colored block per single
    occupant (stable color per identifier), and a bright ``X`` marker for
    any collision.  One cumulative-reward line per agent follows, in the
    agent's own color.  Pure text generation; no state is touched.
    """
    cells = []
    for occupants in frame.occupants:
        if not occupants:
            cells.append(_EMPTY_CELL)
        elif len(occupants) == 1:
            cells.append(_colored("#", labels[occupants[0]] - 1))
        else:
            cells.append(_COLLISION_CELL)
    lines = [f"t={frame.t:>4} [" + "".join(cells) + "]"]
    for agent_id, total in cumulative_rewards.items():
        lines.append(_colored(f"  {agent_id}: {total:+d}", labels[agent_id] - 1))
    return lines


CSV_HEADER = "episode,agent_id,reward,ewma_reward,group_id,group_reward,total"


def episode_csv_text(log: EpisodeLog) -> str:
    """CSV rendering of a log: one row per (episode, agent), LF endings."""
    if not log.records:
        raise ValueError("log must contain at least one episode")
    group_of = {}
    for gi, group in enumerate(log.groups):
        for member in group:
            group_of[member] = gi
    smoothed = {
        agent_id: ewma(log.agent_series(agent_id), log.ewma_beta)
        for agent_id in log.agent_ids
    }
    lines = [CSV_HEADER]
    for record in log.records:
        for agent_id in log.agent_ids:
            gi = group_of[agent_id]
            lines.append(
                f"{record.episode},{agent_id},{record.agent_rewards[agent_id]},"
                f"{smoothed[agent_id][record.episode]!r},{gi},"
                f"{record.group_rewards[gi]},{record.total}"
            )
    return "\n".join(lines) + "\n"


def write_episode_csv(log: EpisodeLog, path: str | Path) -> Path:
    """Write the per-episode CSV (UTF-8, LF line endings)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(episode_csv_text(log))
    return path


def read_episode_csv(path: str | Path) -> list[dict]:
    """Parse a CSV written by :func:`write_episode_csv`, restoring types."""
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    for row in rows:
        row["episode"] = int(row["episode"])
        row["reward"] = int(row["reward"])
        row["ewma_reward"] = float(row["ewma_reward"])
        row["group_id"] = int(row["group_id"])
        row["group_reward"] = int(row["group_reward"])
        row["total"] = int(row["total"])
    return rows


@dataclass
class RunConfig:
    """Everything one training run needs.

    ``scenario`` may be a path to a scenario file or an already-parsed
    :class:`ScenarioSpec` (used by in-memory callers such as the service;
    ``scenario_id`` labels the run in that case).  With ``out_dir`` set,
    the run writes ``<id>_<algo>_s<seed>.csv`` and a policy checkpoint
    alongside it.
    """

    scenario: str | Path | ScenarioSpec
    algorithm: str = "q"
    episodes: int = 500
    seed: int = 0
    ewma_beta: float = 0.75
    out_dir: str | Path | None = None
    render: str = "off"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    scenario_id: str | None = None

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got '{self.algorithm}'")
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if not 0 <= self.ewma_beta < 1:
            raise ValueError(f"ewma_beta must be in [0, 1), got {self.ewma_beta}")
        if self.render not in RENDER_MODES:
            raise ValueError(f"render must be one of {RENDER_MODES}, got '{self.render}'")


@dataclass
class RunResult:
    """A finished training run: the log, the learned policies, any files."""

    log: EpisodeLog
    policies: dict[str, QPolicy | SoftmaxPolicy]
    csv_path: Path | None = None
    checkpoint_path: Path | None = None


def _resolve_scenario(config: RunConfig) -> tuple[ScenarioSpec, str]:
    if isinstance(config.scenario, ScenarioSpec):
        return config.scenario, config.scenario_id or "inline"
    path = Path(config.scenario)
    return load_scenario(path), config.scenario_id or path.stem


def _agent_rngs(agent_ids: Sequence[str], seed: int) -> dict[str, random.Random]:
    master = random.Random(seed)
    return {agent_id: random.Random(master.getrandbits(64)) for agent_id in agent_ids}


def training_events(config: RunConfig) -> Iterator[dict]:
    """Run one training job, yielding progress events as they happen.

    Events: ``{"type": "frame", "episode", "t", "lines"}`` for each step
    when rendering is on, ``{"type": "episode", "record"}`` after each
    episode, and a final ``{"type": "result", "result": RunResult}``.
    Fully deterministic for a fixed config.
    """
    spec, scenario_id = _resolve_scenario(config)
    learner_cfg = config.learner
    env = SpectrumEnv(spec)
    agent_ids = env.agent_ids
    actions_n = num_actions(spec.num_channels)
    channels = spec.num_channels
    rngs = _agent_rngs(agent_ids, config.seed)
    rendering = config.render == "terminal"

    q_policies: dict[str, QPolicy] = {}
    buffers: dict[str, ReplayBuffer] = {}
    soft_policies: dict[str, SoftmaxPolicy] = {}
    if config.algorithm == "q":
        q_policies = {a: QPolicy(actions_n) for a in agent_ids}
        buffers = {a: ReplayBuffer(learner_cfg.replay_capacity) for a in agent_ids}
    else:
        soft_policies = {a: SoftmaxPolicy(actions_n) for a in agent_ids}

    log = EpisodeLog(
        scenario_id=scenario_id,
        algorithm=config.algorithm,
        seed=config.seed,
        ewma_beta=config.ewma_beta,
        agent_ids=agent_ids,
        groups=spec.groups,
        config={"episodes": config.episodes, "learner": asdict(learner_cfg)},
    )

    global_step = 0
    for episode in range(config.episodes):
        observations = env.reset(seed=config.seed)
        keys = {a: encode_observation(observations[a]) for a in agent_ids}
        episode_rewards = {a: 0 for a in agent_ids}
        episode_groups = [0] * len(spec.groups)
        trajectories: dict[str, list[PgStep]] = {a: [] for a in agent_ids}

        for _ in range(spec.episode_length):
            if config.algorithm == "q":
                eps = epsilon_at(learner_cfg, global_step)
                indices = {
                    a: select_action(q_policies[a], keys[a], eps, rngs[a])
                    for a in agent_ids
                }
            else:
                indices = {
                    a: soft_policies[a].sample_action(keys[a], rngs[a])
                    for a in agent_ids
                }
            result = env.step(
                {a: action_choice(indices[a], channels) for a in agent_ids}
            )
            for a in agent_ids:
                reward = result.rewards[a]
                next_key = encode_observation(result.observations[a])
                if config.algorithm == "q":
                    buffer = buffers[a]
                    buffer.push(
                        Transition(keys[a], indices[a], reward, next_key, result.done)
                    )
                    if len(buffer) >= learner_cfg.batch_size:
                        for sampled in buffer.sample(learner_cfg.batch_size, rngs[a]):
                            q_update_inline(
                                q_policies[a], sampled, learner_cfg.alpha, learner_cfg.gamma
                            )
                else:
                    trajectories[a].append(PgStep(keys[a], indices[a], reward))
                keys[a] = next_key
                episode_rewards[a] += reward
            for gi, value in enumerate(result.group_rewards):
                episode_groups[gi] += value
            global_step += 1
            if rendering:
                yield {
                    "type": "frame",
                    "episode": episode,
                    "t": result.frame.t,
                    "lines": render_frame(
                        result.frame, env.labels, env.state.cumulative_rewards
                    ),
                }

        if config.algorithm == "reinforce":
            for a in agent_ids:
                pg_update_inline(
                    soft_policies[a],
                    trajectories[a],
                    learner_cfg.gamma,
                    learner_cfg.pg_step_size,
                )

        record = EpisodeRecord(
            episode=episode,
            agent_rewards=dict(episode_rewards),
            total=sum(episode_rewards.values()),
            group_rewards=tuple(episode_groups),
        )
        log.append(record)
        yield {"type": "episode", "record": record}

    policies = q_policies if config.algorithm == "q" else soft_policies
    result = RunResult(log=log, policies=dict(policies))
    if config.out_dir is not None:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{scenario_id}_{config.algorithm}_s{config.seed}"
        result.csv_path = write_episode_csv(log, out_dir / f"{stem}.csv")
        result.checkpoint_path = save_checkpoint(
            out_dir / f"{stem}.ckpt.json",
            policies,
            algorithm=config.algorithm,
            metadata={"scenario_id": scenario_id, "seed": config.seed},
        )
    yield {"type": "result", "result": result}


# Imported here under stable local names so the hot loop avoids repeated
# attribute lookups on the learners module.
from .learners import pg_update as pg_update_inline  # noqa: E402
from .learners import q_update as q_update_inline  # noqa: E402


def run_training(
    config: RunConfig,
    on_event: Callable[[dict], None] | None = None,
) -> RunResult:
    """Run the full episode loop and return the completed result.

    Progress events go to ``on_event`` when given; otherwise rendered
    frames (if rendering is enabled) are printed to stdout.
    """
    result: RunResult | None = None
    for event in training_events(config):
        if event["type"] == "result":
            result = event["result"]
        elif on_event is not None:
            on_event(event)
        elif event["type"] == "frame":
            for line in event["lines"]:
                print(line)
    assert result is not None
    return result


def rollout(
    spec: ScenarioSpec,
    policies: dict[str, QPolicy | SoftmaxPolicy],
    *,
    episodes: int = 1,
    seed: int = 0,
    greedy: bool = True,
    render: str = "off",
    on_event: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Evaluate trained policies without learning.

    Q policies always act greedily (argmax with lowest-index tie-break);
    softmax policies act greedily when ``greedy`` is set and sample from
    their action distribution otherwise.  Returns one record per episode.
    """
    if render not in RENDER_MODES:
        raise ValueError(f"render must be one of {RENDER_MODES}, got '{render}'")
    env = SpectrumEnv(spec)
    missing = [a for a in env.agent_ids if a not in policies]
    if missing:
        raise ValueError(f"checkpoint is missing policies for agents: {missing}")
    rngs = _agent_rngs(env.agent_ids, seed)
    channels = spec.num_channels
    results = []
    for episode in range(episodes):
        observations = env.reset(seed=seed)
        keys = {a: encode_observation(observations[a]) for a in env.agent_ids}
        episode_rewards = {a: 0 for a in env.agent_ids}
        episode_groups = [0] * len(spec.groups)
        for _ in range(spec.episode_length):
            indices = {}
            for a in env.agent_ids:
                policy = policies[a]
                if isinstance(policy, SoftmaxPolicy) and not greedy:
                    indices[a] = policy.sample_action(keys[a], rngs[a])
                else:
                    indices[a] = policy.greedy_action(keys[a])
            result = env.step(
                {a: action_choice(indices[a], channels) for a in env.agent_ids}
            )
            for a in env.agent_ids:
                keys[a] = encode_observation(result.observations[a])
                episode_rewards[a] += result.rewards[a]
            for gi, value in enumerate(result.group_rewards):
                episode_groups[gi] += value
            if render == "terminal" and on_event is not None:
                on_event(
                    {
                        "type": "frame",
                        "episode": episode,
                        "t": result.frame.t,
                        "lines": render_frame(
                            result.frame, env.labels, env.state.cumulative_rewards
                        ),
                    }
                )
        results.append(
            {
                "episode": episode,
                "agent_rewards": dict(episode_rewards),
                "total": sum(episode_rewards.values()),
                "group_rewards": list(episode_groups),
            }
        )
    return results
