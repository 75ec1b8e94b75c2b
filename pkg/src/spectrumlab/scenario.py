"""Scenario definitions: the JSON format that configures every simulation run.

A scenario document is a JSON object with the top-level keys ``comments``,
``environment``, ``entities``, ``agents``, and ``groups``::

    { "comments": "<free text>",
      "environment": { "num_channels": <int>, "episode_length": <int> },
      "entities": [ { "id": "<string>", "behavior": "constant"|"hop",
                      "start_channel": <int>, "stride": <int, hop only> } ],
      "agents":   [ { "id": "<string>", "observation_mode": "detect"|"classify",
                      "reward_mode": "dsa"|"jam",
                      "target_entity": "<entity id, jam only>",
                      "history_length": <int, default 1> } ],
      "groups":   [ [ "<agent id>", ... ], ... ]   // optional
    }

Unknown keys are hard errors: a typo that silently changes an experiment is
the worst failure mode for a testbed.  When ``groups`` is omitted, every
agent is placed in its own singleton group (a fully decentralized setup).

Parsing is pure and total: every well-formed JSON text either yields a
:class:`ScenarioSpec` or raises :class:`ScenarioError` with a diagnostic
naming the offending path (for example ``agents[2].target_entity``).
Parsed specs are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

BEHAVIORS = ("constant", "hop")
OBSERVATION_MODES = ("detect", "classify")
REWARD_MODES = ("dsa", "jam")


class ScenarioError(ValueError):
    """A scenario document is malformed or violates an invariant."""


@dataclass(frozen=True)
class EntitySpec:
    """A scripted, non-learning transmitter.

    ``stride`` applies to ``hop`` behavior only.  ``duty`` is a programmatic
    escape hatch (an entity with ``duty=False`` never transmits); it is not
    part of the JSON format, where entities always transmit.
    """

    id: str
    behavior: str
    start_channel: int
    stride: int | None = None
    duty: bool = True


@dataclass(frozen=True)
class AgentSpec:
    """A learning transmitter: what it observes and how it is rewarded."""

    id: str
    observation_mode: str
    reward_mode: str
    target_entity: str | None = None
    history_length: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    """A full simulation description.

    ``groups`` partitions the agent identifiers; group rewards are
    aggregated over each group's members.  Singleton groups model a
    decentralized reward system.
    """

    num_channels: int
    episode_length: int
    entities: tuple[EntitySpec, ...] = ()
    agents: tuple[AgentSpec, ...] = ()
    groups: tuple[tuple[str, ...], ...] = ()
    comments: str = ""

    def agent(self, agent_id: str) -> AgentSpec:
        for spec in self.agents:
            if spec.id == agent_id:
                return spec
        raise KeyError(agent_id)

    def entity(self, entity_id: str) -> EntitySpec:
        for spec in self.entities:
            if spec.id == entity_id:
                return spec
        raise KeyError(entity_id)


def _require(value: Any, cls: type, path: str, what: str) -> Any:
    # bool is an int subclass; never accept it where an int is required
    if not isinstance(value, cls) or (cls is int and isinstance(value, bool)):
        raise ScenarioError(f"{path}: expected {what}, got {type(value).__name__}")
    return value


def _reject_unknown(obj: Mapping[str, Any], allowed: tuple[str, ...], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f"{path}: unknown key '{key}'")


def _parse_environment(obj: Any) -> tuple[int, int]:
    env = _require(obj, dict, "environment", "an object")
    _reject_unknown(env, ("num_channels", "episode_length"), "environment")
    for name in ("num_channels", "episode_length"):
        if name not in env:
            raise ScenarioError(f"environment.{name}: missing required field")
        value = _require(env[name], int, f"environment.{name}", "an integer")
        if value < 1:
            raise ScenarioError(f"environment.{name}: must be >= 1, got {value}")
    return env["num_channels"], env["episode_length"]


def _parse_entity(obj: Any, index: int, num_channels: int) -> EntitySpec:
    path = f"entities[{index}]"
    ent = _require(obj, dict, path, "an object")
    _reject_unknown(ent, ("id", "behavior", "start_channel", "stride"), path)
    for name in ("id", "behavior", "start_channel"):
        if name not in ent:
            raise ScenarioError(f"{path}.{name}: missing required field")
    entity_id = _require(ent["id"], str, f"{path}.id", "a string")
    if not entity_id:
        raise ScenarioError(f"{path}.id: must be nonempty")
    behavior = _require(ent["behavior"], str, f"{path}.behavior", "a string")
    if behavior not in BEHAVIORS:
        raise ScenarioError(f"{path}.behavior: must be one of {BEHAVIORS}, got '{behavior}'")
    start = _require(ent["start_channel"], int, f"{path}.start_channel", "an integer")
    if not 0 <= start < num_channels:
        raise ScenarioError(
            f"{path}.start_channel: must be in [0, {num_channels}), got {start}"
        )
    stride: int | None = None
    if behavior == "hop":
        stride = 1
        if "stride" in ent:
            stride = _require(ent["stride"], int, f"{path}.stride", "an integer")
        if stride == 0:
            raise ScenarioError(f"{path}.stride: must be nonzero for hop behavior")
    elif "stride" in ent:
        raise ScenarioError(f"{path}.stride: only valid for hop behavior")
    return EntitySpec(id=entity_id, behavior=behavior, start_channel=start, stride=stride)


def _parse_agent(obj: Any, index: int, entity_ids: set[str]) -> AgentSpec:
    path = f"agents[{index}]"
    agent = _require(obj, dict, path, "an object")
    _reject_unknown(
        agent,
        ("id", "observation_mode", "reward_mode", "target_entity", "history_length"),
        path,
    )
    for name in ("id", "observation_mode", "reward_mode"):
        if name not in agent:
            raise ScenarioError(f"{path}.{name}: missing required field")
    agent_id = _require(agent["id"], str, f"{path}.id", "a string")
    if not agent_id:
        raise ScenarioError(f"{path}.id: must be nonempty")
    mode = _require(agent["observation_mode"], str, f"{path}.observation_mode", "a string")
    if mode not in OBSERVATION_MODES:
        raise ScenarioError(
            f"{path}.observation_mode: must be one of {OBSERVATION_MODES}, got '{mode}'"
        )
    reward = _require(agent["reward_mode"], str, f"{path}.reward_mode", "a string")
    if reward not in REWARD_MODES:
        raise ScenarioError(
            f"{path}.reward_mode: must be one of {REWARD_MODES}, got '{reward}'"
        )
    target: str | None = None
    if reward == "jam":
        if "target_entity" not in agent:
            raise ScenarioError(f"{path}.target_entity: required for jam reward mode")
        target = _require(agent["target_entity"], str, f"{path}.target_entity", "a string")
        if target not in entity_ids:
            raise ScenarioError(
                f"{path}.target_entity: names unknown entity '{target}'"
            )
    elif "target_entity" in agent:
        raise ScenarioError(f"{path}.target_entity: only valid for jam reward mode")
    history = 1
    if "history_length" in agent:
        history = _require(agent["history_length"], int, f"{path}.history_length", "an integer")
        if history < 1:
            raise ScenarioError(f"{path}.history_length: must be >= 1, got {history}")
    return AgentSpec(
        id=agent_id,
        observation_mode=mode,
        reward_mode=reward,
        target_entity=target,
        history_length=history,
    )


def _parse_groups(obj: Any, agents: tuple[AgentSpec, ...]) -> tuple[tuple[str, ...], ...]:
    groups_raw = _require(obj, list, "groups", "a list of lists")
    groups: list[tuple[str, ...]] = []
    for i, group in enumerate(groups_raw):
        members = _require(group, list, f"groups[{i}]", "a list of agent ids")
        for j, member in enumerate(members):
            _require(member, str, f"groups[{i}][{j}]", "a string")
        groups.append(tuple(members))
    return tuple(groups)


def validate_groups(spec: ScenarioSpec) -> list[str]:
    """Check that ``spec.groups`` partitions the agent identifiers.

    Returns one description per violation (empty list means the groups are
    a valid partition).  Violations are returned, never raised, so callers
    can report all of them at once.
    """
    violations: list[str] = []
    agent_ids = [a.id for a in spec.agents]
    seen: set[str] = set()
    for i, group in enumerate(spec.groups):
        if not group:
            violations.append(f"groups[{i}]: group is empty")
        for member in group:
            if member not in agent_ids:
                violations.append(f"groups[{i}]: names unknown agent '{member}'")
            elif member in seen:
                violations.append(f"groups[{i}]: agent '{member}' appears in more than one group")
            else:
                seen.add(member)
    for agent_id in agent_ids:
        if agent_id not in seen:
            violations.append(f"agent '{agent_id}' is not in any group")
    return violations


def scenario_from_document(document: Mapping[str, Any]) -> ScenarioSpec:
    """Build a validated :class:`ScenarioSpec` from a decoded JSON object."""
    doc = _require(document, dict, "scenario", "an object")
    _reject_unknown(doc, ("comments", "environment", "entities", "agents", "groups"), "scenario")
    if "environment" not in doc:
        raise ScenarioError("environment: missing required field")
    num_channels, episode_length = _parse_environment(doc["environment"])

    comments = ""
    if "comments" in doc:
        comments = _require(doc["comments"], str, "comments", "a string")

    entities_raw = _require(doc.get("entities", []), list, "entities", "a list")
    entities = tuple(
        _parse_entity(obj, i, num_channels) for i, obj in enumerate(entities_raw)
    )
    seen: set[str] = set()
    for i, ent in enumerate(entities):
        if ent.id in seen:
            raise ScenarioError(f"entities[{i}].id: duplicate identifier '{ent.id}'")
        seen.add(ent.id)
    entity_ids = seen

    agents_raw = _require(doc.get("agents", []), list, "agents", "a list")
    agents = tuple(_parse_agent(obj, i, entity_ids) for i, obj in enumerate(agents_raw))
    seen = set(entity_ids)
    for i, agent in enumerate(agents):  # ids unique across entities and agents
        if agent.id in seen:
            raise ScenarioError(f"agents[{i}].id: duplicate identifier '{agent.id}'")
        seen.add(agent.id)

    if "groups" in doc:
        groups = _parse_groups(doc["groups"], agents)
    else:
        groups = tuple((a.id,) for a in agents)

    spec = ScenarioSpec(
        num_channels=num_channels,
        episode_length=episode_length,
        entities=entities,
        agents=agents,
        groups=groups,
        comments=comments,
    )
    violations = validate_groups(spec)
    if violations:
        raise ScenarioError("groups: " + "; ".join(violations))
    return spec


def parse_scenario(document: str) -> ScenarioSpec:
    """Parse a JSON scenario text into a validated :class:`ScenarioSpec`."""
    try:
        decoded = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return scenario_from_document(decoded)


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Parse the scenario file at ``path``."""
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_to_document(spec: ScenarioSpec) -> dict[str, Any]:
    """Serialize a spec back to its JSON document form.

    Round-trips: ``scenario_from_document(scenario_to_document(spec))``
    equals ``spec`` for any spec obtained from parsing.  Entities with
    ``duty=False`` are programmatic-only and cannot be serialized.
    """
    entities = []
    for ent in spec.entities:
        if not ent.duty:
            raise ScenarioError(f"entity '{ent.id}': duty=False is not representable in JSON")
        obj: dict[str, Any] = {
            "id": ent.id,
            "behavior": ent.behavior,
            "start_channel": ent.start_channel,
        }
        if ent.behavior == "hop":
            obj["stride"] = ent.stride
        entities.append(obj)
    agents = []
    for agent in spec.agents:
        obj = {
            "id": agent.id,
            "observation_mode": agent.observation_mode,
            "reward_mode": agent.reward_mode,
        }
        if agent.target_entity is not None:
            obj["target_entity"] = agent.target_entity
        obj["history_length"] = agent.history_length
        agents.append(obj)
    return {
        "comments": spec.comments,
        "environment": {
            "num_channels": spec.num_channels,
            "episode_length": spec.episode_length,
        },
        "entities": entities,
        "agents": agents,
        "groups": [list(group) for group in spec.groups],
    }


def shipped_scenarios() -> dict[str, Path]:
    """Map the names of the bundled scenario files to their paths."""
    package_dir = resources.files("spectrumlab") / "scenarios"
    paths = sorted(Path(str(package_dir)).glob("*.json"))
    return {path.stem: path for path in paths}
