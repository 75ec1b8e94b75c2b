"""Deterministic channel patterns for scripted (non-learning) entities.

An entity action is either a channel index or ``None`` for idle.  All
patterns are pure functions of ``(spec, t)``, so they can be evaluated at
any timestep in any order, including concurrently.
"""

from __future__ import annotations

from .scenario import EntitySpec

# A transmission channel index, or None when the entity is idle.
EntityAction = int | None


def entity_channel(spec: EntitySpec, t: int, num_channels: int) -> int | None:
    """Channel occupied by ``spec`` at timestep ``t``, or ``None`` if idle.

    ``constant`` entities stay on their start channel; ``hop`` entities
    sweep linearly, ``(start_channel + t * stride) mod num_channels``.
    """
    if t < 0:
        raise ValueError(f"timestep must be >= 0, got {t}")
    if not spec.duty:
        return None
    if spec.behavior == "constant":
        return spec.start_channel
    if spec.behavior == "hop":
        stride = spec.stride if spec.stride is not None else 1
        return (spec.start_channel + t * stride) % num_channels
    raise ValueError(f"unknown entity behavior '{spec.behavior}'")
