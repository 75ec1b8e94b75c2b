"""Baseband IQ synthesis and energy-threshold occupancy detection.

The normalized frequency axis [0, 1) is split into ``num_channels`` equal
contiguous bands; channel ``k`` owns the band [k/N, (k+1)/N), and signals
are centered at (k + 0.5)/N.  A frame is circular-Gaussian noise plus one
signal per transmitter:

* ``tone``  — a complex exponential at the band center with a random
  starting phase;
* ``ldapm`` — amplitude/phase constellation symbols (order 2/4/8/16,
  normalized to unit average power) with rectangular pulses whose main
  spectral lobe spans exactly one band, mixed to the band center.

Occupancy is inferred by comparing per-band energy against a multiple of
the expected noise-only band energy.  Note that rectangular LDAPM pulses
have strong sidelobes: at high SNR the bands adjacent to an LDAPM signal
can legitimately exceed the default threshold.  Tones stay confined to
their band.

Synthesis is pure given (assignments, config, seed); FFT bin energies are
assigned to bands by bin-center frequency, so the frame length does not
need to divide evenly into the channel count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MODULATIONS = ("tone", "ldapm")
LDAPM_ORDERS = (2, 4, 8, 16)


@dataclass(frozen=True)
class IQConfig:
    """Synthesis and detection parameters.

    ``signal_power`` and ``noise_power`` are linear; the defaults give a
    20 dB per-transmitter SNR.  ``threshold_factor`` is the multiple of the
    expected noise-only band energy above which a band is declared
    occupied.
    """

    num_channels: int = 10
    samples_per_step: int = 1024
    noise_power: float = 1.0
    signal_power: float = 100.0
    modulation: str = "tone"
    ldapm_order: int = 4
    threshold_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.num_channels < 1:
            raise ValueError(f"num_channels must be >= 1, got {self.num_channels}")
        if self.samples_per_step < self.num_channels:
            raise ValueError(
                "samples_per_step must be >= num_channels, got "
                f"{self.samples_per_step} for {self.num_channels} channels"
            )
        if self.noise_power <= 0 or self.signal_power <= 0:
            raise ValueError("noise_power and signal_power must be > 0")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {MODULATIONS}, got '{self.modulation}'")
        if self.ldapm_order not in LDAPM_ORDERS:
            raise ValueError(f"ldapm_order must be one of {LDAPM_ORDERS}, got {self.ldapm_order}")
        if self.threshold_factor <= 1:
            raise ValueError(f"threshold_factor must be > 1, got {self.threshold_factor}")


@dataclass(frozen=True)
class IQFrame:
    """One step's worth of complex baseband samples."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1:
            raise ValueError(f"samples must be one-dimensional, got shape {samples.shape}")
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class TxAssignment:
    """One transmitter: who, which channel, and (optionally) how."""

    occupant: str
    channel: int
    modulation: str | None = None


def ldapm_constellation(order: int) -> np.ndarray:
    """Unit-average-power amplitude/phase grid of the given order."""
    if order == 2:
        points = np.array([-1.0, 1.0], dtype=np.complex128)
    elif order == 4:
        points = np.array([i + 1j * q for q in (-1, 1) for i in (-1, 1)])
    elif order == 8:
        points = np.array([i + 1j * q for q in (-1, 1) for i in (-3, -1, 1, 3)])
    elif order == 16:
        points = np.array([i + 1j * q for q in (-3, -1, 1, 3) for i in (-3, -1, 1, 3)])
    else:
        raise ValueError(f"ldapm_order must be one of {LDAPM_ORDERS}, got {order}")
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def band_center(channel: int, num_channels: int) -> float:
    """Normalized (cyclic) center frequency of a channel's band."""
    return (channel + 0.5) / num_channels


def _tone(config: IQConfig, channel: int, rng: np.random.Generator) -> np.ndarray:
    n = np.arange(config.samples_per_step)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    freq = band_center(channel, config.num_channels)
    return np.sqrt(config.signal_power) * np.exp(1j * (2.0 * np.pi * freq * n + phase))


def _ldapm(config: IQConfig, channel: int, rng: np.random.Generator) -> np.ndarray:
    total = config.samples_per_step
    # Rectangular pulses of 2N samples put the main spectral lobe exactly
    # across the signal's own band.
    sps = 2 * config.num_channels
    count = -(-total // sps)
    constellation = ldapm_constellation(config.ldapm_order)
    symbols = constellation[rng.integers(0, len(constellation), size=count)]
    baseband = np.repeat(symbols, sps)[:total]
    n = np.arange(total)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    freq = band_center(channel, config.num_channels)
    carrier = np.exp(1j * (2.0 * np.pi * freq * n + phase))
    return np.sqrt(config.signal_power) * baseband * carrier


def synth_step(
    assignments: Iterable[TxAssignment | tuple],
    config: IQConfig,
    seed: int,
) -> IQFrame:
    """Synthesize one frame from the given channel assignments.

    Deterministic for a fixed (assignments, config, seed); the order of
    assignments is part of the input, since all transmitters draw from one
    seeded generator.
    """
    rng = np.random.default_rng(seed)
    scale = np.sqrt(config.noise_power / 2.0)
    noise = rng.normal(0.0, scale, size=(config.samples_per_step, 2))
    samples = noise[:, 0] + 1j * noise[:, 1]
    for assignment in assignments:
        if not isinstance(assignment, TxAssignment):
            assignment = TxAssignment(*assignment)
        if not 0 <= assignment.channel < config.num_channels:
            raise ValueError(
                f"assignment for '{assignment.occupant}': channel must be in "
                f"[0, {config.num_channels}), got {assignment.channel}"
            )
        modulation = assignment.modulation or config.modulation
        if modulation == "tone":
            samples = samples + _tone(config, assignment.channel, rng)
        elif modulation == "ldapm":
            samples = samples + _ldapm(config, assignment.channel, rng)
        else:
            raise ValueError(f"unknown modulation '{modulation}'")
    return IQFrame(samples=samples)


@lru_cache(maxsize=32)
def _band_index(num_samples: int, num_channels: int) -> np.ndarray:
    bins = np.arange(num_samples)
    return np.minimum(bins * num_channels // num_samples, num_channels - 1)


def band_energies(frame: IQFrame | np.ndarray, num_channels: int) -> np.ndarray:
    """Energy in each of ``num_channels`` equal-width frequency bands.

    Normalized so the bands sum to the total sample energy (Parseval).
    """
    samples = frame.samples if isinstance(frame, IQFrame) else np.asarray(frame)
    spectrum = np.fft.fft(samples)
    bin_energy = (spectrum.real**2 + spectrum.imag**2) / len(samples)
    return np.bincount(
        _band_index(len(samples), num_channels),
        weights=bin_energy,
        minlength=num_channels,
    )


def noise_band_energy(config: IQConfig) -> float:
    """Expected noise-only energy in one band."""
    return config.noise_power * config.samples_per_step / config.num_channels


def infer_occupancy(energies: Sequence[float] | np.ndarray, config: IQConfig) -> tuple[bool, ...]:
    """Declare each band occupied iff its energy exceeds the threshold.

    The threshold is ``threshold_factor`` times the expected noise-only
    band energy.  Raising the factor never adds occupied channels.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if len(energies) != config.num_channels:
        raise ValueError(
            f"expected {config.num_channels} band energies, got {len(energies)}"
        )
    if np.any(energies < 0):
        raise ValueError("band energies must be nonnegative")
    threshold = config.threshold_factor * noise_band_energy(config)
    return tuple(bool(e > threshold) for e in energies)


def write_iq_file(frame: IQFrame, path: str | Path, config: IQConfig) -> Path:
    """Dump a frame as interleaved little-endian float32 (I,Q,I,Q,...).

    A JSON sidecar at ``<path>.json`` records the config and sample count,
    following the common raw-IQ interchange convention.  Returns the
    sidecar path.
    """
    path = Path(path)
    interleaved = np.empty(2 * len(frame), dtype="<f4")
    interleaved[0::2] = frame.samples.real
    interleaved[1::2] = frame.samples.imag
    path.write_bytes(interleaved.tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(
        json.dumps(
            {"format": "interleaved-float32-le", "sample_count": len(frame), "config": asdict(config)},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return sidecar


def read_iq_file(path: str | Path) -> tuple[IQFrame, dict]:
    """Read a frame dump written by :func:`write_iq_file`."""
    path = Path(path)
    interleaved = np.frombuffer(path.read_bytes(), dtype="<f4")
    samples = interleaved[0::2].astype(np.float64) + 1j * interleaved[1::2].astype(np.float64)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
    return IQFrame(samples=samples), sidecar
