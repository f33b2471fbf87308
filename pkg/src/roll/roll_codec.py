import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from ..midi.note_events import NoteSpan

logger = logging.getLogger(__name__)

NUM_KEYS = 88
LOWEST_PITCH = 21
VELOCITY_SCALE = 127


@dataclass(frozen=True)
class GridSpec:
    division: int
    steps_per_quarter: int = 4
    num_keys: int = NUM_KEYS
    lowest_pitch: int = LOWEST_PITCH

    def __post_init__(self):
        if self.division <= 0 or self.steps_per_quarter <= 0:
            raise ValueError("division and steps_per_quarter must be positive")

    @property
    def ticks_per_step(self) -> Fraction:
        return Fraction(self.division, self.steps_per_quarter)

    @property
    def input_width(self) -> int:
        return self.num_keys * 2

    def key_index(self, pitch: int) -> int:
        """Column of pitch, or -1 when it lies outside the keyboard."""
        key = pitch - self.lowest_pitch
        return key if 0 <= key < self.num_keys else -1


@dataclass(frozen=True)
class PianoRoll:
    """T x 176 note states; key k owns columns 2k (played) and 2k+1 (held)."""
    data: np.ndarray

    @property
    def steps(self) -> int:
        return self.data.shape[0]

    @property
    def played(self) -> np.ndarray:
        return self.data[:, 0::2]

    @property
    def held(self) -> np.ndarray:
        return self.data[:, 1::2]


@dataclass(frozen=True)
class VelocityRoll:
    """T x 88 velocities scaled to [0, 1], non-zero only at onset cells."""
    data: np.ndarray

    @property
    def steps(self) -> int:
        return self.data.shape[0]


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def quantize_span(span: NoteSpan, grid: GridSpec) -> Tuple[int, int]:
    onset = _round_half_up(Fraction(span.onset_tick) / grid.ticks_per_step)
    duration = max(1, _round_half_up(Fraction(span.duration_ticks) / grid.ticks_per_step))
    return onset, duration


def encode(spans: Sequence[NoteSpan], grid: GridSpec) -> Tuple[PianoRoll, VelocityRoll]:
    placed: List[Tuple[int, int, int, int]] = []
    dropped = 0
    for span in spans:
        key = grid.key_index(span.pitch)
        if key < 0:
            dropped += 1
            continue
        onset, duration = quantize_span(span, grid)
        placed.append((key, onset, duration, span.velocity))
    if dropped:
        logger.warning("dropped %d notes outside the %d-key range", dropped, grid.num_keys)

    steps = max((onset + duration for _, onset, duration, _ in placed), default=0)
    roll = np.zeros((steps, grid.input_width), dtype=np.uint8)
    velocities = np.zeros((steps, grid.num_keys), dtype=np.float64)

    for key, onset, duration, velocity in placed:
        roll[onset:onset + duration, 2 * key + 1] = 1
        # a continuation never clears a restrike's played bit
        roll[onset, 2 * key] = 1
        velocities[onset, key] = velocity / VELOCITY_SCALE

    return PianoRoll(roll), VelocityRoll(velocities)


def denormalize(value: float) -> int:
    """round(v * 127) with ties away from zero, clamped to [1, 127]."""
    if not math.isfinite(value):
        return 1
    scaled = value * VELOCITY_SCALE
    rounded = math.floor(abs(scaled) + 0.5) * (1 if scaled >= 0 else -1)
    return min(VELOCITY_SCALE, max(1, rounded))


def decode_velocities(roll: PianoRoll, vel: VelocityRoll, spans: Sequence[NoteSpan], grid: GridSpec) -> List[int]:
    """Reads each span's velocity back from its onset cell.

    Spans outside the keyboard were never encoded and keep their original
    velocity.
    """
    if roll.steps != vel.steps or vel.data.shape[1:] != (grid.num_keys,):
        raise ValueError(f"velocity roll {vel.data.shape} does not match piano roll {roll.data.shape}")
    result = []
    for span in spans:
        key = grid.key_index(span.pitch)
        if key < 0:
            result.append(span.velocity)
            continue
        onset, _ = quantize_span(span, grid)
        if onset >= vel.steps:
            raise ValueError(f"span onset step {onset} beyond roll of {vel.steps} steps")
        result.append(denormalize(float(vel.data[onset, key])))
    return result


def count_out_of_range(spans: Sequence[NoteSpan], grid: GridSpec) -> int:
    return sum(1 for span in spans if grid.key_index(span.pitch) < 0)


def dump_csv(roll: PianoRoll, vel: VelocityRoll, prefix: str) -> Tuple[str, str]:
    """Writes both matrices one row per step; returns the two file names."""
    roll_path, vel_path = f"{prefix}_input.csv", f"{prefix}_velocity.csv"
    np.savetxt(roll_path, roll.data, fmt='%d', delimiter=',')
    np.savetxt(vel_path, vel.data, fmt='%.6f', delimiter=',')
    return roll_path, vel_path
