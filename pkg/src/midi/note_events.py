import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Sequence, Tuple

from .midi_file import MidiEvent, MidiFile, NoteOff, NoteOn

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoteSpan:
    pitch: int
    onset_tick: int
    duration_ticks: int
    velocity: int
    channel: int = 0
    # position of the originating NoteOn; set by extract_notes
    track: int = field(default=-1, compare=False)
    event_index: int = field(default=-1, compare=False)

    @property
    def offset_tick(self) -> int:
        return self.onset_tick + self.duration_ticks


def _absolute_events(midi: MidiFile) -> List[Tuple[int, int, int, MidiEvent]]:
    """Merges every track into (tick, track, index, event), ordered by tick then file position."""
    merged = []
    for track_index, track in enumerate(midi.tracks):
        tick = 0
        for event_index, event in enumerate(track):
            tick += event.delta_ticks
            merged.append((tick, track_index, event_index, event))
    merged.sort(key=lambda item: item[:3])
    return merged


def extract_notes(midi: MidiFile) -> Tuple[List[NoteSpan], int]:
    """Pairs NoteOns with NoteOffs into spans.

    Overlapping notes of the same pitch and channel are closed first in,
    first out. A NoteOn with velocity 0 is a NoteOff. Notes still open at
    the end are closed at the file's final tick. Sustain pedal is ignored.
    """
    open_notes: Dict[Tuple[int, int], Deque[Tuple[int, int, int, int]]] = defaultdict(deque)
    spans: List[NoteSpan] = []
    dangling = 0

    def close(key, tick):
        onset, velocity, track, index = open_notes[key].popleft()
        spans.append(NoteSpan(
            pitch=key[1],
            onset_tick=onset,
            duration_ticks=max(1, tick - onset),
            velocity=velocity,
            channel=key[0],
            track=track,
            event_index=index,
        ))

    for tick, track, index, event in _absolute_events(midi):
        kind = event.kind
        if isinstance(kind, NoteOn) and kind.velocity > 0:
            open_notes[(kind.channel, kind.pitch)].append((tick, kind.velocity, track, index))
        elif isinstance(kind, (NoteOn, NoteOff)):
            key = (kind.channel, kind.pitch)
            if open_notes[key]:
                close(key, tick)
            else:
                dangling += 1

    final = midi.final_tick()
    for key in sorted(open_notes):
        while open_notes[key]:
            close(key, final)

    if dangling:
        logger.warning("ignored %d NoteOff events without a matching NoteOn", dangling)

    spans.sort(key=lambda s: (s.onset_tick, s.pitch, s.channel, s.track, s.event_index))
    return spans, midi.division


def apply_velocities(midi: MidiFile, spans: Sequence[NoteSpan], new_velocities: Sequence[int]) -> MidiFile:
    """Replaces the NoteOn velocity of each span; every other byte of the file is kept."""
    if len(spans) != len(new_velocities):
        raise ValueError(f"got {len(new_velocities)} velocities for {len(spans)} spans")

    tracks = [list(track) for track in midi.tracks]
    for span, velocity in zip(spans, new_velocities):
        velocity = int(velocity)
        if not 1 <= velocity <= 127:
            raise ValueError(f"velocity {velocity} out of range 1-127")
        if span.track < 0 or span.event_index < 0:
            raise ValueError(f"span {span} was not extracted from a file")
        try:
            event = tracks[span.track][span.event_index]
        except IndexError:
            raise ValueError(f"span {span} was not extracted from this file") from None
        kind = event.kind
        if not (isinstance(kind, NoteOn) and kind.pitch == span.pitch and kind.channel == span.channel):
            raise ValueError(f"span {span} does not point at its NoteOn")
        tracks[span.track][span.event_index] = replace(event, kind=replace(kind, velocity=velocity))

    return replace(midi, tracks=tuple(tuple(track) for track in tracks))
