"""Synthetic MIDI factories shared by the test modules."""

from typing import List, Sequence, Tuple

import numpy as np
import pytest

from src.midi.midi_file import MidiEvent, MidiFile, NoteOff, NoteOn, Tempo, TimeSignature, end_of_track, write_midi_file

# (pitch, onset_tick, duration_ticks, velocity)
Note = Tuple[int, int, int, int]


def build_midi(notes: Sequence[Note], division: int = 480, fmt: int = 0,
               time_signature: Tuple[int, int] = (4, 2), channel: int = 0) -> MidiFile:
    timed: List[Tuple[int, int, object]] = [(0, 0, TimeSignature(*time_signature)), (0, 0, Tempo(500000))]
    for pitch, onset, duration, velocity in notes:
        timed.append((onset, 2, NoteOn(channel, pitch, velocity)))
        timed.append((onset + duration, 1, NoteOff(channel, pitch, 64)))
    timed.sort(key=lambda item: (item[0], item[1]))

    events, tick = [], 0
    for at, _, kind in timed:
        events.append(MidiEvent(at - tick, kind))
        tick = at
    events.append(end_of_track())
    tracks = (tuple(events),)
    if fmt == 1:
        tracks = ((MidiEvent(0, TimeSignature(*time_signature)), end_of_track()), tuple(events))
    return MidiFile(fmt, division, tracks)


def performed_notes(count: int = 32, distinct: int = 25, seed: int = 0, step_ticks: int = 120) -> List[Note]:
    """A monophonic line of sixteenth notes cycling through `distinct` velocities."""
    rng = np.random.default_rng(seed)
    pitches = rng.integers(48, 84, size=count)
    velocities = [30 + (i % distinct) * 3 for i in range(count)]
    return [(int(p), i * step_ticks, step_ticks, v) for i, (p, v) in enumerate(zip(pitches, velocities))]


@pytest.fixture
def midi_factory():
    return build_midi


@pytest.fixture
def notes_factory():
    return performed_notes


@pytest.fixture
def write_midi(tmp_path):
    def write(name: str, notes: Sequence[Note], **kwargs) -> str:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_midi_file(build_midi(notes, **kwargs), path)
        return str(path)
    return write


@pytest.fixture
def corpus_dirs(write_midi, tmp_path):
    """Two genre folders: four performed files each, plus one file per rejection reason in classical."""
    for genre, offset in (("classical", 0), ("jazz", 100)):
        for i in range(4):
            write_midi(f"{genre}/piece{i}.mid", performed_notes(count=40, seed=offset + i))
    write_midi("classical/two_tracks.mid", performed_notes(count=40, seed=7), fmt=1)
    write_midi("classical/waltz.mid", performed_notes(count=40, seed=8), time_signature=(3, 2))
    write_midi("classical/flat.mid", [(60 + i % 12, i * 120, 120, 64) for i in range(40)])
    return {"classical": str(tmp_path / "classical"), "jazz": str(tmp_path / "jazz")}


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    for name in ("STYLENET_DEBUG", "STYLENET_EPOCHS", "STYLENET_LR", "STYLENET_SEED", "STYLENET_WINDOW"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("STYLENET_CACHE_DIR", str(tmp_path / "roll_cache"))
