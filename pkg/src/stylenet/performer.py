from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..midi.midi_file import MidiFile
from ..midi.note_events import apply_velocities, extract_notes
from ..neural.layers import mse_loss
from ..roll.roll_codec import GridSpec, PianoRoll, VelocityRoll, decode_velocities, encode
from .model import StyleNetParams, predict
from .trainer import make_windows


@dataclass
class Snapshot:
    predicted: VelocityRoll
    performed: VelocityRoll
    mse: float


def predict_velocity_roll(params: StyleNetParams, genre: str, roll: PianoRoll, window: int = 200) -> VelocityRoll:
    """Runs each window in inference mode and stitches the predictions back together."""
    params.branch(genre)
    blank = VelocityRoll(np.zeros((roll.steps, 88)))
    chunks = [predict(params, genre, inputs) for inputs, _ in make_windows(roll, blank, window)]
    if not chunks:
        return blank
    return VelocityRoll(np.concatenate(chunks, axis=0))


def predict_performance(params: StyleNetParams, midi: MidiFile, genre: str, window: int = 200) -> MidiFile:
    """Replaces every note velocity with the model's prediction; timing and pitches are untouched."""
    params.branch(genre)
    spans, division = extract_notes(midi)
    if not spans:
        return midi
    grid = GridSpec(division)
    roll, _ = encode(spans, grid)
    predicted = predict_velocity_roll(params, genre, roll, window)
    return apply_velocities(midi, spans, decode_velocities(roll, predicted, spans, grid))


def perform_all_genres(params: StyleNetParams, midi: MidiFile, window: int = 200) -> Dict[str, MidiFile]:
    return {genre: predict_performance(params, midi, genre, window) for genre in params.genres}


def snapshot(params: StyleNetParams, midi: MidiFile, genre: str, window: int = 200) -> Snapshot:
    """Predicted against performed velocities for one file."""
    spans, division = extract_notes(midi)
    roll, performed = encode(spans, GridSpec(division))
    if roll.steps == 0:
        raise ValueError("file has no notes to predict")
    predicted = predict_velocity_roll(params, genre, roll, window)
    loss, _ = mse_loss(predicted.data, performed.data)
    return Snapshot(predicted, performed, loss)
