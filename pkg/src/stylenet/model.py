"""
StyleNet: one shared interpretation BiLSTM feeding a GenreNet branch per genre.

    piano roll (T x 176)
      -> interpretation BiLSTM -> dropout
      -> branch BiLSTM 1 -> dropout -> branch BiLSTM 2 -> dropout -> branch BiLSTM 3
      -> linear head (identity activation) -> velocities (T x 88)

Only the interpretation layer is shared; a step on one genre never touches
another genre's branch.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..neural.layers import (LinearParams, dropout_backward, dropout_forward, linear_backward,
                             linear_forward)
from ..neural.lstm import BiLstmCache, BiLstmParams, bilstm_backward, bilstm_forward
from ..neural.tensor import NamedTensors, Tensor, as_tensor
from .config import GENRE_LAYERS, OUTPUT_KEYS

INPUT_WIDTH = 2 * OUTPUT_KEYS


class UnknownGenreError(KeyError):
    def __init__(self, genre: str, available: Sequence[str]):
        super().__init__(genre)
        self.genre = genre
        self.available = list(available)

    def __str__(self):
        return f"unknown genre '{self.genre}' (available: {', '.join(self.available)})"


@dataclass
class GenreNetParams:
    layers: Tuple[BiLstmParams, ...]
    head: LinearParams

    def __post_init__(self):
        if len(self.layers) != GENRE_LAYERS:
            raise ValueError(f"a GenreNet has exactly {GENRE_LAYERS} recurrent layers")
        if self.head.weight.shape[1] != OUTPUT_KEYS:
            raise ValueError(f"GenreNet head must output {OUTPUT_KEYS} velocities")

    def named(self, prefix: str) -> NamedTensors:
        tensors = {}
        for depth, layer in enumerate(self.layers):
            tensors.update(layer.named(f"{prefix}.layer{depth}"))
        tensors.update(self.head.named(f"{prefix}.head"))
        return tensors

    @classmethod
    def from_named(cls, tensors: NamedTensors, prefix: str) -> "GenreNetParams":
        layers = tuple(BiLstmParams.from_named(tensors, f"{prefix}.layer{depth}") for depth in range(GENRE_LAYERS))
        return cls(layers, LinearParams.from_named(tensors, f"{prefix}.head"))


@dataclass
class StyleNetParams:
    interpretation: BiLstmParams
    branches: Dict[str, GenreNetParams]

    def __post_init__(self):
        if not self.branches:
            raise ValueError("StyleNet needs at least one genre branch")

    @property
    def genres(self) -> List[str]:
        return sorted(self.branches)

    def branch(self, genre: str) -> GenreNetParams:
        if genre not in self.branches:
            raise UnknownGenreError(genre, self.genres)
        return self.branches[genre]

    def named(self) -> NamedTensors:
        tensors = self.interpretation.named("interpretation")
        for genre in self.genres:
            tensors.update(self.branches[genre].named(f"branches.{genre}"))
        return tensors

    @classmethod
    def from_named(cls, tensors: NamedTensors, genres: Sequence[str]) -> "StyleNetParams":
        return cls(BiLstmParams.from_named(tensors, "interpretation"),
                   {genre: GenreNetParams.from_named(tensors, f"branches.{genre}") for genre in genres})


def init_params(genres: Sequence[str], interp_hidden: int, genre_hidden: int,
                rng: np.random.Generator) -> StyleNetParams:
    interpretation = BiLstmParams.init(INPUT_WIDTH, interp_hidden, rng)
    branches = {}
    for genre in sorted(genres):
        width = 2 * interp_hidden
        layers = []
        for _ in range(GENRE_LAYERS):
            layers.append(BiLstmParams.init(width, genre_hidden, rng))
            width = 2 * genre_hidden
        branches[genre] = GenreNetParams(tuple(layers), LinearParams.init(width, OUTPUT_KEYS, rng))
    return StyleNetParams(interpretation, branches)


def zeros_params(genres: Sequence[str], interp_hidden: int, genre_hidden: int) -> StyleNetParams:
    def branch():
        widths = [2 * interp_hidden] + [2 * genre_hidden] * (GENRE_LAYERS - 1)
        return GenreNetParams(tuple(BiLstmParams.zeros(w, genre_hidden) for w in widths),
                              LinearParams.zeros(2 * genre_hidden, OUTPUT_KEYS))
    return StyleNetParams(BiLstmParams.zeros(INPUT_WIDTH, interp_hidden), {g: branch() for g in sorted(genres)})


@dataclass
class StyleNetCache:
    genre: str
    interpretation: BiLstmCache
    layers: List[BiLstmCache] = field(default_factory=list)
    masks: List[Optional[Tensor]] = field(default_factory=list)
    head_input: Optional[Tensor] = None


def forward(params: StyleNetParams, genre: str, roll: Tensor, training: bool = False,
            keep_prob: float = 1.0, rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, StyleNetCache]:
    """Predicts a T x 88 velocity window (raw, unclamped) for one genre."""
    branch = params.branch(genre)
    roll = as_tensor(roll)
    if roll.shape[0] == 0:
        raise ValueError("cannot run StyleNet on an empty window")

    hidden, interp_cache = bilstm_forward(params.interpretation, roll)
    cache = StyleNetCache(genre, interp_cache)
    for layer in branch.layers:
        hidden, mask = dropout_forward(hidden, keep_prob, rng, training)
        cache.masks.append(mask)
        hidden, layer_cache = bilstm_forward(layer, hidden)
        cache.layers.append(layer_cache)
    cache.head_input = hidden
    return linear_forward(branch.head, hidden), cache


def backward(params: StyleNetParams, cache: StyleNetCache, grad_pred: Tensor) -> NamedTensors:
    """Gradients for the interpretation layer and the active branch only."""
    branch = params.branch(cache.genre)
    prefix = f"branches.{cache.genre}"

    head_grads, grad = linear_backward(branch.head, cache.head_input, grad_pred)
    grads = head_grads.named(f"{prefix}.head")
    for depth in reversed(range(GENRE_LAYERS)):
        layer_grads, grad = bilstm_backward(cache.layers[depth], grad)
        grads.update(layer_grads.named(f"{prefix}.layer{depth}"))
        grad = dropout_backward(grad, cache.masks[depth])
    interp_grads, _ = bilstm_backward(cache.interpretation, grad)
    grads.update(interp_grads.named("interpretation"))
    return grads


def predict(params: StyleNetParams, genre: str, roll: Tensor) -> Tensor:
    prediction, _ = forward(params, genre, roll, training=False)
    return prediction
