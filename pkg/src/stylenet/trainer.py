import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.progress import Progress

from ..cache.roll_cache import CachedRollEncoder
from ..corpus.corpus_curator import CorpusError, DatasetManifest
from ..neural.layers import masked_mse_loss, mse_loss
from ..neural.optim import AdamState, adam_step, clip_by_global_norm
from ..neural.tensor import NamedTensors, NonFiniteError
from ..roll.roll_codec import PianoRoll, VelocityRoll
from .checkpoint import Checkpoint, LossRecord, save_checkpoint, write_loss_csv
from .config import TrainConfig
from .model import StyleNetParams, backward, forward, init_params

Window = Tuple[np.ndarray, np.ndarray]


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: List[LossRecord]


def make_windows(roll: PianoRoll, vel: VelocityRoll, window: int = 200) -> List[Window]:
    """Cuts aligned (input, target) pairs into consecutive non-overlapping windows.

    The last window may be shorter. No state is carried between windows.
    """
    if roll.steps != vel.steps:
        raise ValueError(f"piano roll has {roll.steps} steps but velocity roll has {vel.steps}")
    if window < 1:
        raise ValueError("window must be at least one step")
    inputs = roll.data.astype(np.float64)
    return [(inputs[start:start + window], vel.data[start:start + window])
            for start in range(0, roll.steps, window)]


def window_loss(pred: np.ndarray, inputs: np.ndarray, target: np.ndarray, masked: bool) -> Tuple[float, np.ndarray]:
    if masked:
        return masked_mse_loss(pred, target, inputs[:, 1::2])
    return mse_loss(pred, target)


def batch_loss_and_grads(params: StyleNetParams, genre: str, batch: Sequence[Window], config: TrainConfig,
                         rng: Optional[np.random.Generator], training: bool = True) -> Tuple[float, NamedTensors]:
    """Cell-weighted mean loss over the batch and its gradients.

    Windows run independently; the result equals the loss of the
    concatenated windows.
    """
    total = sum(target.size for _, target in batch)
    loss = 0.0
    grads: NamedTensors = {}
    for inputs, target in batch:
        pred, cache = forward(params, genre, inputs, training=training, keep_prob=config.keep_prob, rng=rng)
        window_value, grad_pred = window_loss(pred, inputs, target, config.masked_loss)
        weight = target.size / total
        loss += weight * window_value
        for name, grad in backward(params, cache, grad_pred * weight).items():
            grads[name] = grads[name] + grad if name in grads else grad
    return loss, grads


def evaluate(params: StyleNetParams, windows: Sequence[Window], genre: str, masked: bool = False) -> float:
    """Window-length-weighted mean loss with dropout off."""
    if not windows:
        raise ValueError("cannot evaluate an empty split")
    total = sum(target.size for _, target in windows)
    loss = 0.0
    for inputs, target in windows:
        pred, _ = forward(params, genre, inputs, training=False)
        value, _ = window_loss(pred, inputs, target, masked)
        loss += value * target.size / total
    return float(loss)


def load_windows(manifest: DatasetManifest, genre: str, split: str, window: int,
                 encoder: CachedRollEncoder) -> List[Window]:
    windows: List[Window] = []
    for path in manifest.files(genre, split):
        roll, vel = encoder.encode_rolls(path)
        windows.extend(make_windows(roll, vel, window))
    return windows


def evaluate_split(params: StyleNetParams, manifest: DatasetManifest, split: str, genre: str,
                   window: int = 200, encoder: Optional[CachedRollEncoder] = None, masked: bool = False) -> float:
    encoder = encoder or CachedRollEncoder(use_cache=False)
    return evaluate(params, load_windows(manifest, genre, split, window, encoder), genre, masked)


class StyleNetTrainer:
    def __init__(self, config: TrainConfig, encoder: Optional[CachedRollEncoder] = None,
                 console: Optional[Console] = None):
        self.config = config.validate()
        self.encoder = encoder or CachedRollEncoder(use_cache=False)
        self.console = console or Console()

    def load_data(self, manifest: DatasetManifest) -> Tuple[Dict[str, List[Window]], Dict[str, List[Window]]]:
        self.console.print("🎹 Encoding training data...")
        train, validation = {}, {}
        for genre in manifest.genres:
            train[genre] = load_windows(manifest, genre, "train", self.config.window, self.encoder)
            validation[genre] = load_windows(manifest, genre, "validation", self.config.window, self.encoder)
            if not train[genre]:
                raise CorpusError(f"genre '{genre}' has no training windows")
            self.console.print(f"  • [bold cyan]{genre}[/]: {len(train[genre])} train / "
                               f"{len(validation[genre])} validation windows")
        return train, validation

    def new_checkpoint(self, genres: Sequence[str], rng: np.random.Generator) -> Checkpoint:
        params = init_params(genres, self.config.interp_hidden, self.config.genre_hidden, rng)
        return Checkpoint(self.config.to_dict(), sorted(genres), params.named(), AdamState())

    def _batches(self, windows: List[Window], rng: np.random.Generator) -> List[List[Window]]:
        order = rng.permutation(len(windows))
        size = self.config.batch_size
        return [[windows[i] for i in order[start:start + size]] for start in range(0, len(order), size)]

    def run_epoch(self, params: NamedTensors, adam: AdamState, genres: List[str],
                  train: Dict[str, List[Window]], rng: np.random.Generator, epoch: int) -> Tuple[NamedTensors, AdamState]:
        """One pass with strictly alternating genres; smaller genres cycle until the largest is exhausted."""
        batches = {genre: self._batches(train[genre], rng) for genre in genres}
        rounds = max(len(b) for b in batches.values())
        for r in range(rounds):
            for genre in genres:
                batch = batches[genre][r % len(batches[genre])]
                model = StyleNetParams.from_named(params, genres)
                loss, grads = batch_loss_and_grads(model, genre, batch, self.config, rng, training=True)
                if not math.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch} ({genre})")
                try:
                    grads, _ = clip_by_global_norm(grads, self.config.clip_norm)
                    params, adam = adam_step(params, grads, adam, self.config.lr)
                except NonFiniteError as e:
                    raise DivergenceError(f"{e} at epoch {epoch} ({genre})") from e
        return params, adam

    def epoch_losses(self, params: NamedTensors, genres: List[str], train: Dict[str, List[Window]],
                     validation: Dict[str, List[Window]], epoch: int) -> List[LossRecord]:
        model = StyleNetParams.from_named(params, genres)
        records = []
        for genre in genres:
            train_loss = evaluate(model, train[genre], genre, self.config.masked_loss)
            val_loss = (evaluate(model, validation[genre], genre, self.config.masked_loss)
                        if validation[genre] else None)
            if not math.isfinite(train_loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch} ({genre})")
            records.append(LossRecord(epoch, genre, train_loss, val_loss))
        return records

    def train(self, manifest: DatasetManifest, out_path, log_path=None,
              resume: Optional[Checkpoint] = None) -> TrainResult:
        out_path = Path(out_path)
        log_path = Path(log_path) if log_path else out_path.with_name(out_path.name + ".losses.csv")
        genres = manifest.genres
        train, validation = self.load_data(manifest)

        rng = np.random.default_rng(self.config.seed)
        if resume is None:
            ckpt = self.new_checkpoint(genres, rng)
        else:
            if sorted(resume.genres) != genres:
                raise CorpusError(f"checkpoint genres {resume.genres} do not match manifest genres {genres}")
            ckpt = resume
            rng.bit_generator.state = resume.rng_state
            self.console.print(f"🔄 Resuming after epoch {resume.epoch}")

        params, adam, losses = dict(ckpt.params), ckpt.adam, list(ckpt.losses)
        start = ckpt.epoch + 1

        def snapshot(epoch: int) -> Checkpoint:
            return Checkpoint(self.config.to_dict(), genres, params, adam, epoch,
                              rng.bit_generator.state, list(losses))

        with Progress(console=self.console) as progress:
            task = progress.add_task("Training...", total=max(0, self.config.epochs - ckpt.epoch))
            for epoch in range(start, self.config.epochs + 1):
                try:
                    params, adam = self.run_epoch(params, adam, genres, train, rng, epoch)
                    records = self.epoch_losses(params, genres, train, validation, epoch)
                except DivergenceError:
                    self.console.print(f"❌ Training diverged; last good checkpoint kept at {out_path}")
                    raise
                losses.extend(records)
                summary = ", ".join(f"{r.genre} {r.train_loss:.2e}" for r in records)
                progress.update(task, advance=1, description=f"Epoch {epoch}: {summary}")

                if epoch % self.config.checkpoint_every == 0 or epoch == self.config.epochs:
                    save_checkpoint(snapshot(epoch), out_path)
                    write_loss_csv(losses, log_path)

        final = snapshot(max(ckpt.epoch, self.config.epochs))
        if start > self.config.epochs:
            save_checkpoint(final, out_path)
            write_loss_csv(losses, log_path)
        self.console.print(f"💾 Checkpoint saved to {out_path}")
        self.console.print(f"📈 Loss log written to {log_path}")
        return TrainResult(final, losses)
