"""Tests for windowing, evaluation and the training loop."""

from dataclasses import replace

import numpy as np
import pytest
from rich.console import Console

from src.cache.roll_cache import CachedRollEncoder
from src.corpus.corpus_curator import CorpusCurator
from src.neural.optim import AdamState, adam_step, clip_by_global_norm
from src.roll.roll_codec import PianoRoll, VelocityRoll, denormalize
from src.stylenet.checkpoint import load_checkpoint, read_loss_csv
from src.stylenet.config import TrainConfig
from src.stylenet.model import INPUT_WIDTH, StyleNetParams, init_params, predict, zeros_params
from src.stylenet.trainer import (DivergenceError, StyleNetTrainer, batch_loss_and_grads, evaluate, evaluate_split,
                                  load_windows, make_windows)

TINY = TrainConfig(lr=1e-2, window=16, epochs=3, batch_size=2, interp_hidden=4, genre_hidden=6,
                   seed=11, checkpoint_every=1)


def rolls(steps: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    roll = PianoRoll((rng.random((steps, INPUT_WIDTH)) < 0.05).astype(np.uint8))
    return roll, VelocityRoll(rng.uniform(size=(steps, 88)) * roll.played)


@pytest.fixture
def manifest(corpus_dirs):
    return CorpusCurator(split_ratio=0.5, console=Console(quiet=True)).curate(corpus_dirs)


def quiet_trainer(config: TrainConfig) -> StyleNetTrainer:
    return StyleNetTrainer(config, encoder=CachedRollEncoder(use_cache=False), console=Console(quiet=True))


# ---------------------------------------------------------------------------
# Windows and evaluation
# ---------------------------------------------------------------------------

class TestWindows:
    @pytest.mark.parametrize("steps, sizes", [(450, [200, 200, 50]), (200, [200]), (0, [])])
    def test_window_sizes(self, steps, sizes):
        windows = make_windows(*rolls(steps), window=200)
        assert [inputs.shape[0] for inputs, _ in windows] == sizes
        assert all(inputs.shape[0] == target.shape[0] for inputs, target in windows)

    def test_windows_are_aligned(self):
        roll, vel = rolls(30)
        windows = make_windows(roll, vel, window=8)
        assert np.array_equal(np.concatenate([t for _, t in windows]), vel.data)
        assert np.array_equal(np.concatenate([i for i, _ in windows]), roll.data)

    def test_length_mismatch(self):
        roll, _ = rolls(10)
        with pytest.raises(ValueError):
            make_windows(roll, VelocityRoll(np.zeros((9, 88))))


class TestEvaluate:
    def test_zero_model_scores_mean_square(self):
        roll, vel = rolls(50, seed=3)
        windows = make_windows(roll, vel, window=16)
        loss = evaluate(zeros_params(["jazz"], 4, 6), windows, "jazz")
        assert loss == pytest.approx(float(np.mean(vel.data ** 2)), rel=1e-12)

    def test_zero_targets_zero_head(self):
        roll, _ = rolls(20)
        model = zeros_params(["jazz"], 4, 6)
        assert evaluate(model, make_windows(roll, VelocityRoll(np.zeros((20, 88))), 16), "jazz") == 0.0

    def test_duplicate_windows_keep_mean(self):
        model = init_params(["jazz"], 4, 6, np.random.default_rng(0))
        windows = make_windows(*rolls(32, seed=4), window=16)
        assert evaluate(model, windows + windows, "jazz") == pytest.approx(evaluate(model, windows, "jazz"))

    def test_empty_split(self):
        with pytest.raises(ValueError):
            evaluate(zeros_params(["jazz"], 4, 6), [], "jazz")

    def test_split_mean_unchanged_by_duplicated_files(self, manifest):
        model = init_params(manifest.genres, 4, 6, np.random.default_rng(0))
        encoder = CachedRollEncoder(use_cache=False)
        loss = evaluate_split(model, manifest, "train", "jazz", window=16, encoder=encoder)
        windows = load_windows(manifest, "jazz", "train", 16, encoder)
        assert loss == pytest.approx(evaluate(model, windows, "jazz"), rel=1e-12)

        duplicated = replace(manifest, entries=manifest.entries + [e for e in manifest.entries if e.split == "train"])
        assert len(duplicated.files("jazz", "train")) == 2 * len(manifest.files("jazz", "train"))
        assert evaluate_split(model, duplicated, "train", "jazz", window=16) == pytest.approx(loss, rel=1e-12)

    def test_batch_loss_is_cell_weighted(self):
        model = init_params(["jazz"], 4, 6, np.random.default_rng(0))
        windows = make_windows(*rolls(24, seed=5), window=16)
        loss, _ = batch_loss_and_grads(model, "jazz", windows, TINY, rng=None, training=False)
        assert loss == pytest.approx(evaluate(model, windows, "jazz"), rel=1e-12)


# ---------------------------------------------------------------------------
# Parameter sharing
# ---------------------------------------------------------------------------

class TestSharing:
    def test_jazz_step_leaves_classical_untouched(self):
        model = init_params(["classical", "jazz"], 4, 6, np.random.default_rng(0))
        params = model.named()
        before = {k: v.copy() for k, v in params.items()}

        batch = make_windows(*rolls(16, seed=2), window=16)
        _, grads = batch_loss_and_grads(model, "jazz", batch, TINY, np.random.default_rng(1))
        grads, _ = clip_by_global_norm(grads, 10.0)
        after, _ = adam_step(params, grads, AdamState(), 1e-3)

        for name in before:
            if name.startswith("branches.classical."):
                assert np.array_equal(after[name], before[name]), name
        assert not np.array_equal(after["interpretation.fwd.W"], before["interpretation.fwd.W"])
        assert not np.array_equal(after["branches.jazz.head.weight"], before["branches.jazz.head.weight"])


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

class TestTrain:
    def test_loss_log(self, manifest, tmp_path):
        out = tmp_path / "model.ckpt"
        result = quiet_trainer(TINY).train(manifest, out)
        records = read_loss_csv(tmp_path / "model.ckpt.losses.csv")
        assert len(records) == TINY.epochs * 2
        assert [(r.epoch, r.genre) for r in records[:2]] == [(1, "classical"), (1, "jazz")]
        assert records == result.losses
        assert all(r.val_loss is not None for r in records)
        assert load_checkpoint(out).epoch == TINY.epochs

    def test_runs_are_identical(self, manifest, tmp_path):
        quiet_trainer(TINY).train(manifest, tmp_path / "a.ckpt")
        quiet_trainer(TINY).train(manifest, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
        assert (tmp_path / "a.ckpt.losses.csv").read_bytes() == (tmp_path / "b.ckpt.losses.csv").read_bytes()

    def test_resume_matches_uninterrupted_run(self, manifest, tmp_path):
        full = TINY.with_overrides(epochs=4)
        quiet_trainer(full).train(manifest, tmp_path / "full.ckpt")

        quiet_trainer(TINY.with_overrides(epochs=2)).train(manifest, tmp_path / "part.ckpt")
        quiet_trainer(full).train(manifest, tmp_path / "part.ckpt", resume=load_checkpoint(tmp_path / "part.ckpt"))

        assert (tmp_path / "full.ckpt.losses.csv").read_bytes() == (tmp_path / "part.ckpt.losses.csv").read_bytes()
        assert (tmp_path / "full.ckpt").read_bytes() == (tmp_path / "part.ckpt").read_bytes()

    def test_zero_learning_rate_keeps_loss_constant(self, manifest, tmp_path):
        result = quiet_trainer(TINY.with_overrides(lr=0.0)).train(manifest, tmp_path / "m.ckpt")
        for genre in ("classical", "jazz"):
            losses = {(r.train_loss, r.val_loss) for r in result.losses if r.genre == genre}
            assert len(losses) == 1

    def test_checkpoint_interval(self, manifest, tmp_path):
        config = TINY.with_overrides(epochs=5, checkpoint_every=2)
        result = quiet_trainer(config).train(manifest, tmp_path / "m.ckpt")
        assert result.checkpoint.epoch == 5
        assert load_checkpoint(tmp_path / "m.ckpt").epoch == 5

    def test_divergence(self, manifest, tmp_path, monkeypatch):
        trainer = quiet_trainer(TINY)
        load_data = trainer.load_data

        def poisoned(m):
            train, validation = load_data(m)
            inputs, target = train["jazz"][0]
            train["jazz"][0] = (inputs, np.full_like(target, np.nan))
            return train, validation

        monkeypatch.setattr(trainer, "load_data", poisoned)
        with pytest.raises(DivergenceError):
            trainer.train(manifest, tmp_path / "m.ckpt")
        assert not (tmp_path / "m.ckpt").exists()


@pytest.mark.slow
class TestOverfit:
    def test_single_window_per_genre(self):
        steps = 200
        roll = np.zeros((steps, INPUT_WIDTH), dtype=np.uint8)
        targets = {"classical": np.zeros((steps, 88)), "jazz": np.zeros((steps, 88))}
        for t in range(0, steps, 4):
            for key in (39, 43, 46):
                roll[t:t + 3, 2 * key + 1] = 1
                roll[t, 2 * key] = 1
                targets["classical"][t, key] = 0.35 + 0.1 * (t % 16 == 0)
                targets["jazz"][t, key] = 0.6 - 0.15 * (t % 8 == 4)

        config = TrainConfig(window=steps, batch_size=1, interp_hidden=16, genre_hidden=32, seed=0)
        trainer = quiet_trainer(config)
        train = {g: make_windows(PianoRoll(roll), VelocityRoll(v), steps) for g, v in targets.items()}
        genres = sorted(train)
        rng = np.random.default_rng(0)
        ckpt = trainer.new_checkpoint(genres, rng)
        params, adam = ckpt.params, ckpt.adam

        history = []
        for epoch in range(1, 1001):
            params, adam = trainer.run_epoch(params, adam, genres, train, rng, epoch)
            model = StyleNetParams.from_named(params, genres)
            history.append(sum(evaluate(model, train[g], g) for g in genres))

        assert adam.t["interpretation.fwd.W"] == 2000
        assert adam.t["branches.jazz.head.bias"] == 1000
        for genre in genres:
            assert evaluate(model, train[genre], genre) < 1e-3

        # one epoch is two optimizer steps, so 25 epochs average over 50 steps
        averages = np.asarray(history).reshape(-1, 25).mean(axis=1)
        assert np.all(np.diff(averages) <= 1e-4), averages

        onsets = roll[:, 0::2].astype(bool)
        for genre in genres:
            predicted = predict(model, genre, roll)[onsets]
            assert len({denormalize(v) for v in predicted}) > 1
