"""Tests for corpus filtering, splitting and manifests."""

from pathlib import Path

import pytest
from rich.console import Console

from src.corpus.corpus_curator import (REASON_FORMAT, REASON_TIME_SIGNATURE, REASON_VELOCITY_RANGE, CorpusCurator,
                                       CorpusError, DatasetManifest, check_eligibility, check_genre_label,
                                       distinct_velocities, load_manifest, train_count, velocity_histogram)
from src.midi.note_events import NoteSpan


def quiet_curator(**kwargs) -> CorpusCurator:
    return CorpusCurator(console=Console(quiet=True), **kwargs)


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

class TestFilters:
    def test_distinct_velocities(self):
        assert distinct_velocities([]) == 0
        assert distinct_velocities([NoteSpan(60, i, 1, 64) for i in range(5)]) == 1
        assert distinct_velocities([NoteSpan(60, i, 1, 1 + i % 25) for i in range(100)]) == 25

    def test_format_one_rejected(self, midi_factory, notes_factory):
        assert check_eligibility(midi_factory(notes_factory(), fmt=1)) == (False, REASON_FORMAT)

    def test_performed_file_accepted(self, midi_factory, notes_factory):
        assert check_eligibility(midi_factory(notes_factory(distinct=25))) == (True, None)

    def test_few_velocities_rejected(self, midi_factory, notes_factory):
        assert check_eligibility(midi_factory(notes_factory(distinct=10))) == (False, REASON_VELOCITY_RANGE)

    def test_time_signature_rejected(self, midi_factory, notes_factory):
        midi = midi_factory(notes_factory(), time_signature=(3, 2))
        assert check_eligibility(midi) == (False, REASON_TIME_SIGNATURE)

    def test_first_failing_reason_wins(self, midi_factory, notes_factory):
        midi = midi_factory(notes_factory(distinct=3), fmt=1, time_signature=(6, 3))
        assert check_eligibility(midi) == (False, REASON_FORMAT)

    def test_threshold_is_inclusive(self, midi_factory, notes_factory):
        midi = midi_factory(notes_factory(distinct=20))
        assert check_eligibility(midi, threshold=20) == (True, None)
        assert check_eligibility(midi, threshold=21) == (False, REASON_VELOCITY_RANGE)

    @pytest.mark.parametrize("n, expected", [(20, 19), (1, 1), (2, 2), (10, 10), (100, 95), (0, 0)])
    def test_train_count(self, n, expected):
        assert train_count(n, 0.95) == expected

    @pytest.mark.parametrize("label", ["Jazz", "", "big band"])
    def test_bad_genre_labels(self, label):
        with pytest.raises(CorpusError):
            check_genre_label(label)


class TestHistogram:
    def test_example(self):
        assert velocity_histogram([1, 1, 5, 25]) == [(0, 9, 3), (10, 19, 0), (20, 29, 1)]

    def test_empty(self):
        assert velocity_histogram([]) == []

    def test_bin_width(self):
        assert velocity_histogram([0, 4, 5], bin_width=5) == [(0, 4, 2), (5, 9, 1)]


# ---------------------------------------------------------------------------
# Curation
# ---------------------------------------------------------------------------

class TestCurate:
    def test_counts(self, corpus_dirs, tmp_path):
        manifest = quiet_curator().curate(corpus_dirs, tmp_path / "manifest.json")
        assert manifest.genres == ["classical", "jazz"]
        assert manifest.genre_counts["classical"] == {'files': 7, 'accepted': 4, 'train': 4, 'validation': 0}
        assert manifest.genre_counts["jazz"]["accepted"] == 4

        reasons = {Path(e.path).name: e.rejection_reason for e in manifest.entries if not e.accepted}
        assert reasons == {
            "two_tracks.mid": REASON_FORMAT,
            "waltz.mid": REASON_TIME_SIGNATURE,
            "flat.mid": REASON_VELOCITY_RANGE,
        }
        assert all(e.split is None for e in manifest.entries if not e.accepted)

    def test_twenty_files_split(self, write_midi, notes_factory, tmp_path):
        for i in range(20):
            write_midi(f"jazz/{i:02d}.mid", notes_factory(count=30, seed=i))
        manifest = quiet_curator().curate({"jazz": str(tmp_path / "jazz")})
        assert len(manifest.files("jazz", "train")) == 19
        assert len(manifest.files("jazz", "validation")) == 1

    def test_same_seed_same_bytes(self, corpus_dirs, tmp_path):
        quiet_curator(seed=4, split_ratio=0.5).curate(corpus_dirs, tmp_path / "a.json")
        quiet_curator(seed=4, split_ratio=0.5, jobs=3).curate(corpus_dirs, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_round_trip(self, corpus_dirs, tmp_path):
        manifest = quiet_curator(split_ratio=0.5).curate(corpus_dirs, tmp_path / "manifest.json")
        assert load_manifest(tmp_path / "manifest.json") == manifest
        assert (tmp_path / "manifest.json").read_text().endswith("}\n")

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(CorpusError):
            quiet_curator().curate({"jazz": str(tmp_path / "empty")})

    def test_genre_without_accepted_files(self, write_midi, tmp_path):
        write_midi("jazz/flat.mid", [(60, i * 120, 120, 64) for i in range(10)])
        with pytest.raises(CorpusError):
            quiet_curator().curate({"jazz": str(tmp_path / "jazz")})

    def test_unreadable_file_skipped(self, corpus_dirs, tmp_path):
        (tmp_path / "jazz" / "broken.mid").write_bytes(b"not midi")
        curator = quiet_curator()
        manifest = curator.curate(corpus_dirs)
        assert [Path(p).name for p in curator.unreadable] == ["broken.mid"]
        assert all(Path(e.path).name != "broken.mid" for e in manifest.entries)


class TestManifest:
    def test_invalid_json(self):
        with pytest.raises(CorpusError):
            DatasetManifest.from_json("{")

    def test_keys_are_sorted(self, corpus_dirs):
        text = quiet_curator(split_ratio=0.5).curate(corpus_dirs).to_json()
        positions = [text.index(f'"{key}"') for key in ("entries", "genre_counts", "seed", "split_ratio", "threshold")]
        assert positions == sorted(positions)
        entry = text[text.index("{", text.index('"entries"')):]
        assert entry.index('"accepted"') < entry.index('"distinct_velocity_count"') < entry.index('"path"')

    def test_accepted_entry_must_pass_filters(self, corpus_dirs):
        manifest = quiet_curator(split_ratio=0.5).curate(corpus_dirs)
        text = manifest.to_json().replace('"distinct_velocity_count": 25', '"distinct_velocity_count": 3', 1)
        with pytest.raises(CorpusError):
            DatasetManifest.from_json(text)
