import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.progress import Progress
from rich.table import Table

from ..midi.midi_file import MidiFile, MidiFormatError, read_midi_file
from ..midi.note_events import NoteSpan, extract_notes

DEFAULT_THRESHOLD = 20
DEFAULT_SPLIT_RATIO = 0.95
MIDI_SUFFIXES = ('.mid', '.midi')
GENRE_PATTERN = re.compile(r'^[a-z0-9_-]+$')

REASON_FORMAT = "format"
REASON_TIME_SIGNATURE = "time-signature"
REASON_VELOCITY_RANGE = "velocity-range"


class CorpusError(RuntimeError):
    pass


def check_genre_label(name: str) -> str:
    if not GENRE_PATTERN.match(name or ''):
        raise CorpusError(f"genre label '{name}' must be non-empty lowercase letters, digits, '-' or '_'")
    return name


@dataclass
class CorpusEntry:
    path: str
    genre: str
    distinct_velocity_count: int
    is_4_4: bool
    format: int
    division: int
    accepted: bool
    rejection_reason: Optional[str] = None
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    entries: List[CorpusEntry]
    threshold: int = DEFAULT_THRESHOLD
    split_ratio: float = DEFAULT_SPLIT_RATIO
    seed: int = 0
    genre_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)

    @property
    def genres(self) -> List[str]:
        return sorted({entry.genre for entry in self.entries})

    def files(self, genre: str, split: str) -> List[str]:
        return [e.path for e in self.entries if e.genre == genre and e.accepted and e.split == split]

    def validate(self) -> "DatasetManifest":
        if not 0.0 < self.split_ratio < 1.0:
            raise CorpusError(f"split ratio {self.split_ratio} outside (0, 1)")
        for entry in self.entries:
            check_genre_label(entry.genre)
            if entry.accepted and not (entry.format == 0 and entry.is_4_4
                                       and entry.distinct_velocity_count >= self.threshold):
                raise CorpusError(f"{entry.path} is accepted but fails the corpus filters")
            if entry.accepted != (entry.split in ("train", "validation")):
                raise CorpusError(f"{entry.path} has split {entry.split!r} but accepted={entry.accepted}")
        return self

    def to_json(self) -> str:
        data = {
            'threshold': self.threshold,
            'split_ratio': self.split_ratio,
            'seed': self.seed,
            'genre_counts': self.genre_counts,
            'entries': [asdict(entry) for entry in self.entries],
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, 'w') as f:
            f.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            data = json.loads(text)
            return cls(
                entries=[CorpusEntry(**entry) for entry in data['entries']],
                threshold=data['threshold'],
                split_ratio=data['split_ratio'],
                seed=data['seed'],
                genre_counts=data.get('genre_counts', {}),
            ).validate()
        except (ValueError, KeyError, TypeError) as e:
            raise CorpusError(f"invalid manifest: {e}") from e


def load_manifest(path) -> DatasetManifest:
    with open(path, 'r') as f:
        return DatasetManifest.from_json(f.read())


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

def distinct_velocities(spans: Sequence[NoteSpan]) -> int:
    return len({span.velocity for span in spans})


def is_four_four(midi: MidiFile) -> bool:
    """Every time signature is 4/4; a file without one counts as 4/4."""
    return all(signature.is_4_4 for signature in midi.time_signatures())


def check_eligibility(midi: MidiFile, threshold: int = DEFAULT_THRESHOLD) -> Tuple[bool, Optional[str]]:
    if midi.format != 0:
        return False, REASON_FORMAT
    if not is_four_four(midi):
        return False, REASON_TIME_SIGNATURE
    spans, _ = extract_notes(midi)
    if distinct_velocities(spans) < threshold:
        return False, REASON_VELOCITY_RANGE
    return True, None


def train_count(accepted: int, ratio: float) -> int:
    """round(n * ratio), half up, clamped to [1, n]."""
    return min(accepted, max(1, math.floor(accepted * ratio + 0.5)))


def velocity_histogram(counts: Sequence[int], bin_width: int = 10) -> List[Tuple[int, int, int]]:
    """Groups distinct-velocity counts into [low, high] bins of bin_width."""
    if bin_width < 1:
        raise ValueError("bin width must be positive")
    if not counts:
        return []
    tallies = np.bincount(np.asarray(counts, dtype=np.int64) // bin_width)
    return [(i * bin_width, (i + 1) * bin_width - 1, int(n)) for i, n in enumerate(tallies)]


def midi_files_in(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"cannot read directory {directory}")
    return sorted(p for p in directory.rglob('*') if p.is_file() and p.suffix.lower() in MIDI_SUFFIXES)


# ---------------------------------------------------------------------------
# Curation
# ---------------------------------------------------------------------------

class CorpusCurator:
    def __init__(self, threshold: int = DEFAULT_THRESHOLD, split_ratio: float = DEFAULT_SPLIT_RATIO,
                 seed: int = 0, jobs: int = 1, console: Optional[Console] = None):
        if not 0.0 < split_ratio < 1.0:
            raise CorpusError(f"split ratio {split_ratio} outside (0, 1)")
        self.threshold = threshold
        self.split_ratio = split_ratio
        self.seed = seed
        self.jobs = max(1, jobs)
        self.console = console or Console()
        self.unreadable: List[str] = []

    def inspect_file(self, path: Path, genre: str) -> Optional[CorpusEntry]:
        try:
            midi = read_midi_file(path)
        except (OSError, MidiFormatError) as e:
            self.console.print(f"⚠️  Skipping unreadable file {path}: {e}")
            return None
        spans, _ = extract_notes(midi)
        accepted, reason = check_eligibility(midi, self.threshold)
        return CorpusEntry(
            path=str(path),
            genre=genre,
            distinct_velocity_count=distinct_velocities(spans),
            is_4_4=is_four_four(midi),
            format=midi.format,
            division=midi.division,
            accepted=accepted,
            rejection_reason=reason,
        )

    def scan_genre(self, genre: str, directory) -> List[CorpusEntry]:
        paths = midi_files_in(directory)
        if not paths:
            raise CorpusError(f"no MIDI files found for genre '{genre}' in {directory}")

        entries: List[CorpusEntry] = []
        with Progress(console=self.console, transient=True) as progress:
            task = progress.add_task(f"Scanning {genre}...", total=len(paths))
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                # map keeps path order
                for path, entry in zip(paths, pool.map(lambda p: self.inspect_file(p, genre), paths)):
                    progress.update(task, advance=1, description=f"Scanning: {path.name}")
                    if entry is None:
                        self.unreadable.append(str(path))
                    else:
                        entries.append(entry)
        return entries

    def assign_splits(self, entries: List[CorpusEntry], rng: np.random.Generator) -> Dict[str, int]:
        accepted = sorted((e for e in entries if e.accepted), key=lambda e: e.path)
        order = rng.permutation(len(accepted))
        n_train = train_count(len(accepted), self.split_ratio)
        for rank, index in enumerate(order):
            accepted[index].split = "train" if rank < n_train else "validation"
        return {
            'files': len(entries),
            'accepted': len(accepted),
            'train': n_train,
            'validation': len(accepted) - n_train,
        }

    def curate(self, genre_dirs: Mapping[str, str], out_path=None) -> DatasetManifest:
        """Scans one directory per genre, filters, splits and (optionally) writes the manifest."""
        if not genre_dirs:
            raise CorpusError("at least one genre directory is required")
        self.console.print("🔍 Curating MIDI corpus...")
        rng = np.random.default_rng(self.seed)
        self.unreadable = []

        all_entries: List[CorpusEntry] = []
        counts: Dict[str, Dict[str, int]] = {}
        for genre in sorted(genre_dirs):
            check_genre_label(genre)
            entries = self.scan_genre(genre, genre_dirs[genre])
            counts[genre] = self.assign_splits(entries, rng)
            if counts[genre]['accepted'] == 0:
                raise CorpusError(f"no file of genre '{genre}' passed the filters; cannot train its branch")
            if counts[genre]['validation'] == 0:
                self.console.print(f"⚠️  Validation split for '{genre}' is empty "
                                   f"({counts[genre]['accepted']} accepted file(s))")
            all_entries.extend(entries)

        manifest = DatasetManifest(all_entries, self.threshold, self.split_ratio, self.seed, counts)
        manifest.validate()
        if out_path is not None:
            manifest.save(out_path)
            self.console.print(f"💾 Manifest written to {out_path}")
        self.console.print(f"✅ Curation complete! {sum(c['accepted'] for c in counts.values())} "
                           f"of {len(all_entries)} files accepted")
        return manifest

    def print_summary(self, manifest: DatasetManifest):
        table = Table(show_header=True, header_style="bold magenta")
        table.add_column("Genre", style="cyan")
        table.add_column("Files", justify="right")
        table.add_column("Accepted", justify="right", style="green")
        table.add_column("Train", justify="right")
        table.add_column("Validation", justify="right")
        for reason in (REASON_FORMAT, REASON_TIME_SIGNATURE, REASON_VELOCITY_RANGE):
            table.add_column(f"✗ {reason}", justify="right", style="red")

        for genre in manifest.genres:
            entries = [e for e in manifest.entries if e.genre == genre]
            counts = manifest.genre_counts.get(genre, {})
            rejected = [sum(1 for e in entries if e.rejection_reason == reason)
                        for reason in (REASON_FORMAT, REASON_TIME_SIGNATURE, REASON_VELOCITY_RANGE)]
            table.add_row(genre, str(len(entries)), str(counts.get('accepted', 0)),
                          str(counts.get('train', 0)), str(counts.get('validation', 0)),
                          *map(str, rejected))

        self.console.print(table)
        if self.unreadable:
            self.console.print(f"⚠️  {len(self.unreadable)} unreadable file(s) skipped")

    def print_histogram(self, counts: Sequence[int], bin_width: int = 10):
        table = Table(show_header=True, header_style="bold magenta", title="Distinct velocities per file")
        table.add_column("Velocities", style="cyan")
        table.add_column("Files", justify="right", style="green")
        table.add_column("", style="blue")
        bins = velocity_histogram(counts, bin_width)
        widest = max((n for _, _, n in bins), default=0)
        for low, high, n in bins:
            bar = "█" * (round(40 * n / widest) if widest else 0)
            table.add_row(f"{low}-{high}", str(n), bar)
        self.console.print(table)
        if counts:
            above = sum(1 for c in counts if c >= self.threshold)
            self.console.print(f"🎹 {above} of {len(counts)} files have at least {self.threshold} "
                               f"distinct velocities ({100 * above / len(counts):.1f}%)")
