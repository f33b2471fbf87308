import hashlib
import json
import os
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from rich.console import Console

from ..midi.midi_file import read_midi_file
from ..midi.note_events import NoteSpan, extract_notes
from ..roll.roll_codec import GridSpec, PianoRoll, VelocityRoll, encode

load_dotenv()

DEFAULT_CACHE_DIR = ".stylenet_cache"


class RollCache:
    def __init__(self, cache_dir: Optional[str] = None, console: Optional[Console] = None):
        self.cache_dir = Path(cache_dir or os.getenv("STYLENET_CACHE_DIR", DEFAULT_CACHE_DIR))
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.console = console or Console()
        self.metadata_file = self.cache_dir / "metadata.json"

    def _key(self, path: Path, steps_per_quarter: int) -> str:
        stat = path.stat()
        raw = f"{path.resolve()}|{stat.st_size}|{stat.st_mtime_ns}|{steps_per_quarter}"
        return hashlib.sha1(raw.encode()).hexdigest()

    def _read_index(self) -> Dict[str, Dict]:
        if not self.metadata_file.exists():
            return {}
        try:
            with open(self.metadata_file, 'r') as f:
                return json.load(f)
        except (OSError, ValueError):
            self.console.print("⚠️  Cache index unreadable, starting a new one")
            return {}

    def _write_index(self, index: Dict[str, Dict]):
        with open(self.metadata_file, 'w') as f:
            json.dump(index, f, indent=2, sort_keys=True)

    def load(self, path, steps_per_quarter: int = 4) -> Optional[Tuple[PianoRoll, VelocityRoll]]:
        """Cached rolls for path, or None when missing or stale."""
        path = Path(path)
        key = self._key(path, steps_per_quarter)
        if key not in self._read_index():
            return None
        try:
            with np.load(self.cache_dir / f"{key}.npz") as data:
                return PianoRoll(data['roll']), VelocityRoll(data['velocity'])
        except (OSError, KeyError, ValueError):
            return None

    def save(self, path, rolls: Tuple[PianoRoll, VelocityRoll], steps_per_quarter: int = 4):
        path = Path(path)
        key = self._key(path, steps_per_quarter)
        roll, velocity = rolls
        source = str(path.resolve())
        try:
            np.savez_compressed(self.cache_dir / f"{key}.npz", roll=roll.data, velocity=velocity.data)
            index = self._read_index()
            # drop encodings of earlier versions of the same file
            for stale in [k for k, entry in index.items() if k != key and entry.get('source') == source
                          and entry.get('steps_per_quarter') == steps_per_quarter]:
                (self.cache_dir / f"{stale}.npz").unlink(missing_ok=True)
                del index[stale]
            index[key] = {'path': str(path), 'source': source, 'steps_per_quarter': steps_per_quarter,
                          'steps': roll.steps, 'stored_at': time.time()}
            self._write_index(index)
        except OSError as e:
            self.console.print(f"⚠️  Failed to save cache: {e}")

    def info(self) -> Optional[Dict]:
        index = self._read_index()
        if not index:
            return None
        files = list(self.cache_dir.glob("*.npz"))
        stored = [entry['stored_at'] for entry in index.values()]
        return {
            'entries': len(index),
            'total_steps': sum(entry['steps'] for entry in index.values()),
            'size_bytes': sum(f.stat().st_size for f in files),
            'oldest': time.ctime(min(stored)),
            'newest': time.ctime(max(stored)),
        }

    def clear(self) -> bool:
        """Remove all cached rolls"""
        try:
            for f in self.cache_dir.glob("*.npz"):
                f.unlink()
            if self.metadata_file.exists():
                self.metadata_file.unlink()
            self.console.print("🗑️  Cache cleared")
            return True
        except OSError as e:
            self.console.print(f"❌ Failed to clear cache: {e}")
            return False

    def print_cache_status(self):
        info = self.info()
        if not info:
            self.console.print("📭 No cache available")
            return
        self.console.print(f"\n💾 Cache directory: {self.cache_dir}")
        self.console.print(f"📊 Files cached: {info['entries']:,}")
        self.console.print(f"🎹 Encoded steps: {info['total_steps']:,}")
        self.console.print(f"📦 Size on disk: {info['size_bytes'] / 1024:.1f} KB")
        self.console.print(f"📅 Oldest entry: {info['oldest']}")
        self.console.print(f"📅 Newest entry: {info['newest']}")


class CachedRollEncoder:
    """Parses and encodes MIDI files, reusing cached rolls when the file is unchanged."""

    def __init__(self, cache: Optional[RollCache] = None, use_cache: bool = True,
                 force_refresh: bool = False, steps_per_quarter: int = 4):
        self.use_cache = use_cache
        self.force_refresh = force_refresh
        self.steps_per_quarter = steps_per_quarter
        self.cache = cache if cache is not None else (RollCache() if use_cache else None)
        self.hits = 0
        self.misses = 0

    def encode_rolls(self, path) -> Tuple[PianoRoll, VelocityRoll]:
        if self.use_cache and not self.force_refresh:
            cached = self.cache.load(path, self.steps_per_quarter)
            if cached is not None:
                self.hits += 1
                return cached

        self.misses += 1
        spans, grid = load_spans(path, self.steps_per_quarter)
        rolls = encode(spans, grid)
        if self.use_cache:
            self.cache.save(path, rolls, self.steps_per_quarter)
        return rolls


def load_spans(path, steps_per_quarter: int = 4) -> Tuple[List[NoteSpan], GridSpec]:
    spans, division = extract_notes(read_midi_file(path))
    return spans, GridSpec(division, steps_per_quarter)
