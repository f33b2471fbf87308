#!/usr/bin/env python3
"""
StyleNet Performer
A command-line tool to curate performed MIDI, train genre-specific velocity
models and render expressive performances of plain scores.
"""

import logging
import sys
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from src.cache.roll_cache import CachedRollEncoder, RollCache
from src.corpus.corpus_curator import (DEFAULT_SPLIT_RATIO, DEFAULT_THRESHOLD, CorpusCurator, distinct_velocities,
                                       load_manifest, midi_files_in)
from src.midi.midi_file import MidiFormatError, read_midi_file, write_midi_file
from src.midi.note_events import extract_notes
from src.roll.roll_codec import GridSpec, count_out_of_range, dump_csv, encode
from src.stylenet.checkpoint import load_checkpoint
from src.stylenet.config import resolve_config
from src.stylenet.gradcheck_suite import run_gradcheck_suite
from src.stylenet.model import StyleNetParams
from src.stylenet.performer import perform_all_genres, predict_performance, snapshot
from src.stylenet.trainer import StyleNetTrainer

console = Console()

EXISTING_FILE = click.Path(exists=True, dir_okay=False)
EXISTING_DIR = click.Path(exists=True, file_okay=False)


def fail(e: Exception):
    console.print(f"❌ Error: {e}")
    sys.exit(1)


def print_config(title: str, values: dict):
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    for key in sorted(values):
        table.add_row(key, str(values[key]))
    console.print(table)


def load_model(ckpt_path):
    ckpt = load_checkpoint(ckpt_path)
    return ckpt, StyleNetParams.from_named(ckpt.params, ckpt.genres)


def require_genre(genre, genres):
    if genre not in genres:
        raise click.UsageError(f"unknown genre '{genre}'; available genres: {', '.join(genres)}")


@click.group()
@click.version_option(version="1.0.0")
@click.option('--verbose', is_flag=True, help='Show debug logging')
def cli(verbose):
    """StyleNet Performer - Give plain MIDI scores a human touch"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )
    console.print(Panel.fit(
        "[bold blue]StyleNet Performer[/]\n"
        "Curate, train and render genre-styled velocity performances",
        style="blue"
    ))


@cli.command()
@click.option('--classical', type=EXISTING_DIR, help='Directory of classical performances')
@click.option('--jazz', type=EXISTING_DIR, help='Directory of jazz performances')
@click.option('--genre-dir', 'extra', multiple=True, metavar='LABEL=DIR',
              help='Additional genre directory (repeatable)')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Manifest file to write')
@click.option('--threshold', default=DEFAULT_THRESHOLD, show_default=True,
              help='Minimum number of distinct velocities')
@click.option('--split', default=DEFAULT_SPLIT_RATIO, show_default=True, help='Training share of each genre')
@click.option('--seed', default=0, show_default=True, help='Seed for the train/validation split')
@click.option('--jobs', default=4, show_default=True, help='Files inspected in parallel')
def curate(classical, jazz, extra, out, threshold, split, seed, jobs):
    """Filter genre folders into a train/validation manifest"""
    genre_dirs = {label: path for label, path in (('classical', classical), ('jazz', jazz)) if path}
    for item in extra:
        label, sep, path = item.partition('=')
        if not sep or not Path(path).is_dir():
            raise click.BadParameter(f"expected LABEL=DIR with an existing directory, got '{item}'",
                                     param_hint='--genre-dir')
        genre_dirs[label] = path
    if not genre_dirs:
        raise click.UsageError("give at least one genre directory")

    print_config("Curation settings", {'threshold': threshold, 'split': split, 'seed': seed, 'jobs': jobs,
                                       **{f"dir.{k}": v for k, v in genre_dirs.items()}})
    try:
        curator = CorpusCurator(threshold=threshold, split_ratio=split, seed=seed, jobs=jobs, console=console)
        manifest = curator.curate(genre_dirs, out_path=out)
        curator.print_summary(manifest)
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--in', 'in_path', required=True, type=EXISTING_FILE, help='MIDI file to inspect')
@click.option('--csv', 'csv_prefix', help='Dump the input and velocity matrices as <prefix>_*.csv')
def inspect(in_path, csv_prefix):
    """Summarize a MIDI file and its piano-roll encoding"""
    print_config("Inspect settings", {'in': in_path, 'csv': csv_prefix})
    try:
        midi = read_midi_file(in_path)
        spans, division = extract_notes(midi)
        grid = GridSpec(division)
        signatures = [f"{ts.numerator}/{2 ** ts.denominator_power}" for ts in midi.time_signatures()]

        console.print(f"\n🎼 [bold]{in_path}[/]")
        console.print(f"  • format: {midi.format}")
        console.print(f"  • division: {division} ticks per quarter")
        console.print(f"  • tracks: {len(midi.tracks)}")
        console.print(f"  • time signatures: {', '.join(signatures) or 'none'}")
        console.print(f"  • notes: {len(spans)}")
        console.print(f"  • distinct velocities: {distinct_velocities(spans)}")

        dropped = count_out_of_range(spans, grid)
        if dropped:
            console.print(f"⚠️  {dropped} note(s) outside the 88-key range are not encoded")

        if csv_prefix:
            roll, vel = encode(spans, grid)
            input_csv, velocity_csv = dump_csv(roll, vel, csv_prefix)
            console.print(f"💾 Wrote {roll.steps} steps to {input_csv} and {velocity_csv}")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--manifest', required=True, type=EXISTING_FILE, help='Manifest written by curate')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Checkpoint file to write')
@click.option('--log', 'log_path', type=click.Path(dir_okay=False), help='Loss CSV (default: <out>.losses.csv)')
@click.option('--epochs', type=int, help='Number of epochs [160]')
@click.option('--lr', type=float, help='Adam learning rate [1e-3]')
@click.option('--window', type=int, help='Truncated BPTT window in steps [200]')
@click.option('--clip', 'clip_norm', type=float, help='Global gradient norm limit [10]')
@click.option('--keep-prob', type=float, help='Dropout keep probability [0.8]')
@click.option('--batch-size', type=int, help='Windows per batch [4]')
@click.option('--interp-hidden', type=int, help='Interpretation units per direction [88]')
@click.option('--genre-hidden', type=int, help='GenreNet units per direction [128]')
@click.option('--checkpoint-every', type=int, help='Epochs between checkpoints [10]')
@click.option('--masked-loss/--full-loss', default=None, help='Score only cells where a note sounds')
@click.option('--seed', type=int, help='Seed for initialization, shuffling and dropout [0]')
@click.option('--resume', type=EXISTING_FILE, help='Checkpoint to continue from')
@click.option('--force-refresh', is_flag=True, help='Re-encode every file, ignore cached rolls')
@click.option('--no-cache', is_flag=True, help='Disable the roll cache for this run')
def train(manifest, out, log_path, resume, force_refresh, no_cache, **flags):
    """Train the shared interpretation layer and one GenreNet per genre"""
    try:
        data = load_manifest(manifest)
        checkpoint = load_checkpoint(resume) if resume else None
        config = resolve_config(flags, checkpoint.config if checkpoint else None)
        print_config("Training configuration", config.to_dict())

        encoder = CachedRollEncoder(use_cache=not no_cache, force_refresh=force_refresh)
        trainer = StyleNetTrainer(config, encoder=encoder, console=console)
        result = trainer.train(data, out, log_path=log_path, resume=checkpoint)

        final = [r for r in result.losses if r.epoch == result.checkpoint.epoch]
        for record in final:
            val = "n/a" if record.val_loss is None else f"{record.val_loss:.3e}"
            console.print(f"  • [bold cyan]{record.genre}[/]: train {record.train_loss:.3e}, validation {val}")
        if not no_cache:
            console.print(f"💾 Roll cache: {encoder.hits} hit(s), {encoder.misses} miss(es)")
        console.print("✅ Training complete!")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--ckpt', required=True, type=EXISTING_FILE, help='Trained checkpoint')
@click.option('--in', 'in_path', required=True, type=EXISTING_FILE, help='Score to perform')
@click.option('--genre', help='Genre branch to perform with')
@click.option('--all-genres', is_flag=True, help='Write one performance per genre')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Performed MIDI file')
@click.option('--window', type=int, help='Inference window in steps (default: from checkpoint)')
def render(ckpt, in_path, genre, all_genres, out, window):
    """Predict velocities for a score and write the performance"""
    if not genre and not all_genres:
        raise click.UsageError("give --genre or --all-genres")
    try:
        checkpoint, params = load_model(ckpt)
        midi = read_midi_file(in_path)
    except Exception as e:
        fail(e)
    genres = params.genres if all_genres else [genre]
    for label in genres:
        require_genre(label, params.genres)

    config = resolve_config({'window': window}, checkpoint.config)
    print_config("Render configuration", {'checkpoint': ckpt, 'epoch': checkpoint.epoch,
                                          'genres': ', '.join(genres), 'window': config.window})
    try:
        out = Path(out)
        if all_genres:
            performances = perform_all_genres(params, midi, config.window)
        else:
            performances = {genre: predict_performance(params, midi, genre, config.window)}
        for label, performed in performances.items():
            target = out.with_name(f"{out.stem}.{label}{out.suffix}") if all_genres else out
            write_midi_file(performed, target)
            console.print(f"🎹 [bold cyan]{label}[/] performance written to {target}")
        console.print("✅ Rendering complete!")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--seed', default=0, show_default=True, help='Seed of the first trial')
@click.option('--trials', default=20, show_default=True, help='Random instances per layer')
@click.option('--tolerance', default=1e-4, show_default=True, help='Maximum relative error')
@click.option('--inject-fault', is_flag=True, hidden=True)
def gradcheck(seed, trials, tolerance, inject_fault):
    """Check every backward pass against central finite differences"""
    print_config("Gradient check settings", {'seed': seed, 'trials': trials, 'tolerance': tolerance})
    try:
        with console.status("Running finite-difference checks..."):
            rows = run_gradcheck_suite(seed=seed, trials=trials, tolerance=tolerance, inject_fault=inject_fault)
    except Exception as e:
        fail(e)

    table = Table(title="Gradient check", show_header=True, header_style="bold magenta")
    table.add_column("Layer", style="cyan")
    table.add_column("Max relative error", justify="right")
    table.add_column("Result")
    for row in rows:
        table.add_row(row.layer, f"{row.max_error:.3e}", "[green]pass[/]" if row.passed else "[red]FAIL[/]")
    console.print(table)

    if all(row.passed for row in rows):
        console.print("✅ All gradients match")
    else:
        console.print(f"❌ Gradient check failed at tolerance {tolerance:g}")
        sys.exit(1)


@cli.command()
@click.option('--dir', 'dirs', required=True, multiple=True, type=EXISTING_DIR,
              help='Directory of MIDI files (repeatable)')
@click.option('--bin-width', default=10, show_default=True, help='Histogram bin width')
@click.option('--threshold', default=DEFAULT_THRESHOLD, show_default=True,
              help='Distinct-velocity threshold to report against')
def histogram(dirs, bin_width, threshold):
    """Show how many distinct velocities the files in some folders use"""
    if bin_width < 1:
        raise click.BadParameter("must be at least 1", param_hint='--bin-width')
    print_config("Histogram settings", {'dirs': ', '.join(dirs), 'bin_width': bin_width, 'threshold': threshold})
    try:
        counts = []
        skipped = 0
        for directory in dirs:
            for path in midi_files_in(directory):
                try:
                    spans, _ = extract_notes(read_midi_file(path))
                except (OSError, MidiFormatError):
                    skipped += 1
                    continue
                counts.append(distinct_velocities(spans))
        if skipped:
            console.print(f"⚠️  {skipped} unreadable file(s) skipped")
        CorpusCurator(threshold=threshold, console=console).print_histogram(counts, bin_width)
    except Exception as e:
        fail(e)


@cli.command('snapshot')
@click.option('--ckpt', required=True, type=EXISTING_FILE, help='Trained checkpoint')
@click.option('--in', 'in_path', required=True, type=EXISTING_FILE, help='Performed MIDI file')
@click.option('--genre', required=True, help='Genre branch to evaluate')
@click.option('--csv', 'csv_prefix', help='Dump predicted and performed velocities as <prefix>_*.csv')
def snapshot_cmd(ckpt, in_path, genre, csv_prefix):
    """Compare predicted velocities with the performed ones"""
    try:
        checkpoint, params = load_model(ckpt)
        midi = read_midi_file(in_path)
    except Exception as e:
        fail(e)
    require_genre(genre, params.genres)

    config = resolve_config(checkpoint_config=checkpoint.config)
    print_config("Snapshot configuration", {'checkpoint': ckpt, 'epoch': checkpoint.epoch,
                                            'genre': genre, 'window': config.window})
    try:
        result = snapshot(params, midi, genre, config.window)
        console.print(f"📈 Velocity MSE for [bold cyan]{genre}[/]: {result.mse:.4e} over {result.predicted.steps} steps")
        if csv_prefix:
            predicted_csv, performed_csv = f"{csv_prefix}_predicted.csv", f"{csv_prefix}_performed.csv"
            np.savetxt(predicted_csv, result.predicted.data, delimiter=',', fmt='%.6f')
            np.savetxt(performed_csv, result.performed.data, delimiter=',', fmt='%.6f')
            console.print(f"💾 Wrote {predicted_csv} and {performed_csv}")
    except Exception as e:
        fail(e)


@cli.command('cache-status')
def cache_status():
    """Show roll cache status"""
    try:
        RollCache(console=console).print_cache_status()
    except Exception as e:
        fail(e)


@cli.command('cache-clear')
@click.confirmation_option(prompt='Clear all cached piano rolls?')
def cache_clear():
    """Clear all cached piano rolls"""
    try:
        if not RollCache(console=console).clear():
            sys.exit(1)
    except Exception as e:
        fail(e)


if __name__ == '__main__':
    cli()
