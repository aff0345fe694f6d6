"""Melody extraction, windowing, and dataset construction.

Quantized note events are resolved to a monophonic line (highest pitch
wins at each grid step), split into melodies at a full bar of silence,
filtered to spans of at least four bars with at least three distinct
pitches, and cut into four-bar windows at a one-bar stride.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import midi
from .attributes import METRICAL_WEIGHTS
from .tokens import (
    NOTE_HOLD,
    NOTE_OFF,
    SEQ_LEN,
    STEPS_PER_BAR,
    NoteEvent,
    transpose,
)

log = logging.getLogger(__name__)

MIN_DISTINCT_PITCHES = 3
MIN_BARS = 4
SILENCE_STEPS = STEPS_PER_BAR  # a full bar of rest ends a melody
MAX_TRANSPOSE_RETRIES = 5


@dataclass(frozen=True, slots=True)
class Melody:
    """A monophonic line rebased to the start of its first bar."""

    events: tuple[NoteEvent, ...]
    num_bars: int

    def step_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-step (pitch, is_onset) over the melody's bar span."""
        steps = self.num_bars * STEPS_PER_BAR
        pitch = np.full(steps, -1, dtype=np.int16)
        onset = np.zeros(steps, dtype=bool)
        for ev in self.events:
            end = min(ev.offset, steps)
            pitch[ev.onset:end] = ev.pitch
            onset[ev.onset] = True
        return pitch, onset


@dataclass(slots=True)
class IngestCounters:
    files_read: int = 0
    files_skipped: int = 0
    notes_skipped: int = 0
    candidates: int = 0
    rejected_short: int = 0
    rejected_pitches: int = 0

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in self.__slots__}


def resolve_monophonic(events: list[NoteEvent]) -> list[NoteEvent]:
    """Reduce overlapping notes to one line, keeping the highest pitch.

    The winning note instance is tracked per step, so a re-onset of the
    same pitch stays a separate event and an interrupted note resumes as
    a fresh onset.
    """
    if not events:
        return []
    total = max(ev.offset for ev in events)
    winner_pitch = np.full(total, -1, dtype=np.int32)
    winner_id = np.full(total, -1, dtype=np.int64)
    # paint in ascending (pitch, onset) order so higher pitches, and among
    # equal pitches the later onset, overwrite earlier ones
    order = sorted(range(len(events)), key=lambda i: (events[i].pitch, events[i].onset))
    for i in order:
        ev = events[i]
        winner_pitch[ev.onset:ev.offset] = ev.pitch
        winner_id[ev.onset:ev.offset] = i
    out: list[NoteEvent] = []
    start = 0
    for step in range(1, total + 1):
        if step == total or winner_id[step] != winner_id[start]:
            if winner_id[start] >= 0:
                src = events[winner_id[start]]
                out.append(
                    NoteEvent(int(winner_pitch[start]), start, step - start, src.program, src.channel)
                )
            start = step
    return out


def extract_melodies(
    events: list[NoteEvent], counters: IngestCounters | None = None
) -> list[Melody]:
    """Split a monophonic-resolved event stream into qualifying melodies."""
    counters = counters if counters is not None else IngestCounters()
    line = resolve_monophonic([ev for ev in events if ev.channel != midi.DRUM_CHANNEL])
    groups: list[list[NoteEvent]] = []
    for ev in line:
        if groups and ev.onset - groups[-1][-1].offset >= SILENCE_STEPS:
            groups.append([ev])
        elif groups:
            groups[-1].append(ev)
        else:
            groups = [[ev]]
    melodies: list[Melody] = []
    for group in groups:
        counters.candidates += 1
        base = (group[0].onset // STEPS_PER_BAR) * STEPS_PER_BAR
        rebased = tuple(
            NoteEvent(ev.pitch, ev.onset - base, ev.duration, ev.program, ev.channel)
            for ev in group
        )
        num_bars = math.ceil(max(ev.offset for ev in rebased) / STEPS_PER_BAR)
        if num_bars < MIN_BARS:
            counters.rejected_short += 1
            continue
        if len({ev.pitch for ev in rebased}) < MIN_DISTINCT_PITCHES:
            counters.rejected_pitches += 1
            continue
        melodies.append(Melody(rebased, num_bars))
    return melodies


def segment(melody: Melody) -> list[np.ndarray]:
    """Tokenize the B-3 four-bar windows of a B-bar melody.

    A note crossing a window's start contributes nothing to that window
    (its in-window continuation becomes rests); a note crossing the end
    is held to the window edge.
    """
    if melody.num_bars < MIN_BARS:
        raise ValueError(f"melody spans {melody.num_bars} bars, need >= {MIN_BARS}")
    pitch, onset = melody.step_arrays()
    windows = []
    for k in range(melody.num_bars - MIN_BARS + 1):
        lo = k * STEPS_PER_BAR
        tokens = np.full(SEQ_LEN, NOTE_OFF, dtype=np.int16)
        sounding = False
        for s in range(SEQ_LEN):
            p = pitch[lo + s]
            if p < 0:
                sounding = False
            elif onset[lo + s]:
                tokens[s] = p
                sounding = True
            elif sounding:
                tokens[s] = NOTE_HOLD
        windows.append(tokens)
    return windows


def melodies_from_midi(path: str | Path, counters: IngestCounters) -> list[tuple[str, Melody]]:
    """All qualifying melodies of one file, keyed by a stable source id.

    Only maximal 4/4 spans are scanned; each (span, track, channel)
    group is quantized against its span start and mined independently.
    """
    try:
        mf = midi.read_midi(path)
    except (midi.MidiParseError, OSError) as exc:
        log.warning("skipping %s: %s", path, exc)
        counters.files_skipped += 1
        return []
    counters.files_read += 1
    stem = Path(path).stem
    found: list[tuple[str, Melody]] = []
    spans = midi.four_four_spans(mf)
    for span_idx, (lo, hi) in enumerate(spans):
        for track_idx, notes in enumerate(mf.tracks):
            by_channel: dict[int, list[midi.RawNote]] = {}
            for note in notes:
                if note.channel == midi.DRUM_CHANNEL:
                    continue
                if not lo <= note.start_tick < hi:
                    continue
                clipped = midi.RawNote(
                    note.pitch,
                    note.start_tick - lo,
                    min(note.end_tick, hi) - lo,
                    note.channel,
                    note.program,
                )
                by_channel.setdefault(note.channel, []).append(clipped)
            for channel in sorted(by_channel):
                events, skipped = midi.quantize_track(by_channel[channel], mf.ticks_per_quarter)
                counters.notes_skipped += skipped
                for mel_idx, melody in enumerate(extract_melodies(events, counters)):
                    source = f"{stem}:{span_idx}:{track_idx}:{channel}:{mel_idx}"
                    found.append((source, melody))
    return found


def _split_bounds(n: int, ratios: tuple[float, float, float]) -> list[int]:
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios {ratios} do not sum to 1")
    cut1 = round(ratios[0] * n)
    cut2 = round((ratios[0] + ratios[1]) * n)
    return [0, cut1, cut2, n]


def _assemble(
    per_melody: list[tuple[str, list[np.ndarray]]],
    split_ratios: tuple[float, float, float],
    augmentation_count: int,
    seed: int,
    meta: dict,
) -> ds.Dataset:
    """Dedup windows, split by melody, augment the training split."""
    per_melody = sorted(per_melody, key=lambda m: m[0])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(per_melody))
    bounds = _split_bounds(len(per_melody), split_ratios)
    seen: set[bytes] = set()
    split_records: dict[str, list[tuple[str, np.ndarray]]] = {s: [] for s in ds.SPLIT_NAMES}
    for split, lo, hi in zip(ds.SPLIT_NAMES, bounds[:-1], bounds[1:]):
        for mel_pos in sorted(order[lo:hi]):
            source, windows = per_melody[mel_pos]
            for w_idx, tokens in enumerate(windows):
                key = tokens.astype(np.uint8).tobytes()
                if key in seen:
                    continue
                seen.add(key)
                split_records[split].append((f"{source}:{w_idx}", tokens))
    for source, tokens in list(split_records["train"]):
        for k in range(augmentation_count):
            for _ in range(MAX_TRANSPOSE_RETRIES):
                shift = int(rng.integers(1, 25))  # [-12, 12] without 0
                shift = shift - 25 if shift > 12 else shift
                moved = transpose(tokens, shift)
                if moved is None:
                    continue
                key = moved.astype(np.uint8).tobytes()
                if key in seen:
                    continue
                seen.add(key)
                split_records["train"].append((f"{source}:aug{k}", moved))
                break
    all_tokens = []
    source_ids = []
    splits: dict[str, tuple[int, int]] = {}
    pos = 0
    for split in ds.SPLIT_NAMES:
        records = sorted(split_records[split], key=lambda r: r[0])
        splits[split] = (pos, pos + len(records))
        pos += len(records)
        for source, tokens in records:
            source_ids.append(source)
            all_tokens.append(tokens)
    if not all_tokens:
        raise ds.DatasetError("no sequences survived extraction")
    return ds.build(np.stack(all_tokens), source_ids, splits, meta)


def build_dataset(
    midi_paths: list[str | Path],
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    augmentation_count: int = 1,
    seed: int = 0,
) -> tuple[ds.Dataset, IngestCounters]:
    """Ingest MIDI files into a deduplicated, split, augmented dataset."""
    counters = IngestCounters()
    per_melody: list[tuple[str, list[np.ndarray]]] = []
    for path in sorted(str(p) for p in midi_paths):
        for source, melody in melodies_from_midi(path, counters):
            per_melody.append((source, segment(melody)))
    if not per_melody:
        raise ds.DatasetError(
            f"no melodies extracted from {len(list(midi_paths))} files "
            f"({counters.files_skipped} unreadable)"
        )
    meta = {"kind": "midi", "seed": seed, "counters": counters.as_dict()}
    return _assemble(per_melody, split_ratios, augmentation_count, seed, meta), counters


# --- synthetic corpus ----------------------------------------------------

_WEIGHTS = METRICAL_WEIGHTS.astype(np.float64)
PITCH_LO, PITCH_HI = 21, 108  # 88-key piano span

# Per-melody attribute levels.  Each window draws one level per knob, so
# every attribute spreads widely while staying roughly independent of the
# others.  The bias exponents are large so onset probabilities saturate
# near 0 or 1 and rhythms stay metrically structured (low entropy, hence
# learnable by a small sequence model) instead of mid-range Bernoulli
# noise.  The high end of the rhythm-complexity range comes from shifting
# whole bars one step off the grid, which keeps their entropy as low as
# the on-grid bars'; pitch follows a deterministic triangle walk, so the
# exact pitch sequence is a function of a few per-melody parameters a
# decoder can actually recover, rather than a random process it cannot.
_DENSITY_LEVELS = (0.08, 0.12, 0.18, 0.27, 0.40)
_BIAS_LEVELS = (2.0, 2.5, 3.0, 3.5, 4.0)
_ROLL_PROB_LEVELS = (0.0, 0.0, 0.0, 0.25, 0.5, 1.0)
_WALK_LEVELS = (0, 1, 2, 3, 4, 6)
_HALFWIDTH_LEVELS = (2, 4, 7, 12, 18, 30)
_SUSTAIN_LEVELS = (0.25, 0.5, 0.75, 1.0)
_START_FRACTIONS = (0.0, 0.5, 1.0)  # walk starts at bottom/middle/top


def _synth_window(rng: np.random.Generator) -> np.ndarray:
    """One four-bar window with independently sampled attribute levels.

    Onsets are sampled with probability proportional to the metrical
    weights raised to a per-melody bias and scaled to a per-melody
    density level, then each bar is independently shifted one step off
    the grid with a per-melody probability; pitches traverse a triangle
    wave with a per-melody interval size inside a per-melody tessitura,
    so pitch range decouples from interval size.
    """
    density = _DENSITY_LEVELS[rng.integers(len(_DENSITY_LEVELS))]
    bias = _BIAS_LEVELS[rng.integers(len(_BIAS_LEVELS))]
    roll_prob = _ROLL_PROB_LEVELS[rng.integers(len(_ROLL_PROB_LEVELS))]
    walk_scale = _WALK_LEVELS[rng.integers(len(_WALK_LEVELS))]
    halfwidth = _HALFWIDTH_LEVELS[rng.integers(len(_HALFWIDTH_LEVELS))]
    sustain = _SUSTAIN_LEVELS[rng.integers(len(_SUSTAIN_LEVELS))]
    center = int(rng.integers(45, 85))

    shaped = _WEIGHTS**bias
    probs = np.clip(density * shaped / shaped.mean(), 0.002, 0.998)
    mask = rng.random(SEQ_LEN) < probs
    if roll_prob > 0.0:
        for bar in range(0, SEQ_LEN, STEPS_PER_BAR):
            if rng.random() < roll_prob:
                sl = slice(bar, bar + STEPS_PER_BAR)
                mask[sl] = np.roll(mask[sl], 1)
    idx = np.flatnonzero(mask)
    while idx.size < MIN_DISTINCT_PITCHES:
        extra = int(rng.integers(0, SEQ_LEN))
        mask[extra] = True
        idx = np.flatnonzero(mask)

    lo = max(PITCH_LO, center - halfwidth)
    hi = min(PITCH_HI, center + halfwidth)
    direction = -1 if rng.random() < 0.5 else 1
    pitches = np.empty(idx.size, dtype=np.int64)
    pitches[0] = lo + round(_START_FRACTIONS[rng.integers(3)] * (hi - lo))
    for k in range(1, idx.size):
        p = pitches[k - 1] + walk_scale * direction
        if p > hi:  # fold back inside the tessitura and head down
            p = max(lo, hi - (p - hi))
            direction = -1
        elif p < lo:
            p = min(hi, lo + (lo - p))
            direction = 1
        pitches[k] = p
    # force three distinct pitches so every window is a valid melody
    if np.unique(pitches).size < MIN_DISTINCT_PITCHES:
        pitches[1::3] += 1
        pitches[2::3] += 2
        pitches = np.clip(pitches, PITCH_LO, PITCH_HI)

    tokens = np.full(SEQ_LEN, NOTE_OFF, dtype=np.int16)
    gaps = np.diff(np.append(idx, SEQ_LEN))
    for pos, pitch, gap in zip(idx, pitches, gaps):
        dur = max(1, int(round(sustain * int(gap))))
        tokens[pos] = pitch
        tokens[pos + 1:pos + dur] = NOTE_HOLD
    return tokens


def synth_corpus(
    n: int,
    seed: int,
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> ds.Dataset:
    """Generate n synthetic four-bar windows with wide attribute spread."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    per_melody = [(f"synth-{i:0{width}d}", [_synth_window(rng)]) for i in range(n)]
    meta = {"kind": "synthetic", "seed": seed, "n": n}
    return _assemble(per_melody, split_ratios, augmentation_count=0, seed=seed, meta=meta)
