"""Melody extraction, segmentation, dataset assembly, synthetic corpus."""

import numpy as np
import pytest

from faderlab import dataset as ds
from faderlab.attributes import ATTRIBUTE_NAMES
from faderlab.corpus import (
    IngestCounters,
    Melody,
    build_dataset,
    extract_melodies,
    resolve_monophonic,
    segment,
    synth_corpus,
)
from faderlab.midi import write_midi
from faderlab.tokens import (
    NOTE_HOLD,
    NOTE_OFF,
    SEQ_LEN,
    NoteEvent,
    is_valid_tokens,
)


def spans(events):
    return [(e.pitch, e.onset, e.duration) for e in events]


class TestResolveMonophonic:
    def test_higher_pitch_wins_overlap(self):
        # 60 over steps 0-3 and 64 over steps 2-5: steps 2-3 go to 64,
        # the low note is truncated to steps 0-1
        out = resolve_monophonic([NoteEvent(60, 0, 4), NoteEvent(64, 2, 4)])
        assert spans(out) == [(60, 0, 2), (64, 2, 4)]

    def test_nested_note_resumes_as_new_onset(self):
        # long low note interrupted by a short high note in the middle
        out = resolve_monophonic([NoteEvent(50, 0, 8), NoteEvent(70, 3, 2)])
        assert spans(out) == [(50, 0, 3), (70, 3, 2), (50, 5, 3)]

    def test_same_pitch_reonset_stays_separate(self):
        out = resolve_monophonic([NoteEvent(60, 0, 2), NoteEvent(60, 2, 2)])
        assert spans(out) == [(60, 0, 2), (60, 2, 2)]

    def test_empty(self):
        assert resolve_monophonic([]) == []

    def test_non_overlapping_preserved(self):
        events = [NoteEvent(60, 0, 2), NoteEvent(55, 4, 3)]
        assert spans(resolve_monophonic(events)) == [(60, 0, 2), (55, 4, 3)]


def long_melody_events(num_notes=16, start=0, pitch_cycle=(60, 64, 67)):
    """Quarter-note chain covering num_notes*4 steps with >=3 pitches."""
    return [
        NoteEvent(pitch_cycle[i % len(pitch_cycle)], start + 4 * i, 4)
        for i in range(num_notes)
    ]


class TestExtractMelodies:
    def test_silence_splits_melodies(self):
        # two qualifying chains separated by exactly 16 silent steps
        first = long_melody_events(16, start=0)
        second = long_melody_events(16, start=16 * 4 + 16)
        melodies = extract_melodies(first + second)
        assert len(melodies) == 2

    def test_short_gap_does_not_split(self):
        first = long_melody_events(8, start=0)
        second = long_melody_events(8, start=8 * 4 + 15)
        melodies = extract_melodies(first + second)
        assert len(melodies) == 1

    def test_short_melody_rejected(self):
        counters = IngestCounters()
        events = [NoteEvent(60, 0, 4), NoteEvent(64, 4, 4), NoteEvent(67, 8, 4)]
        assert extract_melodies(events, counters) == []
        assert counters.rejected_short == 1

    def test_two_distinct_pitches_rejected(self):
        counters = IngestCounters()
        events = [NoteEvent(60 if i % 2 else 62, 4 * i, 4) for i in range(20)]
        assert extract_melodies(events, counters) == []
        assert counters.rejected_pitches == 1

    def test_drum_channel_excluded(self):
        drums = [NoteEvent(40, 4 * i, 4, channel=9) for i in range(20)]
        assert extract_melodies(drums) == []

    def test_rebased_to_bar_start(self):
        # melody starting mid-bar keeps its in-bar offset
        events = long_melody_events(16, start=18)
        (melody,) = extract_melodies(events)
        assert melody.events[0].onset == 2
        assert melody.num_bars >= 4


class TestSegment:
    def test_window_counts(self):
        for bars, want in ((4, 1), (6, 3), (7, 4)):
            melody = Melody(tuple(long_melody_events(bars * 4)), bars)
            assert len(segment(melody)) == want

    def test_short_melody_raises(self):
        melody = Melody(tuple(long_melody_events(4)), 3)
        with pytest.raises(ValueError):
            segment(melody)

    def test_note_crossing_window_start_becomes_rest(self):
        # a whole-bar note at bar 0 then quarters; window 1 starts inside
        # nothing (the first quarter of bar 1 onward), so check a long note
        # straddling the boundary between windows 0 and 1
        events = [NoteEvent(60, 0, 20)] + long_melody_events(15, start=20)
        melody = Melody(tuple(events), 5)
        windows = segment(melody)
        assert len(windows) == 2
        # window 1 covers steps [16, 80); the note spanning [0, 20) has its
        # tail inside but no onset, so steps 0-3 of window 1 are rests
        assert list(windows[1][:4]) == [NOTE_OFF] * 4
        assert windows[1][4] == 60  # first onset of the chain

    def test_note_crossing_window_end_held_to_edge(self):
        events = long_melody_events(15) + [NoteEvent(72, 60, 20)]
        melody = Melody(tuple(events), 5)
        windows = segment(melody)
        assert windows[0][60] == 72
        assert list(windows[0][61:]) == [NOTE_HOLD] * 3

    def test_windows_are_valid(self):
        melody = Melody(tuple(long_melody_events(28)), 7)
        for window in segment(melody):
            assert is_valid_tokens(window)


def write_corpus_files(tmp_path, count=6, notes=24):
    paths = []
    for f in range(count):
        events = [
            NoteEvent(55 + ((f * 5 + i * 3) % 24), 4 * i, 3) for i in range(notes)
        ]
        path = tmp_path / f"file{f}.mid"
        write_midi(path, events)
        paths.append(path)
    return paths


class TestBuildDataset:
    def test_end_to_end(self, tmp_path):
        paths = write_corpus_files(tmp_path)
        data, counters = build_dataset(paths, (0.5, 0.25, 0.25), augmentation_count=1, seed=3)
        assert counters.files_read == 6
        assert len(data) > 0
        total = sum(hi - lo for lo, hi in data.splits.values())
        assert total == len(data)
        for i in range(len(data)):
            assert is_valid_tokens(data.tokens[i].astype(np.int16))

    def test_deterministic(self, tmp_path):
        paths = write_corpus_files(tmp_path)
        a, _ = build_dataset(paths, (0.5, 0.25, 0.25), augmentation_count=2, seed=7)
        b, _ = build_dataset(paths, (0.5, 0.25, 0.25), augmentation_count=2, seed=7)
        assert np.array_equal(a.tokens, b.tokens)
        assert a.source_ids == b.source_ids
        assert a.splits == b.splits

    def test_duplicate_file_stored_once(self, tmp_path):
        events = long_melody_events(24)
        p1, p2 = tmp_path / "a.mid", tmp_path / "b.mid"
        write_midi(p1, events)
        write_midi(p2, events)
        solo, _ = build_dataset([p1], (1.0, 0.0, 0.0), augmentation_count=0, seed=0)
        both, _ = build_dataset([p1, p2], (1.0, 0.0, 0.0), augmentation_count=0, seed=0)
        assert len(both) == len(solo)

    def test_unreadable_file_counted(self, tmp_path):
        bad = tmp_path / "bad.mid"
        bad.write_bytes(b"not midi")
        paths = write_corpus_files(tmp_path, count=2) + [bad]
        _, counters = build_dataset(paths, (1.0, 0.0, 0.0), augmentation_count=0, seed=0)
        assert counters.files_skipped == 1
        assert counters.files_read == 2

    def test_no_melodies_raises(self, tmp_path):
        bad = tmp_path / "bad.mid"
        bad.write_bytes(b"not midi")
        with pytest.raises(ds.DatasetError):
            build_dataset([bad], (1.0, 0.0, 0.0), augmentation_count=0, seed=0)

    def test_bad_ratios_rejected(self, tmp_path):
        paths = write_corpus_files(tmp_path, count=2)
        with pytest.raises(ValueError):
            build_dataset(paths, (0.5, 0.2, 0.2), augmentation_count=0, seed=0)

    def test_augmentation_only_in_train(self, tmp_path):
        paths = write_corpus_files(tmp_path)
        plain, _ = build_dataset(paths, (0.5, 0.25, 0.25), augmentation_count=0, seed=3)
        auged, _ = build_dataset(paths, (0.5, 0.25, 0.25), augmentation_count=1, seed=3)
        for split in ("val", "test"):
            lo_p, hi_p = plain.splits[split]
            lo_a, hi_a = auged.splits[split]
            assert hi_p - lo_p == hi_a - lo_a
        lo_p, hi_p = plain.splits["train"]
        lo_a, hi_a = auged.splits["train"]
        assert hi_a - lo_a > hi_p - lo_p


class TestSynthCorpus:
    def test_deterministic_bytes(self, tmp_path):
        a = synth_corpus(200, seed=5)
        b = synth_corpus(200, seed=5)
        pa, pb = tmp_path / "a.flb", tmp_path / "b.flb"
        ds.save(a, pa)
        ds.save(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_output(self):
        a = synth_corpus(50, seed=1)
        b = synth_corpus(50, seed=2)
        assert not np.array_equal(a.tokens, b.tokens)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            synth_corpus(0, seed=0)

    def test_split_sizes(self):
        data = synth_corpus(100, seed=9, split_ratios=(0.8, 0.1, 0.1))
        sizes = {k: hi - lo for k, (lo, hi) in data.splits.items()}
        # windows are unique with overwhelming probability at this size
        assert sizes == {"train": 80, "val": 10, "test": 10}

    def test_windows_valid(self):
        data = synth_corpus(100, seed=4)
        for i in range(len(data)):
            assert is_valid_tokens(data.tokens[i].astype(np.int16))

    def test_attribute_spread(self):
        data = synth_corpus(1000, seed=12)
        for j, name in enumerate(ATTRIBUTE_NAMES):
            distinct = np.unique(np.round(data.attributes[:, j], 6)).size
            assert distinct >= 10, f"{name} spans only {distinct} values"
