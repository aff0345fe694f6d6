"""Pitch-sequence token encoding.

A melody window is 64 sixteenth-note steps over four 4/4 bars. Each step
holds one token: a MIDI pitch 0-127 starting a note, NOTE_OFF (128) for
silence, or NOTE_HOLD (129) continuing the previous note.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEQ_LEN = 64
STEPS_PER_BAR = 16
BARS = 4
MAX_PITCH = 127
NOTE_OFF = 128
NOTE_HOLD = 129
VOCAB_SIZE = 130


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """A quantized note on the sixteenth-note grid."""

    pitch: int
    onset: int
    duration: int
    program: int = 0
    channel: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= MAX_PITCH:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if self.onset < 0:
            raise ValueError(f"onset {self.onset} < 0")
        if self.duration < 1:
            raise ValueError(f"duration {self.duration} < 1")

    @property
    def offset(self) -> int:
        return self.onset + self.duration


def validate_tokens(tokens: np.ndarray | list[int]) -> np.ndarray:
    """Check the PitchSequence invariants and return an int16 array.

    Raises ValueError on wrong length, out-of-range tokens, or a hold
    token that does not continue a sounding note.
    """
    arr = np.asarray(tokens, dtype=np.int16)
    if arr.shape != (SEQ_LEN,):
        raise ValueError(f"expected {SEQ_LEN} tokens, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() >= VOCAB_SIZE:
        raise ValueError("token outside {0..129}")
    if arr[0] == NOTE_HOLD:
        raise ValueError("hold token at index 0")
    prev = arr[:-1]
    bad_hold = (arr[1:] == NOTE_HOLD) & (prev == NOTE_OFF)
    if bad_hold.any():
        idx = int(np.flatnonzero(bad_hold)[0]) + 1
        raise ValueError(f"hold token at index {idx} follows a rest")
    return arr


def is_valid_tokens(tokens: np.ndarray | list[int]) -> bool:
    try:
        validate_tokens(tokens)
    except ValueError:
        return False
    return True


def tokenize(events: list[NoteEvent]) -> np.ndarray:
    """Encode one monophonic 64-step window as a token array.

    Events must lie within the window and may not overlap; notes are
    truncated at the window end.
    """
    tokens = np.full(SEQ_LEN, NOTE_OFF, dtype=np.int16)
    occupied = np.zeros(SEQ_LEN, dtype=bool)
    for ev in sorted(events, key=lambda e: e.onset):
        if not 0 <= ev.onset < SEQ_LEN:
            raise ValueError(f"onset {ev.onset} outside window")
        end = min(ev.offset, SEQ_LEN)
        if occupied[ev.onset:end].any():
            raise ValueError(f"polyphonic input: overlap at step {ev.onset}")
        tokens[ev.onset] = ev.pitch
        tokens[ev.onset + 1:end] = NOTE_HOLD
        occupied[ev.onset:end] = True
    return tokens


def detokenize(tokens: np.ndarray | list[int]) -> list[NoteEvent]:
    """Decode a token array back into note events.

    Lenient on generated data: a hold that does not continue a sounding
    note (including a leading hold) is treated as a rest.
    """
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.shape != (SEQ_LEN,):
        raise ValueError(f"expected {SEQ_LEN} tokens, got shape {arr.shape}")
    events: list[NoteEvent] = []
    pitch = -1
    onset = 0
    dur = 0
    for i, tok in enumerate(arr):
        if tok == NOTE_HOLD and pitch >= 0:
            dur += 1
            continue
        if pitch >= 0:
            events.append(NoteEvent(pitch, onset, dur))
            pitch = -1
        if 0 <= tok <= MAX_PITCH:
            pitch, onset, dur = int(tok), i, 1
    if pitch >= 0:
        events.append(NoteEvent(pitch, onset, dur))
    return events


def transpose(tokens: np.ndarray, semitones: int) -> np.ndarray | None:
    """Shift pitch tokens by `semitones`, leaving rests and holds alone.

    Returns None when any resulting pitch would leave [0, 127]; the
    caller is expected to resample the shift.
    """
    if not -12 <= semitones <= 12:
        raise ValueError(f"semitones {semitones} outside [-12, 12]")
    arr = np.asarray(tokens, dtype=np.int16)
    pitched = arr <= MAX_PITCH
    shifted = arr[pitched] + semitones
    if shifted.size and (shifted.min() < 0 or shifted.max() > MAX_PITCH):
        return None
    out = arr.copy()
    out[pitched] = shifted
    return out
