"""Minimal Standard MIDI File (format 0/1) reader and writer.

Reads just what melody extraction needs: paired note on/off events with
absolute tick times, per-channel program state, and tempo / time
signature meta events. Writing emits single-track format-0 files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

from .tokens import NoteEvent

DEFAULT_TPQ = 480
DRUM_CHANNEL = 9
TICKS_PER_SIXTEENTH = 4  # divisor of ticks_per_quarter


class MidiParseError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class RawNote:
    """An unquantized note with absolute tick times."""

    pitch: int
    start_tick: int
    end_tick: int
    channel: int
    program: int


@dataclass(frozen=True, slots=True)
class TimeSignature:
    tick: int
    numerator: int
    denominator: int


@dataclass(frozen=True, slots=True)
class TempoChange:
    tick: int
    microseconds_per_quarter: int


@dataclass(slots=True)
class MidiFile:
    ticks_per_quarter: int
    tracks: list[list[RawNote]] = field(default_factory=list)
    time_signatures: list[TimeSignature] = field(default_factory=list)
    tempos: list[TempoChange] = field(default_factory=list)
    end_tick: int = 0


def _read_varlen(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    while True:
        if pos >= len(data):
            raise MidiParseError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos


def _write_varlen(value: int) -> bytes:
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunks))


def _parse_track(data: bytes, mf: MidiFile) -> list[RawNote]:
    notes: list[RawNote] = []
    # FIFO of open note-ons per (channel, pitch)
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    programs = [0] * 16
    pos = 0
    tick = 0
    status = 0
    while pos < len(data):
        delta, pos = _read_varlen(data, pos)
        tick += delta
        if pos >= len(data):
            raise MidiParseError("truncated track event")
        byte = data[pos]
        if byte & 0x80:
            status = byte
            pos += 1
        elif status == 0:
            raise MidiParseError("running status with no prior status byte")
        kind = status & 0xF0
        channel = status & 0x0F
        if status == 0xFF:
            meta_type = data[pos]
            length, pos = _read_varlen(data, pos + 1)
            payload = data[pos:pos + length]
            pos += length
            if meta_type == 0x51 and length == 3:
                mf.tempos.append(TempoChange(tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x58 and length >= 2:
                mf.time_signatures.append(TimeSignature(tick, payload[0], 1 << payload[1]))
            elif meta_type == 0x2F:
                break
            status = 0
        elif status in (0xF0, 0xF7):
            length, pos = _read_varlen(data, pos)
            pos += length
            status = 0
        elif kind == 0x90:
            pitch, velocity = data[pos], data[pos + 1]
            pos += 2
            if velocity > 0:
                open_notes.setdefault((channel, pitch), []).append((tick, programs[channel]))
            else:
                _close_note(open_notes, notes, channel, pitch, tick)
        elif kind == 0x80:
            pitch = data[pos]
            pos += 2
            _close_note(open_notes, notes, channel, pitch, tick)
        elif kind in (0xA0, 0xB0, 0xE0):
            pos += 2
        elif kind == 0xC0:
            programs[channel] = data[pos]
            pos += 1
        elif kind == 0xD0:
            pos += 1
        else:
            raise MidiParseError(f"unexpected status byte 0x{status:02x}")
    # unterminated notes end at the final tick of the track
    for (channel, pitch), starts in open_notes.items():
        for start, program in starts:
            if tick > start:
                notes.append(RawNote(pitch, start, tick, channel, program))
    mf.end_tick = max(mf.end_tick, tick)
    notes.sort(key=lambda n: (n.start_tick, n.pitch))
    return notes


def _close_note(open_notes, notes, channel: int, pitch: int, tick: int) -> None:
    starts = open_notes.get((channel, pitch))
    if not starts:
        return
    start, program = starts.pop(0)
    if tick > start:
        notes.append(RawNote(pitch, start, tick, channel, program))


def read_midi(path: str | Path) -> MidiFile:
    data = Path(path).read_bytes()
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("missing MThd header")
    header_len, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MidiParseError("SMPTE time division not supported")
    mf = MidiFile(ticks_per_quarter=division)
    pos = 8 + header_len
    for _ in range(ntrks):
        if pos + 8 > len(data):
            raise MidiParseError("truncated track chunk")
        if data[pos:pos + 4] != b"MTrk":
            raise MidiParseError("missing MTrk chunk")
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        chunk = data[pos + 8:pos + 8 + length]
        if len(chunk) < length:
            raise MidiParseError("truncated track data")
        mf.tracks.append(_parse_track(chunk, mf))
        pos += 8 + length
    mf.time_signatures.sort(key=lambda ts: ts.tick)
    mf.tempos.sort(key=lambda t: t.tick)
    return mf


def four_four_spans(mf: MidiFile) -> list[tuple[int, int]]:
    """Maximal [start, end) tick spans governed by a 4/4 time signature.

    A file with no time-signature events is wholly 4/4 per the SMF
    default.
    """
    end = mf.end_tick
    if end <= 0:
        return []
    sigs = list(mf.time_signatures)
    if not sigs or sigs[0].tick > 0:
        sigs.insert(0, TimeSignature(0, 4, 4))
    spans: list[tuple[int, int]] = []
    for i, sig in enumerate(sigs):
        until = sigs[i + 1].tick if i + 1 < len(sigs) else end
        if sig.numerator == 4 and sig.denominator == 4 and until > sig.tick:
            if spans and spans[-1][1] == sig.tick:
                spans[-1] = (spans[-1][0], until)
            else:
                spans.append((sig.tick, until))
    return spans


def quantize_track(
    raw_events: list[tuple[int, int, int]] | list[RawNote],
    ticks_per_quarter: int,
    program: int = 0,
    channel: int = 0,
) -> tuple[list[NoteEvent], int]:
    """Snap raw tick events to the sixteenth-note grid.

    Onsets and offsets round to the nearest grid line, ties rounding up;
    notes that collapse to zero length get duration 1. Events with
    end < start are skipped; the skip count is returned.
    """
    if ticks_per_quarter <= 0:
        raise ValueError("ticks_per_quarter must be positive")
    step = ticks_per_quarter / TICKS_PER_SIXTEENTH
    out: list[NoteEvent] = []
    skipped = 0
    for ev in raw_events:
        if isinstance(ev, RawNote):
            pitch, start, end = ev.pitch, ev.start_tick, ev.end_tick
            prog, chan = ev.program, ev.channel
        else:
            pitch, start, end = ev
            prog, chan = program, channel
        if end < start or start < 0:
            skipped += 1
            continue
        onset = int(start / step + 0.5)
        offset = int(end / step + 0.5)
        out.append(NoteEvent(pitch, onset, max(1, offset - onset), prog, chan))
    out.sort(key=lambda n: (n.onset, n.pitch))
    return out, skipped


def encode_midi(
    events: list[NoteEvent],
    bpm: float = 120.0,
    ticks_per_quarter: int = DEFAULT_TPQ,
    velocity: int = 96,
) -> bytes:
    """Encode grid-step note events as a single-track format-0 file."""
    step = ticks_per_quarter // TICKS_PER_SIXTEENTH
    messages: list[tuple[int, int, bytes]] = []  # (tick, order, payload)
    tempo = round(60_000_000 / bpm)
    messages.append((0, 0, bytes([0xFF, 0x51, 0x03]) + tempo.to_bytes(3, "big")))
    messages.append((0, 0, bytes([0xFF, 0x58, 0x04, 4, 2, 24, 8])))
    for ev in events:
        on = ev.onset * step
        off = ev.offset * step
        messages.append((on, 1, bytes([0x90 | ev.channel, ev.pitch, velocity])))
        messages.append((off, 0, bytes([0x80 | ev.channel, ev.pitch, 0])))
    messages.sort(key=lambda m: (m[0], m[1]))
    body = bytearray()
    tick = 0
    for t, _, payload in messages:
        body += _write_varlen(t - tick)
        body += payload
        tick = t
    body += _write_varlen(0) + bytes([0xFF, 0x2F, 0x00])
    out = bytearray(b"MThd")
    out += struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    out += b"MTrk" + struct.pack(">I", len(body)) + body
    return bytes(out)


def write_midi(
    path: str | Path,
    events: list[NoteEvent],
    bpm: float = 120.0,
    ticks_per_quarter: int = DEFAULT_TPQ,
    velocity: int = 96,
) -> None:
    """Write grid-step note events as a single-track format-0 file."""
    Path(path).write_bytes(encode_midi(events, bpm, ticks_per_quarter, velocity))
