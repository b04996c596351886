"""Standard MIDI File parsing into tempo-resolved note lists.

Reads SMF format 0 and 1 byte streams and produces a :class:`Performance`:
a flat, time-sorted list of notes with onset/offset in seconds, pitch and
velocity. All channels are merged (solo piano assumption). Sustain pedal
(CC64) can optionally extend note offsets the way a real piano's dampers
would.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

__all__ = [
    "Note",
    "Performance",
    "TempoMap",
    "PedalEvent",
    "MidiParseError",
    "parse_midi",
    "parse_midi_file",
    "ticks_to_seconds",
    "apply_sustain_pedal",
]

DEFAULT_TEMPO = 500_000  # microseconds per quarter note (120 BPM)
MIN_NOTE_DURATION = 0.001  # seconds; zero-length notes are widened to this
SUSTAIN_CONTROLLER = 64


class MidiParseError(ValueError):
    """Raised on malformed MIDI input; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Note:
    """A single performed note in physical time."""

    onset: float
    offset: float
    pitch: int
    velocity: int

    def __post_init__(self):
        if not self.offset > self.onset:
            raise ValueError(
                f"note duration must be positive: onset={self.onset}, offset={self.offset}"
            )
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


def _note_key(note: Note):
    return (note.onset, note.pitch, note.offset)


@dataclass(frozen=True)
class Performance:
    """An ordered collection of notes; the input to every metric.

    Notes are sorted by (onset, pitch, offset) and ``end_time`` is at least
    the largest offset (0 for an empty performance).
    """

    notes: tuple[Note, ...]
    end_time: float

    @classmethod
    def from_notes(cls, notes: Iterable[Note], end_time: Optional[float] = None) -> "Performance":
        ordered = tuple(sorted(notes, key=_note_key))
        if end_time is None:
            end_time = max((n.offset for n in ordered), default=0.0)
        return cls(ordered, float(end_time))

    def __len__(self) -> int:
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)


@dataclass(frozen=True)
class PedalEvent:
    """One CC64 controller change, in seconds."""

    time: float
    value: int


@dataclass
class TempoMap:
    """Piecewise-constant tempo as (tick, microseconds-per-quarter) events.

    Events are normalised on construction: sorted by tick, duplicates at the
    same tick collapsed to the last one, and a default 500000 us/quarter
    entry inserted at tick 0 when absent.
    """

    events: list[tuple[int, int]]
    ticks_per_quarter: int

    def __post_init__(self):
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")
        merged: dict[int, int] = {}
        for tick, uspq in sorted(self.events, key=lambda e: e[0]):
            if tick < 0 or uspq <= 0:
                raise ValueError(f"invalid tempo event ({tick}, {uspq})")
            merged[tick] = uspq
        if 0 not in merged:
            merged[0] = DEFAULT_TEMPO
        self.events = sorted(merged.items())
        # prefix sums in exact integer tick*uspq units, one float division later
        ticks = [t for t, _ in self.events]
        cum = [0]
        for i in range(1, len(self.events)):
            dticks = ticks[i] - ticks[i - 1]
            cum.append(cum[-1] + dticks * self.events[i - 1][1])
        self._ticks = ticks
        self._cum_microticks = cum


def ticks_to_seconds(tick: int, tempo_map: TempoMap) -> float:
    """Convert an absolute tick to seconds through the tempo map.

    Accumulates exact integer tick * tempo products per segment and divides
    once at the end, so repeated conversions never drift.
    """
    if tick < 0:
        raise ValueError("tick must be non-negative")
    i = bisect_right(tempo_map._ticks, tick) - 1
    micro = tempo_map._cum_microticks[i] + (tick - tempo_map._ticks[i]) * tempo_map.events[i][1]
    return micro / (tempo_map.ticks_per_quarter * 1_000_000)


# ---------------------------------------------------------------------------
# Binary SMF reading
# ---------------------------------------------------------------------------

def _read_varint(data: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= end:
            raise MidiParseError("truncated variable-length quantity", pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos)


def _parse_header(data: bytes) -> tuple[int, int, int, int]:
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("missing MThd header chunk", 0)
    (length,) = struct.unpack_from(">I", data, 4)
    if length < 6:
        raise MidiParseError(f"malformed header chunk length {length}", 4)
    fmt, ntrks, division = struct.unpack_from(">HHH", data, 8)
    if fmt == 2:
        raise MidiParseError("unsupported SMF format 2", 8)
    if fmt > 2:
        raise MidiParseError(f"unknown SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks per quarter note", 12)
    return fmt, ntrks, division, 8 + length


def _parse_track(
    data: bytes,
    pos: int,
    notes: list[tuple[int, int, int, int]],
    tempos: list[tuple[int, int]],
    pedals: list[tuple[int, int]],
) -> int:
    if data[pos : pos + 4] != b"MTrk":
        raise MidiParseError("expected MTrk chunk", pos)
    if pos + 8 > len(data):
        raise MidiParseError("truncated track chunk header", pos)
    (length,) = struct.unpack_from(">I", data, pos + 4)
    start = pos + 8
    end = start + length
    if end > len(data):
        raise MidiParseError("track length mismatch: chunk extends past end of data", pos + 4)

    p = start
    tick = 0
    running: Optional[int] = None
    active: dict[tuple[int, int], tuple[int, int]] = {}  # (channel, pitch) -> (onset_tick, vel)

    def close(key: tuple[int, int], off_tick: int) -> None:
        onset_tick, velocity = active.pop(key)
        notes.append((onset_tick, off_tick, key[1], velocity))

    while p < end:
        delta, p = _read_varint(data, p, end)
        tick += delta
        if p >= end:
            raise MidiParseError("event truncated at track end", p)
        first = data[p]
        if first & 0x80:
            status = first
            p += 1
            # sysex and meta events cancel running status
            running = status if status < 0xF0 else None
        else:
            if running is None:
                raise MidiParseError("dangling running status", p)
            status = running

        if status == 0xFF:
            if p >= end:
                raise MidiParseError("truncated meta event", p)
            meta_type = data[p]
            p += 1
            meta_len, p = _read_varint(data, p, end)
            if p + meta_len > end:
                raise MidiParseError("meta event overruns track", p)
            payload = data[p : p + meta_len]
            p += meta_len
            if meta_type == 0x51:
                if meta_len != 3:
                    raise MidiParseError(f"set-tempo event with length {meta_len}", p)
                tempos.append((tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            skip, p = _read_varint(data, p, end)
            if p + skip > end:
                raise MidiParseError("sysex event overruns track", p)
            p += skip
        else:
            kind = status & 0xF0
            channel = status & 0x0F
            n_data = 1 if kind in (0xC0, 0xD0) else 2
            if p + n_data > end:
                raise MidiParseError("channel event truncated", p)
            d1 = data[p]
            d2 = data[p + 1] if n_data == 2 else 0
            if d1 & 0x80 or d2 & 0x80:
                raise MidiParseError(f"invalid data byte for status 0x{status:02X}", p)
            p += n_data
            if kind == 0x90 and d2 > 0:
                key = (channel, d1)
                if key in active:  # same-pitch overlap: close the earlier note here
                    close(key, tick)
                active[key] = (tick, d2)
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                key = (channel, d1)
                if key in active:
                    close(key, tick)
            elif kind == 0xB0 and d1 == SUSTAIN_CONTROLLER:
                pedals.append((tick, d2))

    for key in sorted(active):  # unterminated notes close at track end
        close(key, tick)
    return end


def parse_midi(data: bytes, pedal_mode: str = "extend") -> Performance:
    """Parse a Standard MIDI File (format 0 or 1) into a :class:`Performance`.

    Note-on events with velocity 0 are treated as note-offs. Event times are
    converted to seconds through the file's tempo map. With
    ``pedal_mode="extend"``, CC64 sustain spans lengthen note offsets via
    :func:`apply_sustain_pedal`; with ``"ignore"`` the pedal is discarded.

    Raises :class:`MidiParseError` (with a byte offset) on malformed input.
    """
    if pedal_mode not in ("ignore", "extend"):
        raise ValueError(f"pedal_mode must be 'ignore' or 'extend', got {pedal_mode!r}")

    fmt, ntrks, tpq, pos = _parse_header(data)
    raw_notes: list[tuple[int, int, int, int]] = []
    tempo_events: list[tuple[int, int]] = []
    raw_pedals: list[tuple[int, int]] = []
    for _ in range(ntrks):
        pos = _parse_track(data, pos, raw_notes, tempo_events, raw_pedals)

    tempo_map = TempoMap(tempo_events, tpq)
    notes = []
    for onset_tick, offset_tick, pitch, velocity in raw_notes:
        onset = ticks_to_seconds(onset_tick, tempo_map)
        offset = ticks_to_seconds(offset_tick, tempo_map)
        if offset <= onset:
            offset = onset + MIN_NOTE_DURATION
        notes.append(Note(onset, offset, pitch, velocity))
    performance = Performance.from_notes(notes)

    if pedal_mode == "extend" and raw_pedals:
        raw_pedals.sort(key=lambda e: e[0])
        pedal_events = [PedalEvent(ticks_to_seconds(t, tempo_map), v) for t, v in raw_pedals]
        performance = apply_sustain_pedal(performance, pedal_events)
    return performance


def parse_midi_file(path, pedal_mode: str = "extend") -> Performance:
    with open(path, "rb") as fh:
        return parse_midi(fh.read(), pedal_mode=pedal_mode)


# ---------------------------------------------------------------------------
# Sustain pedal
# ---------------------------------------------------------------------------

def _pedal_down_spans(pedals: Sequence[PedalEvent], threshold: int) -> list[tuple[float, float]]:
    spans = []
    down_since: Optional[float] = None
    for event in pedals:
        if event.value >= threshold:
            if down_since is None:
                down_since = event.time
        elif down_since is not None:
            spans.append((down_since, event.time))
            down_since = None
    if down_since is not None:
        spans.append((down_since, float("inf")))
    return spans


def apply_sustain_pedal(
    performance: Performance,
    pedals: Sequence[PedalEvent],
    threshold: int = 64,
) -> Performance:
    """Extend note offsets over sustain-pedal spans.

    While CC64 >= ``threshold`` the pedal is down. A note whose nominal
    offset falls inside a down span keeps sounding until the pedal release,
    truncated at the next onset of the same pitch. Notes are never
    shortened. A pedal that is still down at the end of the data sustains to
    the end of the performance.
    """
    if not performance.notes or not pedals:
        return performance
    spans = _pedal_down_spans(pedals, threshold)
    if not spans:
        return performance
    span_starts = [s for s, _ in spans]
    data_end = max(performance.end_time, pedals[-1].time)

    # next onset of the same pitch, per note (inf when none follows)
    next_same_pitch = {}
    last_seen: dict[int, int] = {}
    for index, note in enumerate(performance.notes):
        if note.pitch in last_seen:
            next_same_pitch[last_seen[note.pitch]] = note.onset
        last_seen[note.pitch] = index

    new_notes = []
    for index, note in enumerate(performance.notes):
        i = bisect_right(span_starts, note.offset) - 1
        if i >= 0 and note.offset < spans[i][1]:
            release = spans[i][1]
            if release == float("inf"):
                release = data_end
            extended = min(release, next_same_pitch.get(index, float("inf")))
            if extended > note.offset:
                note = replace(note, offset=extended)
        new_notes.append(note)
    return Performance.from_notes(new_notes)
