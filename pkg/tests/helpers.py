"""Shared test utilities: MIDI serialization, generators and oracles.

The oracles here are written independently of the library code paths they
check: naive per-cell recounts, exhaustive matchings, closed-form
geometry. They trade speed for obviousness.
"""

from __future__ import annotations

import math
import struct
from typing import Optional, Sequence

import numpy as np

from pianoeval.midi import Note, Performance

# ---------------------------------------------------------------------------
# Standard MIDI File serializer (test-harness only)
# ---------------------------------------------------------------------------

_ORDER_TEMPO = 0
_ORDER_NOTE_OFF = 1
_ORDER_PEDAL = 2
_ORDER_NOTE_ON = 3


def vlq(value: int) -> bytes:
    """MIDI variable-length quantity, 7 bits per byte, big-endian."""
    if value < 0:
        raise ValueError("vlq must be non-negative")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _track_bytes(events: list[tuple[int, int, bytes]]) -> bytes:
    events = sorted(events, key=lambda e: (e[0], e[1]))
    body = bytearray()
    tick = 0
    for event_tick, _, payload in events:
        body += vlq(event_tick - tick)
        body += payload
        tick = event_tick
    body += vlq(0) + b"\xff\x2f\x00"  # end of track
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def serialize_smf(
    notes_ticks: Sequence[tuple[int, int, int, int]],
    tpq: int = 480,
    tempos: Sequence[tuple[int, int]] = ((0, 500_000),),
    pedals: Sequence[tuple[int, int]] = (),
    fmt: int = 1,
    note_off_via_zero_velocity: bool = False,
    channel: int = 0,
) -> bytes:
    """Build an SMF byte string from (onset_tick, offset_tick, pitch, vel)."""
    note_events: list[tuple[int, int, bytes]] = []
    for onset, offset, pitch, velocity in notes_ticks:
        note_events.append((onset, _ORDER_NOTE_ON, bytes([0x90 | channel, pitch, velocity])))
        if note_off_via_zero_velocity:
            note_events.append((offset, _ORDER_NOTE_OFF, bytes([0x90 | channel, pitch, 0])))
        else:
            note_events.append((offset, _ORDER_NOTE_OFF, bytes([0x80 | channel, pitch, 64])))
    for tick, value in pedals:
        note_events.append((tick, _ORDER_PEDAL, bytes([0xB0 | channel, 64, value])))
    tempo_events = [
        (tick, _ORDER_TEMPO, b"\xff\x51\x03" + uspq.to_bytes(3, "big")) for tick, uspq in tempos
    ]

    header = b"MThd" + struct.pack(">IHHH", 6, fmt, 2 if fmt == 1 else 1, tpq)
    if fmt == 0:
        return header[:10] + struct.pack(">HH", 1, tpq) + _track_bytes(tempo_events + note_events)
    return header + _track_bytes(tempo_events) + _track_bytes(note_events)


def performance_to_smf(
    perf: Performance, tpq: int = 480, uspq: int = 500_000, **kwargs
) -> bytes:
    """Quantize a performance to ticks at a constant tempo and serialize."""
    scale = tpq * 1_000_000 / uspq  # ticks per second
    notes_ticks = []
    for n in perf.notes:
        onset = round(n.onset * scale)
        offset = max(onset + 1, round(n.offset * scale))
        notes_ticks.append((onset, offset, n.pitch, n.velocity))
    return serialize_smf(notes_ticks, tpq=tpq, tempos=((0, uspq),), **kwargs)


# ---------------------------------------------------------------------------
# Random performance generators
# ---------------------------------------------------------------------------

def random_performance(
    rng: np.random.Generator,
    n_notes: int,
    pitch_range: tuple[int, int] = (36, 96),
    velocity_range: tuple[int, int] = (30, 105),
    tempo_scale: float = 1.0,
    chord_probability: float = 0.25,
    min_same_pitch_gap: float = 0.15,
) -> Performance:
    """Unstructured polyphony; same-pitch notes never overlap and their
    onsets stay >= 0.15 s apart.

    The onset separation guarantees that comparing the performance with
    itself admits no cross-note candidate pairs (the onset window is
    50 ms), so self-evaluation must find the identity matching; the
    non-overlap keeps tick-quantized serialization from triggering the
    parser's same-pitch truncation rule.
    """
    lo, hi = pitch_range
    last_onset = {p: -math.inf for p in range(lo, hi + 1)}
    last_offset = {p: -math.inf for p in range(lo, hi + 1)}
    notes = []
    t = 0.0
    while len(notes) < n_notes:
        if notes and rng.random() < chord_probability:
            pass  # chord: reuse current onset
        else:
            t += float(rng.uniform(0.05, 0.35)) * tempo_scale
        allowed = [
            p
            for p in range(lo, hi + 1)
            if t - last_onset[p] >= min_same_pitch_gap and t >= last_offset[p] + 0.01
        ]
        if not allowed:
            t += min_same_pitch_gap
            continue
        pitch = int(rng.choice(allowed))
        duration = float(rng.uniform(0.05, 0.8)) * tempo_scale
        velocity = int(rng.integers(velocity_range[0], velocity_range[1] + 1))
        notes.append(Note(t, t + duration, pitch, velocity))
        last_onset[pitch] = t
        last_offset[pitch] = t + duration
    return Performance.from_notes(notes)


def expressive_performance(
    rng: np.random.Generator,
    n_events: int = 60,
    base_ioi: float = 0.28,
    with_accompaniment: bool = True,
) -> Performance:
    """Two-voice (plus optional inner voice) performance with expressive
    variation: sinusoidal tempo, velocity and articulation curves, so every
    feature series is non-constant and each correlation is defined.
    """
    notes = []
    t = 0.0
    melody_pitch = 72
    bass_pitch = 43
    for i in range(n_events):
        ioi = base_ioi + 0.1 * math.sin(i / 3.0) + float(rng.uniform(-0.02, 0.02))
        articulation = 0.9 + 0.5 * math.sin(i / 4.0) + float(rng.uniform(-0.05, 0.05))
        mel_vel = int(round(70 + 28 * math.sin(i / 5.0) + rng.uniform(-3, 3)))
        bass_vel = int(round(58 + 12 * math.sin(i / 7.0) + rng.uniform(-2, 2)))
        melody_pitch = int(np.clip(melody_pitch + rng.integers(-3, 4), 62, 86))
        bass_pitch = int(np.clip(bass_pitch + rng.integers(-2, 3), 34, 52))
        duration = max(0.06, ioi * articulation)
        notes.append(Note(t, t + duration, melody_pitch, int(np.clip(mel_vel, 20, 105))))
        notes.append(Note(t, t + duration * 1.1, bass_pitch, int(np.clip(bass_vel, 20, 105))))
        if with_accompaniment and i % 2 == 0:
            inner = int((melody_pitch + bass_pitch) // 2)
            notes.append(Note(t, t + duration * 0.7, inner, 45))
        t += ioi
    return Performance.from_notes(notes)


def jitter_onsets(perf: Performance, sigma: float, rng: np.random.Generator) -> Performance:
    """Shift every note (onset and offset together) by N(0, sigma)."""
    if sigma == 0.0:
        return perf
    notes = []
    for n in perf.notes:
        shift = float(rng.normal(0.0, sigma))
        onset = max(0.0, n.onset + shift)
        notes.append(Note(onset, onset + n.duration, n.pitch, n.velocity))
    return Performance.from_notes(notes)


def jitter_velocities(perf: Performance, sigma: float, rng: np.random.Generator) -> Performance:
    if sigma == 0.0:
        return perf
    notes = [
        Note(n.onset, n.offset, n.pitch, int(np.clip(round(n.velocity + rng.normal(0, sigma)), 1, 127)))
        for n in perf.notes
    ]
    return Performance.from_notes(notes)


# ---------------------------------------------------------------------------
# Note-matching oracle: naive validity + exhaustive maximum matching
# ---------------------------------------------------------------------------

def _oracle_valid_matrix(
    ref: Sequence[Note], est: Sequence[Note], mode: str
) -> list[list[bool]]:
    valid = [[False] * len(est) for _ in ref]
    for i, r in enumerate(ref):
        for j, e in enumerate(est):
            if e.pitch != r.pitch or abs(e.onset - r.onset) > 0.05:
                continue
            if mode in ("onset_offset", "onset_offset_velocity"):
                if abs(e.offset - r.offset) > max(0.05, 0.2 * r.duration):
                    continue
            valid[i][j] = True
    if mode == "onset_offset_velocity" and ref and est:
        velocities = [n.velocity for n in ref]
        lo, hi = min(velocities), max(velocities)
        scaled = [0.0 if hi == lo else (v - lo) / (hi - lo) for v in velocities]
        edges = [(i, j) for i in range(len(ref)) for j in range(len(est)) if valid[i][j]]
        if edges:
            xs = [est[j].velocity for _, j in edges]
            ys = [scaled[i] for i, _ in edges]
            n = len(edges)
            det = n * sum(x * x for x in xs) - sum(xs) ** 2  # exact: velocities are ints
            if det != 0:
                slope = (n * sum(x * y for x, y in zip(xs, ys)) - sum(xs) * sum(ys)) / det
                intercept = (sum(ys) - slope * sum(xs)) / n
                predict = lambda x: slope * x + intercept
            else:
                mean_y = sum(ys) / n  # all est velocities equal: flat best fit
                predict = lambda x: mean_y
            for i, j in edges:
                if abs(predict(est[j].velocity) - scaled[i]) > 0.1:
                    valid[i][j] = False
    return valid


def _oracle_max_matching(valid: list[list[bool]], n_est: int) -> int:
    """Exhaustive bitmask DP, decomposed over connected pitch components.

    Edges only join equal pitches, so the matching splits exactly into
    independent per-pitch subproblems, each solved over all est subsets.
    """
    if not valid or n_est == 0:
        return 0
    ref_rows = range(len(valid))
    est_cols_by_ref = [frozenset(j for j in range(n_est) if valid[i][j]) for i in ref_rows]
    # group refs by the est columns they can reach (transitively = by pitch)
    remaining = set(ref_rows)
    total = 0
    while remaining:
        seed = remaining.pop()
        group_refs = {seed}
        group_cols = set(est_cols_by_ref[seed])
        changed = True
        while changed:
            changed = False
            for i in list(remaining):
                if est_cols_by_ref[i] & group_cols:
                    group_refs.add(i)
                    group_cols |= est_cols_by_ref[i]
                    remaining.discard(i)
                    changed = True
        cols = sorted(group_cols)
        col_bit = {j: 1 << k for k, j in enumerate(cols)}
        full = (1 << len(cols)) - 1
        dp = [0] * (full + 1)
        for i in sorted(group_refs):
            new = dp[:]
            for mask in range(full + 1):
                base = dp[mask]
                for j in est_cols_by_ref[i]:
                    bit = col_bit[j]
                    if mask & bit:
                        candidate = dp[mask ^ bit] + 1
                        if candidate > new[mask]:
                            new[mask] = candidate
            dp = new
        total += dp[full]
    return total


def oracle_note_prf(ref: Sequence[Note], est: Sequence[Note], mode: str):
    valid = _oracle_valid_matrix(ref, est, mode)
    n = _oracle_max_matching(valid, len(est))
    precision = n / len(est) if est else 0.0
    recall = n / len(ref) if ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


# ---------------------------------------------------------------------------
# Frame-metric oracle: per-cell recount in pure Python
# ---------------------------------------------------------------------------

def oracle_frame_prf(ref_roll: np.ndarray, est_roll: np.ndarray):
    t = max(ref_roll.shape[1], est_roll.shape[1])
    tp = fp = fn = 0
    for p in range(128):
        for f in range(t):
            a = bool(ref_roll[p, f]) if f < ref_roll.shape[1] else False
            b = bool(est_roll[p, f]) if f < est_roll.shape[1] else False
            if a and b:
                tp += 1
            elif b:
                fp += 1
            elif a:
                fn += 1
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def oracle_note_frames(onset: float, offset: float, h: float) -> set[int]:
    first = math.floor(onset / h)
    last = max(first, math.ceil(offset / h) - 1)
    return set(range(first, last + 1))


# ---------------------------------------------------------------------------
# Audio helpers
# ---------------------------------------------------------------------------

def sine_audio(
    frequency: float = 440.0,
    seconds: float = 1.0,
    sample_rate: int = 44100,
    amplitude: float = 0.8,
    channels: int = 1,
):
    from pianoeval.audio import AudioBuffer

    t = np.arange(int(seconds * sample_rate)) / sample_rate
    wave = amplitude * np.sin(2 * np.pi * frequency * t)
    return AudioBuffer(sample_rate, np.tile(wave, (channels, 1)))
