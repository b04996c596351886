"""Splitting a performance into melody, bass and accompaniment streams.

Notes are first grouped into onset clusters (near-simultaneous onsets that
function as one chord), then a skyline rule picks the melody note from each
cluster and its mirror picks the bass note. Everything else is
accompaniment. Offsets are never truncated: articulation metrics downstream
need the raw overlap between consecutive notes.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from .midi import Note, Performance

__all__ = [
    "CHORD_EPSILON",
    "cluster_onsets",
    "extract_melody",
    "extract_bass",
    "extract_accompaniment",
    "split_streams",
]

CHORD_EPSILON = 0.030  # seconds; onsets this close to the cluster anchor merge


def cluster_onsets(perf: Performance, eps: float = CHORD_EPSILON) -> list[list[Note]]:
    """Group notes into onset clusters by a greedy left-to-right sweep.

    Walking the notes in onset order, a note joins the current cluster iff
    its onset is within ``eps`` of the cluster's *first* onset (the anchor);
    otherwise it starts a new cluster. Anchoring at the first onset keeps a
    slow arpeggio from chaining into one giant cluster.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    clusters: list[list[Note]] = []
    anchor = None
    for note in perf.notes:
        if anchor is not None and note.onset - anchor <= eps:
            clusters[-1].append(note)
        else:
            clusters.append([note])
            anchor = note.onset
    return clusters


def _highest(cluster: list[Note]) -> Note:
    # highest pitch; ties broken by longer duration, then first in sort order
    best = cluster[0]
    for note in cluster[1:]:
        if note.pitch > best.pitch or (
            note.pitch == best.pitch and note.duration > best.duration
        ):
            best = note
    return best


def _lowest(cluster: list[Note]) -> Note:
    best = cluster[0]
    for note in cluster[1:]:
        if note.pitch < best.pitch or (
            note.pitch == best.pitch and note.duration > best.duration
        ):
            best = note
    return best


def extract_melody(perf: Performance, chord_epsilon: float = CHORD_EPSILON) -> list[Note]:
    """Skyline melody: the highest-pitch note of every onset cluster.

    Offsets and velocities are preserved as played. The returned onsets are
    strictly increasing (one note per cluster, clusters separated by more
    than ``chord_epsilon``).
    """
    return [_highest(c) for c in cluster_onsets(perf, chord_epsilon)]


def extract_bass(perf: Performance, chord_epsilon: float = CHORD_EPSILON) -> list[Note]:
    """Mirror skyline: the lowest-pitch note of every onset cluster."""
    return [_lowest(c) for c in cluster_onsets(perf, chord_epsilon)]


def extract_accompaniment(perf: Performance, melody: Sequence[Note]) -> list[Note]:
    """All performance notes not in ``melody``, in original order.

    Multiset difference: each melody note removes one equal note from the
    performance. Raises ``ValueError`` if a melody note is absent.
    """
    remaining = Counter(melody)
    rest = []
    for note in perf.notes:
        if remaining.get(note, 0) > 0:
            remaining[note] -= 1
        else:
            rest.append(note)
    leftover = sum(remaining.values())
    if leftover:
        raise ValueError(f"{leftover} melody note(s) not present in the performance")
    return rest


def split_streams(
    perf: Performance, chord_epsilon: float = CHORD_EPSILON
) -> tuple[list[Note], list[Note], list[Note]]:
    """(melody, bass, accompaniment) in one clustering pass."""
    melody, bass, rest = [], [], []
    for cluster in cluster_onsets(perf, chord_epsilon):
        top = _highest(cluster)
        melody.append(top)
        bass.append(_lowest(cluster))
        rest.extend(n for n in cluster if n is not top)
    return melody, bass, rest
