"""End-to-end evaluation of one ground-truth/estimate MIDI pair."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .ir_metrics import FRAME_LENGTH, build_piano_roll, frame_metrics, note_metrics
from .midi import Performance, parse_midi_file
from .musical import compute_musical_metrics
from .series import GridConfig
from .stats import MetricReport
from .streams import CHORD_EPSILON
from .tension import SpiralParams, WindowConfig

__all__ = ["RunConfig", "evaluate_performances", "evaluate_files"]


@dataclass(frozen=True)
class RunConfig:
    """Every knob of an evaluation run, serializable as flat key=value."""

    frame_length: float = FRAME_LENGTH
    chord_epsilon: float = CHORD_EPSILON
    grid_step: float = 0.1
    min_samples: int = 8
    window_length: float = 1.0
    hop: float = 0.5
    pedal_mode: str = "extend"
    spiral_radius: float = 1.0
    spiral_rise: float = math.sqrt(2.0 / 15.0)

    def __post_init__(self):
        if self.frame_length <= 0:
            raise ValueError("frame_length must be positive")
        if self.chord_epsilon <= 0:
            raise ValueError("chord_epsilon must be positive")
        if self.pedal_mode not in ("ignore", "extend"):
            raise ValueError(f"pedal_mode must be 'ignore' or 'extend', got {self.pedal_mode!r}")
        # grid/window/spiral ranges are enforced by their own constructors
        self.grid()
        self.window()
        self.spiral()

    def grid(self) -> GridConfig:
        return GridConfig(self.grid_step, self.min_samples)

    def window(self) -> WindowConfig:
        return WindowConfig(self.window_length, self.hop)

    def spiral(self) -> SpiralParams:
        return SpiralParams(self.spiral_radius, self.spiral_rise)


def evaluate_performances(
    ref: Performance,
    est: Performance,
    config: RunConfig = RunConfig(),
    pair_id: str = "pair",
    tags: Optional[dict[str, str]] = None,
) -> MetricReport:
    """Frame PRF, the two headline note PRFs, and the eight correlations."""
    frame = frame_metrics(
        build_piano_roll(ref, config.frame_length), build_piano_roll(est, config.frame_length)
    )
    musical = compute_musical_metrics(
        ref,
        est,
        chord_epsilon=config.chord_epsilon,
        grid=config.grid(),
        window=config.window(),
        spiral=config.spiral(),
    )
    return MetricReport(
        pair_id=pair_id,
        frame=frame,
        note_offset=note_metrics(ref.notes, est.notes, "onset_offset"),
        note_offset_velocity=note_metrics(ref.notes, est.notes, "onset_offset_velocity"),
        musical=musical,
        tags=dict(tags or {}),
    )


def evaluate_files(
    ref_path,
    est_path,
    config: RunConfig = RunConfig(),
    pair_id: Optional[str] = None,
    tags: Optional[dict[str, str]] = None,
) -> MetricReport:
    ref = parse_midi_file(ref_path, pedal_mode=config.pedal_mode)
    est = parse_midi_file(est_path, pedal_mode=config.pedal_mode)
    if pair_id is None:
        pair_id = f"{Path(ref_path).stem}__vs__{Path(est_path).stem}"
    return evaluate_performances(ref, est, config, pair_id, tags)
