"""Audio degradation: convolution reverb and SNR-calibrated white noise.

Recordings are perturbed over a factorial grid of reverb and noise levels
so a transcription's robustness can be measured per condition. WAV I/O is
deliberately strict: 16-bit PCM or 32-bit IEEE float, mono or stereo,
nothing else.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "AudioBuffer",
    "PerturbCondition",
    "WavFormatError",
    "read_wav",
    "write_wav",
    "read_wav_file",
    "write_wav_file",
    "add_noise_snr",
    "convolve_ir",
    "synth_ir",
    "derive_seed",
    "apply_condition_grid",
]


class WavFormatError(ValueError):
    """Raised for WAV data this module does not speak."""


@dataclass(frozen=True)
class AudioBuffer:
    """Planar float64 audio: samples has shape (channels, n)."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 2:
            raise ValueError("samples must be planar with shape (channels, n)")
        if self.samples.shape[0] not in (1, 2):
            raise ValueError(f"only mono or stereo supported, got {self.samples.shape[0]} channels")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


@dataclass(frozen=True)
class PerturbCondition:
    """One cell of the degradation grid; None fields mean 'leave alone'."""

    snr_db: Optional[float]
    ir: Optional[AudioBuffer]
    seed: int

    def __post_init__(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite when present")


# ---------------------------------------------------------------------------
# WAV container
# ---------------------------------------------------------------------------

_PCM16 = 1
_IEEE_FLOAT = 3


def read_wav(data: bytes) -> AudioBuffer:
    """Decode RIFF/WAVE bytes (PCM16 or float32, 1-2 channels)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE stream")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if payload is None:
        raise WavFormatError("missing data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"unsupported channel count {channels}")
    if audio_format == _PCM16 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)], dtype="<i2")
        planar = raw.reshape(-1, channels).T.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)], dtype="<f4")
        planar = raw.reshape(-1, channels).T.astype(np.float64)
    else:
        raise WavFormatError(f"unsupported codec (format {audio_format}, {bits}-bit)")
    return AudioBuffer(int(sample_rate), np.ascontiguousarray(planar))


def write_wav(buffer: AudioBuffer, sample_format: str = "float32") -> bytes:
    """Encode to RIFF/WAVE. float32 is lossless; pcm16 clamps to [-1, 1]."""
    interleaved = buffer.samples.T.reshape(-1)
    if sample_format == "float32":
        audio_format, bits = _IEEE_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    elif sample_format == "pcm16":
        audio_format, bits = _PCM16, 16
        scaled = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")
    block_align = buffer.channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH",
        audio_format,
        buffer.channels,
        buffer.sample_rate,
        buffer.sample_rate * block_align,
        block_align,
        bits,
    )
    chunks = b"".join(
        [b"fmt ", struct.pack("<I", len(fmt)), fmt, b"data", struct.pack("<I", len(payload)), payload]
    )
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav_file(path) -> AudioBuffer:
    with open(path, "rb") as fh:
        return read_wav(fh.read())


def write_wav_file(path, buffer: AudioBuffer, sample_format: str = "float32") -> None:
    with open(path, "wb") as fh:
        fh.write(write_wav(buffer, sample_format))


# ---------------------------------------------------------------------------
# Degradations
# ---------------------------------------------------------------------------

def add_noise_snr(audio: AudioBuffer, snr_db: float, seed: int) -> AudioBuffer:
    """Add white Gaussian noise at the requested signal-to-noise ratio.

    Noise power is set from the measured signal power: P_n = P_s /
    10^(snr_db/10). No clipping is applied; exceeding [-1, 1] is the
    16-bit writer's problem. An infinite SNR returns the input unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return AudioBuffer(audio.sample_rate, audio.samples.copy())
    signal_power = float(np.mean(audio.samples**2))
    if signal_power == 0.0:
        raise ValueError("SNR is undefined for all-zero audio")
    noise_power = signal_power / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(noise_power), audio.samples.shape)
    return AudioBuffer(audio.sample_rate, audio.samples + noise)


def convolve_ir(audio: AudioBuffer, ir: AudioBuffer) -> AudioBuffer:
    """Full convolution with an impulse response, peak-matched to the input.

    A mono IR is applied to every channel; a stereo IR pairs with stereo
    audio channel by channel. The result (length N + M - 1) is rescaled so
    its peak equals the input's peak, keeping loudness comparable across
    IRs of different energy.
    """
    if audio.sample_rate != ir.sample_rate:
        raise ValueError(
            f"sample rate mismatch: audio {audio.sample_rate} Hz vs IR {ir.sample_rate} Hz"
        )
    if ir.channels not in (1, audio.channels):
        raise ValueError(f"cannot apply {ir.channels}-channel IR to {audio.channels}-channel audio")
    out = np.stack(
        [
            fftconvolve(audio.samples[c], ir.samples[c % ir.channels], mode="full")
            for c in range(audio.channels)
        ]
    )
    in_peak = audio.peak()
    out_peak = float(np.max(np.abs(out))) if out.size else 0.0
    if in_peak > 0.0 and out_peak > 0.0:
        out *= in_peak / out_peak
    return AudioBuffer(audio.sample_rate, out)


def synth_ir(rt60: float, sample_rate: int, seed: int) -> AudioBuffer:
    """Synthetic exponential-decay impulse response.

    White Gaussian noise under the envelope exp(-t ln(1000) / rt60) — down
    60 dB at t = rt60, where the IR is truncated. The first sample is
    forced to 1.0 so the direct sound is always present.
    """
    if rt60 <= 0:
        raise ValueError("rt60 must be positive")
    length = max(1, int(math.floor(rt60 * sample_rate)))
    t = np.arange(length) / sample_rate
    envelope = np.exp(-t * math.log(1000.0) / rt60)
    rng = np.random.default_rng(seed)
    ir = rng.standard_normal(length) * envelope
    ir[0] = 1.0
    return AudioBuffer(sample_rate, ir[np.newaxis, :])


def derive_seed(*keys: int) -> int:
    """Deterministic child seed from a key path, stable under parallelism."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def apply_condition_grid(
    audio: AudioBuffer,
    snr_levels: Sequence[Optional[float]],
    ir_levels: Sequence[Optional[AudioBuffer]],
    seed: int,
) -> list[tuple[PerturbCondition, AudioBuffer]]:
    """Every (IR, SNR) combination, reverb first, then noise.

    Reverb precedes noise because the noise models the recording chain
    after the room. Levels of None skip that stage, so including None in
    both lists yields the untouched original as one cell. Output order is
    IR-major, then SNR, matching the input level order.
    """
    results = []
    for i_ir, ir in enumerate(ir_levels):
        for i_snr, snr in enumerate(snr_levels):
            if snr is not None and math.isinf(snr):
                snr = None
            out = AudioBuffer(audio.sample_rate, audio.samples.copy())
            if ir is not None:
                out = convolve_ir(out, ir)
            derived = derive_seed(seed, 0, i_ir, i_snr)
            if snr is not None:
                out = add_noise_snr(out, snr, derived)
            results.append((PerturbCondition(snr, ir, derived), out))
    return results
