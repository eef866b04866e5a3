"""Mono waveforms and 16-bit RIFF/WAVE I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from ..errors import InputError

SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise InputError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start, stop):
        """Sub-waveform over sample indices [start, stop)."""
        return Waveform(self.samples[start:stop].copy(), self.sample_rate)


def to_pcm16(samples):
    return np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")


def write_wav(path, waveform: Waveform):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(waveform.sample_rate))
        w.writeframes(to_pcm16(waveform.samples).tobytes())


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise InputError(f"{path}: expected 16-bit mono audio")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    return Waveform(np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0, rate)
