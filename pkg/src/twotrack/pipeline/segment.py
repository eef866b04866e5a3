"""Voice-activity segmentation of a vocal stem into training clips."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class VadParams:
    frame_rate: int = 50
    rel_threshold: float = 1e-3  # frame energy relative to the loudest frame
    hangover: float = 0.2  # seconds; shorter unvoiced gaps are closed
    min_voiced: float = 0.2  # seconds; shorter voiced runs are dropped
    target: float = 15.0
    max_duration: float = 30.0


@dataclass(frozen=True)
class Segment:
    start: int  # samples
    stop: int

    def duration(self, sample_rate):
        return (self.stop - self.start) / sample_rate


def _runs(flags):
    """(start, stop) index pairs of True runs."""
    padded = np.concatenate([[False], flags, [False]])
    d = np.diff(padded.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def _raw_voiced(w, params):
    hop = w.sample_rate // params.frame_rate
    n = len(w.samples) // hop
    if n == 0:
        return np.zeros(0, dtype=bool)
    e = (w.samples[:n * hop].reshape(n, hop) ** 2).sum(1)
    peak = e.max()
    if peak <= 0:
        return np.zeros(n, dtype=bool)
    return e > params.rel_threshold * peak


def voiced_frames(w, params=VadParams()):
    """Per-frame voicing after closing short gaps and dropping short blips."""
    voiced = _raw_voiced(w, params)
    gap = int(round(params.hangover * params.frame_rate))
    runs = _runs(voiced)
    for (_, stop), (start, _) in zip(runs, runs[1:]):
        if start - stop <= gap:
            voiced[stop:start] = True
    shortest = int(round(params.min_voiced * params.frame_rate))
    for start, stop in _runs(voiced):
        if stop - start < shortest:
            voiced[start:stop] = False
    return voiced


def vad_segment(w, params=VadParams()):
    """Voiced spans, merged toward ``params.target`` seconds and split above it.

    A span absorbs its successor when the merged clip (gap included) lands
    closer to the target. Spans long enough to hold two or more target
    lengths are cut into near-equal pieces, never longer than ``max_duration``;
    each cut moves to the nearest silent frame within a quarter target.
    """
    hop = w.sample_rate // params.frame_rate
    raw = _raw_voiced(w, params)
    spans = [(int(a), int(b)) for a, b in _runs(voiced_frames(w, params))]
    target = params.target * params.frame_rate
    cap = params.max_duration * params.frame_rate
    merged = []
    for span in spans:
        if merged:
            a, b = merged[-1]
            joined = span[1] - a
            if joined <= cap and abs(joined - target) < abs((b - a) - target):
                merged[-1] = (a, span[1])
                continue
        merged.append(span)
    out = []
    for a, b in merged:
        d = b - a
        pieces = max(int(round(d / target)), math.ceil(d / cap), 1)
        edges = np.linspace(a, b, pieces + 1).round().astype(int)
        reach = int(target // 4)
        for i in range(1, pieces):
            quiet = np.flatnonzero(~raw[max(a + 1, edges[i] - reach):edges[i] + reach + 1])
            if quiet.size:
                cand = quiet + max(a + 1, edges[i] - reach)
                edges[i] = int(cand[np.argmin(np.abs(cand - edges[i]))])
        out.extend(Segment(int(s) * hop, int(e) * hop) for s, e in zip(edges[:-1], edges[1:]))
    return out
