"""Clip-level filter signals: energy, transcript agreement, caption alignment."""

from __future__ import annotations

import re

import numpy as np

from .synth import GENDERS, GENRES, MOODS, TEMPO_CLASSES

ALPHABET = "abcdefghijklmnopqrstuvwxyz "
# caption words that never coincide with a tag
DISTRACTORS = ("bright", "dreamy", "vintage", "lofi", "warm", "airy", "gritty", "lush")
TAG_WORDS = {"genre": GENRES, "mood": MOODS, "tempo": TEMPO_CLASSES, "gender": GENDERS}


def clip_energy(w):
    samples = w.samples if hasattr(w, "samples") else np.asarray(w)
    return float(np.dot(samples, samples))


def levenshtein(a, b):
    """Unit-cost edit distance; each DP row is one vectorised pass."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    bb = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    ramp = np.arange(len(b) + 1)
    row = ramp.copy()
    for i, ch in enumerate(a, start=1):
        sub = row[:-1] + (bb != ord(ch))
        best = np.empty_like(row)
        best[0] = i
        best[1:] = np.minimum(row[1:] + 1, sub)
        # insertions chain left to right: best[j] = min_i (best[i] + j - i)
        row = np.minimum.accumulate(best - ramp) + ramp
    return int(row[-1])


def edit_distance_rate(a, b):
    n = max(len(a), len(b))
    return 0.0 if n == 0 else levenshtein(a, b) / n


def _corrupt(text, sub_rate, del_rate, ins_rate, rng):
    out = []
    for ch in text:
        r = rng.random()
        if r < del_rate:
            pass
        elif r < del_rate + sub_rate:
            choices = [c for c in ALPHABET if c != ch]
            out.append(choices[rng.integers(len(choices))])
        else:
            out.append(ch)
        if rng.random() < ins_rate:
            out.append(ALPHABET[rng.integers(len(ALPHABET))])
    return "".join(out)


def noisy_transcripts(lyrics, noise, rng):
    """Two independent character-level corruptions standing in for two recognisers.

    ``noise`` maps ``sub_rate``, ``del_rate`` and ``ins_rate`` to
    probabilities; deletion and substitution are exclusive per character.
    """
    sub = float(noise.get("sub_rate", 0.0))
    dele = float(noise.get("del_rate", 0.0))
    ins = float(noise.get("ins_rate", 0.0))
    for name, r in (("sub_rate", sub), ("del_rate", dele), ("ins_rate", ins)):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {r}")
    if sub + dele > 1.0:
        raise ValueError("sub_rate + del_rate cannot exceed 1")
    return (_corrupt(lyrics, sub, dele, ins, rng), _corrupt(lyrics, sub, dele, ins, rng))


def make_caption(tags, rng=None, tag_noise=0.0):
    """Template caption; each tag is swapped for a distractor with prob ``tag_noise``."""
    words = {}
    for key in ("mood", "genre", "gender", "tempo"):
        word = tags[key]
        if rng is not None and tag_noise > 0 and rng.random() < tag_noise:
            word = DISTRACTORS[rng.integers(len(DISTRACTORS))]
        words[key] = word
    return (f"a {words['mood']} {words['genre']} song with {words['gender']} vocals "
            f"at a {words['tempo']} tempo")


def alignment_score(caption, tags):
    """Fraction of the tag values that appear as whole words in the caption.

    ``caption`` may be a record, in which case its caption and tags are used
    when ``tags`` is None; ``tags`` may also be a song spec.
    """
    if hasattr(caption, "caption"):
        tags = caption.tags if tags is None else tags
        caption = caption.caption
    if hasattr(tags, "tags"):
        tags = tags.tags
    words = set(re.findall(r"[a-z]+", caption.lower()))
    values = list(tags.values())
    return sum(v in words for v in values) / len(values) if values else 0.0
