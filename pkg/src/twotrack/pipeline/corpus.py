"""Seeded corpus assembly: songs -> clips -> measured records -> files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..codec.audio import Waveform, read_wav, write_wav
from .manifest import ClipRecord, write_manifest
from .metrics import alignment_score, clip_energy, edit_distance_rate, make_caption, noisy_transcripts
from .segment import VadParams, vad_segment, voiced_frames
from .synth import oracle_transcribe, random_song_spec, synth_song

VOICE_REF_SECONDS = 3.0


@dataclass
class CorpusParams:
    clips: int = 200
    seed: int = 0
    target: float = 3.0  # mean clip seconds at desk scale
    max_duration: float = 30.0
    noise_max: float = 0.15  # per-clip transcript corruption rate drawn from [0, noise_max]
    tag_noise: float = 0.35
    vocal_levels: tuple = (0.12, 0.3)  # stem RMS, log-uniform
    acc_levels: tuple = (0.12, 0.3)
    phrases: tuple = (2, 4)
    words_per_phrase: tuple = (2, 4)
    first_song: int = 0  # song index to start from; disjoint ranges give disjoint songs


@dataclass
class Clip:
    record: ClipRecord
    vocal: Waveform
    acc: Waveform
    mixed: Waveform
    spec_tags: dict = field(default_factory=dict)


def voice_ref_span(vocal: Waveform, seconds=VOICE_REF_SECONDS):
    """First voiced frame onward, ``seconds`` long or up to the clip end."""
    hop = vocal.sample_rate // 50
    voiced = np.flatnonzero(voiced_frames(vocal))
    start = int(voiced[0]) * hop if voiced.size else 0
    length = int(seconds * vocal.sample_rate)
    if start + length > len(vocal):
        start = max(0, len(vocal) - length)
    return [start, min(len(vocal), start + length)]


def song_clips(song, params: CorpusParams):
    rng = np.random.default_rng([params.seed, song])
    spec = random_song_spec(rng, phrases=params.phrases, words_per_phrase=params.words_per_phrase,
                            levels=(params.vocal_levels, params.acc_levels))
    vocal, acc, mixed = synth_song(spec, rng)
    vad = VadParams(target=params.target, max_duration=params.max_duration)
    out = []
    for j, seg in enumerate(vad_segment(vocal, vad)):
        v = vocal.slice(seg.start, seg.stop)
        a = acc.slice(seg.start, seg.stop)
        m = mixed.slice(seg.start, seg.stop)
        oracle = oracle_transcribe(v)
        rate = rng.uniform(0.0, params.noise_max)
        noise = {"sub_rate": rate / 3, "del_rate": rate / 3, "ins_rate": rate / 3}
        t1, t2 = noisy_transcripts(oracle, noise, rng)
        caption = make_caption(spec.tags, rng, params.tag_noise)
        cid = f"s{song:05d}c{j:02d}"
        rec = ClipRecord(
            id=cid, vocal_path=f"clips/{cid}_vocal.wav", acc_path=f"clips/{cid}_acc.wav",
            mixed_path=f"clips/{cid}_mixed.wav", lyrics=t1, caption=caption,
            oracle_lyrics=oracle, transcript_b=t2, tags=spec.tags, voice_ref=voice_ref_span(v),
            duration=len(v) / v.sample_rate, song=song,
            metrics={"edit_distance_rate": edit_distance_rate(t1, t2),
                     "energy_vocal": clip_energy(v), "energy_acc": clip_energy(a),
                     "alignment_score": alignment_score(caption, spec.tags)})
        out.append(Clip(rec, v, a, m, spec.tags))
    return out


def synth_corpus(params: CorpusParams):
    """Exactly ``params.clips`` clips, drawn song by song in order."""
    clips, song = [], params.first_song
    while len(clips) < params.clips:
        clips.extend(song_clips(song, params)[:params.clips - len(clips)])
        song += 1
    return clips


def write_corpus(clips, out_dir, manifest_name="corpus.jsonl"):
    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    for c in clips:
        write_wav(out_dir / c.record.vocal_path, c.vocal)
        write_wav(out_dir / c.record.acc_path, c.acc)
        write_wav(out_dir / c.record.mixed_path, c.mixed)
    records = [c.record for c in clips]
    write_manifest(records, out_dir / manifest_name)
    return records


def load_stems(record, root):
    root = Path(root)
    return (read_wav(root / record.vocal_path), read_wav(root / record.acc_path),
            read_wav(root / record.mixed_path))


def write_report(report, path):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
