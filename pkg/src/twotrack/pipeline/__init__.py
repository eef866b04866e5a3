"""Synthetic songs, clip segmentation, filter metrics and manifests."""

from .corpus import (Clip, CorpusParams, load_stems, song_clips, synth_corpus, voice_ref_span,
                     write_corpus, write_report)
from .manifest import (HQ_FILTER, METRIC_KEYS, PRETRAIN_FILTER, ClipRecord, FilterThresholds,
                       failures, filter_corpus, passes, read_manifest, write_manifest)
from .metrics import (alignment_score, clip_energy, edit_distance_rate, levenshtein, make_caption,
                      noisy_transcripts)
from .segment import Segment, VadParams, vad_segment, voiced_frames
from .synth import Note, SongSpec, oracle_transcribe, random_song_spec, synth_song

__all__ = [
    "HQ_FILTER", "METRIC_KEYS", "PRETRAIN_FILTER", "Clip", "ClipRecord", "CorpusParams",
    "FilterThresholds", "Note", "Segment", "SongSpec", "VadParams", "alignment_score",
    "clip_energy", "edit_distance_rate", "failures", "filter_corpus", "levenshtein",
    "load_stems", "make_caption", "noisy_transcripts", "oracle_transcribe", "passes",
    "random_song_spec", "read_manifest", "song_clips", "synth_corpus", "synth_song",
    "vad_segment", "voice_ref_span", "voiced_frames", "write_corpus", "write_manifest",
    "write_report",
]
