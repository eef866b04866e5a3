"""The experiment commands; each takes an :class:`ExperimentConfig` and writes artifacts."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..codec.audio import Waveform, read_wav, to_pcm16, write_wav
from ..codec.rvq import FrameFeatures, decode, frame_features, load_codebooks, save_codebooks, \
    train_rvq
from ..conditioning import Conditioner, build_word_vocab, train_bpe
from ..errors import DataError, MalformedPatternError, PlanError
from ..model import Decoder, DecoderConfig, generate, load_model
from ..patterns import invert_pattern, serialize
from ..pipeline import (CorpusParams, edit_distance_rate, filter_corpus, load_stems,
                        oracle_transcribe, read_manifest, synth_corpus, write_corpus,
                        write_manifest, write_report)
from ..trainer import (FROM_MIXED, build_items, default_plan, padded_reference, run_plan,
                       teacher_forced_metrics)
from ..trainer.plan import TrainPlan
from .config import ExperimentConfig
from .evaluation import ClipScore, EvalReport, attention_maps, reconstruction_snr, write_attention

CORPUS = "corpus.jsonl"
HELDOUT = "heldout.jsonl"
MANIFEST = "manifest.jsonl"


def _require(path, what):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} not found at {path}")
    return path


# -- data ---------------------------------------------------------------------
def cmd_synth_data(cfg: ExperimentConfig, out=None):
    """Synthesize, segment and measure the corpus; keep the pretraining-filter survivors.

    Writes ``corpus.jsonl`` (every measured clip), ``manifest.jsonl`` (clips
    that pass the pretraining filter), ``heldout.jsonl`` (clips from songs
    never used for training) and ``report.json``.
    """
    out = Path(out) if out is not None else cfg.data_dir
    c = cfg.corpus
    params = CorpusParams(clips=c.clips, seed=cfg.seed, target=c.target,
                          max_duration=c.max_duration, noise_max=c.noise_max,
                          tag_noise=c.tag_noise)
    clips = synth_corpus(params)
    first = clips[-1].record.song + 1 if clips else 0
    held = synth_corpus(dataclasses.replace(params, clips=c.heldout, first_song=first))
    out.mkdir(parents=True, exist_ok=True)
    records = write_corpus(clips, out, CORPUS)
    write_corpus(held, out, HELDOUT)
    kept, report = filter_corpus(records, cfg.pretrain_filter)
    write_manifest(kept, out / MANIFEST)
    report["heldout"] = len(held)
    write_report(report, out / "report.json")
    return report


def cmd_train_codec(cfg: ExperimentConfig, data_dir=None, out=None):
    """Fit the residual quantizer on every frame of every stem in the corpus."""
    data_dir = Path(data_dir) if data_dir is not None else cfg.data_dir
    records = read_manifest(_require(data_dir / CORPUS, "corpus manifest"))
    parts = [frame_features(w) for r in records for w in load_stems(r, data_dir)]
    if parts:
        ff = FrameFeatures(np.concatenate([p.features for p in parts]),
                           np.concatenate([p.scales for p in parts]),
                           np.concatenate([p.means for p in parts]))
    else:
        ff = FrameFeatures(np.zeros((0, 320)), np.zeros(0), np.zeros(0))
    cb = train_rvq(ff, cfg.codec.num_codebooks, cfg.codec.codebook_size,
                   iterations=cfg.codec.iterations, seed=cfg.seed)
    path = Path(out) if out is not None else cfg.codec_path
    path.parent.mkdir(parents=True, exist_ok=True)
    save_codebooks(path, cb)
    return cb, path


# -- training -------------------------------------------------------------------
def build_model(cfg: ExperimentConfig, records, codebooks, kind=None):
    """Fresh conditioner and decoder; the tokenizer and caption words come from ``records``."""
    kind = kind or cfg.kind
    rng = np.random.default_rng([cfg.seed, 7])
    c = cfg.conditioner
    tok = train_bpe([r.lyrics for r in records] or [" "], vocab_size=c.bpe_vocab, seed=cfg.seed)
    words = build_word_vocab([r.caption for r in records])
    d = cfg.decoder
    conditioner = Conditioner(rng, tok, words, width=d.width, lyric_width=c.lyric_width,
                              lyric_layers=c.lyric_layers, text_width=c.text_width,
                              text_layers=c.text_layers, heads=c.heads,
                              voice_bands=c.voice_bands, voice_layers=c.voice_layers)
    config = DecoderConfig(kind=kind, layers=d.layers, width=d.width, heads=d.heads,
                           num_codebooks=codebooks.num_codebooks,
                           codebook_size=codebooks.codebook_size,
                           vocal_weight=d.vocal_weight, max_len=d.max_len)
    return Decoder(config, rng), conditioner


def train_plan(cfg: ExperimentConfig, kind=None) -> TrainPlan:
    kind = kind or cfg.kind
    return default_plan(kind, cfg.train.steps, cfg.train.voice_dropout, cfg.hq_filter,
                        cfg.pretrain_filter)


def cmd_train(cfg: ExperimentConfig, stages=None, resume=False, data_dir=None, log=print):
    """Run plan stages for the configured pattern; returns the stage results."""
    data_dir = Path(data_dir) if data_dir is not None else cfg.data_dir
    records = read_manifest(_require(data_dir / CORPUS, "corpus manifest"))
    codebooks = load_codebooks(_require(cfg.codec_path, "codec"))
    plan = train_plan(cfg)
    names = list(stages) if stages else plan.names
    for n in names:
        plan.index(n)
    init = None
    if plan.stage(names[0]).init == FROM_MIXED:
        init = Path(cfg.train.init_checkpoint or cfg.run_dir("Mixed") / "stage_1.ckpt")
        if not init.exists():
            raise PlanError(f"stage {names[0]} starts from the mixed stage-1 checkpoint, "
                            f"missing at {init}")
    _, conditioner = build_model(cfg, records, codebooks)
    items = build_items(records, data_dir, codebooks, conditioner, cfg.train.max_frames)
    out = cfg.run_dir()
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    results, _ = run_plan(plan, lambda: build_model(cfg, records, codebooks), items, names,
                          resume=resume, init_checkpoint=init, out_dir=out, seed=cfg.seed,
                          batch_size=cfg.train.batch_size,
                          checkpoint_every=cfg.train.checkpoint_every,
                          curriculum=cfg.train.curriculum)
    for r in results:
        log(f"stage {r.name}: {r.steps_run} steps, loss {r.losses[0]:.4f} -> "
            f"{r.losses[-1]:.4f}, checkpoint {r.checkpoint}")
    return results


def latest_checkpoint(cfg: ExperimentConfig):
    plan = train_plan(cfg)
    for name in reversed(plan.names):
        path = cfg.run_dir() / f"stage_{name}.ckpt"
        if path.exists():
            return path
    raise DataError(f"no trained checkpoint under {cfg.run_dir()}")


# -- generation -------------------------------------------------------------------
def load_voice_reference(path, conditioner):
    w = read_wav(path)
    return conditioner.voice.features(padded_reference(w, [0, len(w)]))


def mix_stems(vocal: Waveform, acc: Waveform):
    """Samplewise sum of the two 16-bit stems, saturated to the 16-bit range."""
    total = to_pcm16(vocal.samples).astype(np.int32) + to_pcm16(acc.samples).astype(np.int32)
    return Waveform(np.clip(total, -32767, 32767) / 32767.0, vocal.sample_rate)


def cmd_generate(cfg: ExperimentConfig, lyrics, caption, out, checkpoint=None, voice_ref=None,
                 temperature=None, top_k=None, max_frames=None, codec=None):
    """Sample tokens, check the pattern, decode to audio; returns the written paths."""
    g = cfg.generate
    temperature = g.temperature if temperature is None else temperature
    top_k = g.top_k if top_k is None else top_k
    max_frames = g.max_frames if max_frames is None else max_frames
    checkpoint = Path(checkpoint) if checkpoint else latest_checkpoint(cfg)
    decoder, conditioner, _, _ = load_model(_require(checkpoint, "checkpoint"))
    codebooks = load_codebooks(_require(codec or cfg.codec_path, "codec"))
    decoder.drop_auxiliary_heads()
    stack = None if voice_ref is None else load_voice_reference(voice_ref, conditioner)
    bundle = conditioner(lyrics, caption, stack)
    seq = generate(decoder, bundle, max_frames, temperature, top_k, seed=cfg.seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tokens.ttps").write_bytes(serialize(seq))
    try:
        inv = invert_pattern(seq)
    except MalformedPatternError as exc:
        raise DataError(f"generated tokens break the {seq.kind.value} pattern ({exc}); "
                        f"tokens kept in {out / 'tokens.ttps'}") from None
    paths = {}
    if decoder.kind.is_mixed:
        paths["mixed"] = out / "mixed.wav"
        write_wav(paths["mixed"], decode(inv.mixed, codebooks))
    else:
        vocal, acc = decode(inv.vocal, codebooks), decode(inv.acc, codebooks)
        for name, w in (("vocal", vocal), ("acc", acc), ("mixed", mix_stems(vocal, acc))):
            paths[name] = out / f"{name}.wav"
            write_wav(paths[name], w)
    info = {"pattern": seq.kind.value, "frames": seq.num_frames, "steps": seq.num_steps,
            "seed": cfg.seed, "temperature": temperature, "top_k": top_k,
            "voice_reference": voice_ref is not None, "lyrics": lyrics, "caption": caption}
    (out / "generation.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return paths


# -- evaluation -------------------------------------------------------------------
def score_clip(decoder, conditioner, codebooks, item, stems, seed=0, source="generated"):
    """Teacher-forced accuracy plus lyric adherence of one greedy generation.

    With ``source="ground-truth"`` the reference stems stand in for the
    generated audio, which calibrates the oracle.
    """
    _, acc = teacher_forced_metrics(decoder, conditioner, [item])
    vocal, _, mixed = stems
    valid = True
    if source == "ground-truth":
        heard = vocal
    else:
        bundle = conditioner(item.lyric_ids, item.caption, item.voice_stack)
        seq = generate(decoder, bundle, item.grids["mixed"].num_frames, temperature=0, seed=seed)
        try:
            inv = invert_pattern(seq)
            grid = inv.mixed if decoder.kind.is_mixed else inv.vocal
            heard = decode(grid, codebooks)
        except MalformedPatternError:
            valid, heard = False, Waveform(np.zeros(0), vocal.sample_rate)
    err = edit_distance_rate(oracle_transcribe(heard), item.record.oracle_lyrics)
    return ClipScore(item.id, acc, err, max(0.0, 1.0 - err),
                     reconstruction_snr(mixed, codebooks), valid)


def cmd_evaluate(cfg: ExperimentConfig, out, checkpoint=None, manifest=None, limit=None,
                 source="generated", codec=None):
    checkpoint = Path(checkpoint) if checkpoint else latest_checkpoint(cfg)
    manifest = Path(manifest) if manifest else cfg.data_dir / HELDOUT
    records = read_manifest(_require(manifest, "evaluation manifest"))
    limit = cfg.eval.clips if limit is None else limit
    records = records[:limit] if limit else records
    if not records:
        raise DataError(f"no clips to evaluate in {manifest}")
    decoder, conditioner, _, _ = load_model(_require(checkpoint, "checkpoint"))
    codebooks = load_codebooks(_require(codec or cfg.codec_path, "codec"))
    root = manifest.parent
    scores = []
    for r in records:
        stems = load_stems(r, root)
        item = build_items([r], root, codebooks, conditioner, cfg.train.max_frames)[0]
        scores.append(score_clip(decoder, conditioner, codebooks, item, stems, cfg.seed, source))
    report = EvalReport(scores)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "eval_report.csv")
    return report


def cmd_inspect_attention(cfg: ExperimentConfig, clip, out, checkpoint=None, manifest=None,
                          codec=None):
    """Export per-layer, per-head attention of one teacher-forced pass over ``clip``."""
    checkpoint = Path(checkpoint) if checkpoint else latest_checkpoint(cfg)
    manifest = Path(manifest) if manifest else cfg.data_dir / CORPUS
    records = {r.id: r for r in read_manifest(_require(manifest, "manifest"))}
    if clip not in records:
        raise DataError(f"clip {clip!r} is not in {manifest}")
    decoder, conditioner, _, _ = load_model(_require(checkpoint, "checkpoint"))
    codebooks = load_codebooks(_require(codec or cfg.codec_path, "codec"))
    item = build_items([records[clip]], manifest.parent, codebooks, conditioner,
                       cfg.train.max_frames)[0]
    cond = conditioner(item.lyric_ids, item.caption, item.voice_stack).cond
    maps = attention_maps(decoder, item.training(decoder.kind), cond)
    write_attention(maps, out)
    return maps
