"""Memorise 16 short synthetic clips with the desk-sized decoder, decode them
back greedily, then carry the mixed weights into a dual-track model.

Run: python demos/desk_training.py [--steps 400] [--dual InterleavingAV]
Takes a couple of minutes per pattern on one CPU core.
"""

import argparse
import tempfile
import time

import numpy as np

from twotrack.codec import frame_features, train_rvq
from twotrack.conditioning import Conditioner, build_word_vocab, train_bpe
from twotrack.model import Decoder, desk_config, generate
from twotrack.patterns import PatternKind, invert_pattern
from twotrack.pipeline import CorpusParams, synth_corpus
from twotrack.trainer import (TrainStage, Trainer, init_dual_from_mixed, items_from_clips,
                              teacher_forced_metrics)


def greedy_match(decoder, cond, items):
    hit = total = 0
    for it in items:
        bundle = cond(it.lyric_ids, it.caption, it.voice_stack)
        T = it.grids["mixed"].num_frames
        inv = invert_pattern(generate(decoder, bundle, T + 5, temperature=0.0))
        for name in decoder.kind.tracks:
            got, want = getattr(inv, name).codes, it.grids[name].codes
            m = min(got.shape[1], want.shape[1])
            hit += int((got[:, :m] == want[:, :m]).sum())
            total += want.size
    return hit / total


def report(step, decoder, cond, items, t0):
    loss, acc = teacher_forced_metrics(decoder, cond, items)
    print(f"  step {step + 1:4d}  teacher-forced loss {loss:.4f}  argmax acc {acc:.3f}  "
          f"({time.perf_counter() - t0:.0f} s)")
    return loss, acc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--dual", default="InterleavingAV")
    ap.add_argument("--dual-steps", type=int, default=200)
    args = ap.parse_args()

    clips = synth_corpus(CorpusParams(clips=16, seed=0, target=1.0))
    feats = np.concatenate([frame_features(getattr(c, s)).features
                            for s in ("mixed", "vocal", "acc") for c in clips])
    cb = train_rvq(feats, 4, 64, iterations=10, seed=0)
    rng = np.random.default_rng(0)
    tok = train_bpe([c.record.lyrics for c in clips], vocab_size=64)
    cond = Conditioner(rng, tok, build_word_vocab([c.record.caption for c in clips]), width=128)
    decoder = Decoder(desk_config(PatternKind.MIXED), rng)
    items = items_from_clips(clips, cb, cond)
    print(f"{len(items)} clips, {sum(i.grids['mixed'].num_frames for i in items)} frames")

    out = tempfile.mkdtemp(prefix="twotrack_demo_")
    t0 = time.perf_counter()
    print("\nmixed, stage 1 at lr 1e-3")

    def every(step, _):
        if (step + 1) % 50 == 0:
            loss, acc = report(step, decoder, cond, items, t0)
            return loss < 0.1 and acc == 1.0
        return False

    Trainer(decoder, cond, items, out_dir=out, seed=0).run_stage(
        TrainStage("1", steps=args.steps, lr=1e-3, filter=None, init="fresh"), 0,
        early_stop=every)
    print(f"greedy decoding reproduces {greedy_match(decoder, cond, items):.1%} of the codes")

    kind = PatternKind.from_name(args.dual)
    dual, dcond, loaded = init_dual_from_mixed(f"{out}/stage_1.ckpt", kind)
    fresh = sorted(set(dual.state_dict()) - set(loaded))
    print(f"\n{kind.value}: {len(loaded)} tensors copied from the mixed model, "
          f"fresh: {', '.join(fresh) or 'none'}")
    t0 = time.perf_counter()
    report(-1, dual, dcond, items, t0)

    def every_dual(step, _):
        if (step + 1) % 50 == 0:
            report(step, dual, dcond, items, t0)
        return False

    Trainer(dual, dcond, items, seed=0).run_stage(
        TrainStage("1.5", steps=args.dual_steps, lr=5e-5, filter=None, init="fresh"), 0,
        early_stop=every_dual)


if __name__ == "__main__":
    main()
