"""Fit the residual quantizer on synthetic songs and watch each stage shave
off residual energy, on training frames and on songs it never saw.

Run: python demos/codec_stages.py [--clips 40]
"""

import argparse

import numpy as np

from twotrack.cli.evaluation import reconstruction_snr, snr_db
from twotrack.codec import decode, encode, frame_features, quantize, train_rvq
from twotrack.pipeline import CorpusParams, synth_corpus

STEMS = ("mixed", "vocal", "acc")


def frames_of(clips):
    return np.concatenate([frame_features(getattr(c, s)).features for c in clips for s in STEMS])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--clips", type=int, default=40)
    ap.add_argument("--codebooks", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args()

    train = synth_corpus(CorpusParams(clips=args.clips, seed=0, max_duration=6.0))
    held = synth_corpus(CorpusParams(clips=10, seed=0, max_duration=6.0, first_song=50_000))
    x = frames_of(train)
    print(f"fitting {args.codebooks} x {args.size} codebooks on {len(x)} frames")
    cb = train_rvq(x, args.codebooks, args.size, iterations=10, seed=0)

    _, e_train = quantize(x, cb.stages)
    _, e_held = quantize(frames_of(held), cb.stages)
    print("\nmean residual energy per frame (stage 0 = normalised input)")
    print("stage   train    held-out")
    for s in range(args.codebooks + 1):
        print(f"{s:5d} {e_train[s].mean():8.4f} {e_held[s].mean():9.4f}")

    clip = held[0]
    g = encode(clip.mixed, cb)
    n = g.num_frames * 320
    print(f"\nheld-out clip {clip.record.id}: {g.num_frames} frames")
    for s in range(1, args.codebooks + 1):
        out = decode(g, cb, n_stages=s)
        print(f"  {s} stage(s): SNR {snr_db(clip.mixed.samples[:n], out.samples):6.2f} dB")
    print(f"  full round trip via helper: {reconstruction_snr(clip.mixed, cb):.2f} dB")


if __name__ == "__main__":
    main()
