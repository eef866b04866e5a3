"""Print how each token pattern lays out a tiny pair of code grids.

Run: python demos/pattern_layouts.py
"""

import numpy as np

from twotrack.codec import TokenGrid
from twotrack.patterns import PatternKind, build_pattern, invert_pattern, specials

K = 10
PAD, BOS, EOS = specials(K)
NAMES = {PAD: "..", BOS: "<s", EOS: "/>"}


def cell(v):
    return NAMES.get(int(v), f"{int(v):2d}")


def show(seq):
    # one row per codebook, one column per decoder step; groups side by side
    for g in range(seq.codes.shape[1]):
        for k in range(seq.num_codebooks):
            print(f"  g{g} q{k} |", " ".join(cell(v) for v in seq.codes[:, g, k]))
    if seq.kind.is_interleaving:
        print("  track  |", " ".join(t[0].upper() + " " for t in seq.step_tracks()))


def main():
    vocal = TokenGrid(np.array([[1, 2, 3], [4, 5, 6]]), K)
    acc = TokenGrid(np.array([[7, 8, 9], [0, 1, 2]]), K)
    mixed = TokenGrid((vocal.codes + acc.codes) % K, K)
    print("vocal codes", vocal.codes.tolist(), " acc codes", acc.codes.tolist())
    for kind in PatternKind:
        if kind.is_mixed:
            seq = build_pattern(kind, mixed=mixed, vocal=vocal)
        else:
            seq = build_pattern(kind, vocal=vocal, acc=acc)
        print(f"\n{kind.value}: {seq.num_steps} steps, leader track '{kind.leader}'")
        show(seq)
        inv = invert_pattern(seq)
        back = [inv.mixed] if kind.is_mixed else [inv.vocal, inv.acc]
        want = [mixed] if kind.is_mixed else [vocal, acc]
        print("  inverts exactly:", all(a == b for a, b in zip(back, want)))

    tr = build_pattern("ParallelAV", vocal=vocal, acc=acc).training()
    print("\nParallelAV teacher-forcing targets per stream (EOS appended):")
    for s in tr.streams:
        print(f"  {s.name:5s}", [" ".join(cell(v) for v in row) for row in s.targets.T])


if __name__ == "__main__":
    main()
