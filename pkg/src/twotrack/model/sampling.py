"""Autoregressive decoding that always yields a well-formed patterned sequence."""

from __future__ import annotations

import numpy as np

from ..errors import CapacityError, NumericError
from ..numerics.tensor import Tensor, no_grad
from ..patterns import (PatternedSequence, _assemble, _disassemble, _layout_length, slot,
                        specials)

TEMPERATURE = 1.0
TOP_K = 32


def head_for_group(kind, group):
    return group if kind.is_parallel else 0


def _pick(logits, ids, temperature, top_k, rng):
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits during generation")
    if temperature <= 0:
        return int(ids[int(np.argmax(z))])
    z = z / temperature
    if top_k and top_k < z.size:
        cut = np.sort(z)[-top_k]
        z = np.where(z >= cut, z, -np.inf)
    p = np.exp(z - z.max())
    p /= p.sum()
    return int(ids[rng.choice(z.size, p=p)])


def generate(decoder, cond, max_frames, temperature=TEMPERATURE, top_k=TOP_K, seed=0,
             min_frames=1) -> PatternedSequence:
    """Sample a patterned sequence conditioned on ``cond`` (a bundle or (Lc, D) rows).

    Slot geometry is fixed by the pattern: a codebook-``k`` slot at delayed
    column ``c`` belongs to frame ``c - k``, so slots before frame 0 are PAD
    without consulting the model. The end of the song is decided by the
    leader track's first codebook emitting EOS (or by ``max_frames``); every
    later slot of every track is then EOS at that frame and PAD past it, which
    flushes the delayed codebooks over the following ``N_q - 1`` steps.
    Real-code slots sample only among the ``K`` codes.
    """
    cfg = decoder.config
    kind, n_q, K = cfg.kind, cfg.num_codebooks, cfg.codebook_size
    pad, bos, eos = specials(K)
    if hasattr(cond, "cond"):
        cond = cond.cond
    cond = cond if isinstance(cond, Tensor) else Tensor(np.asarray(cond))
    max_steps = _layout_length(kind, max_frames + n_q)
    if max_steps > cfg.max_len:
        raise CapacityError(f"{max_frames} frames need {max_steps} steps; the decoder "
                            f"holds {cfg.max_len}")
    rng = np.random.default_rng(seed)
    G = kind.num_groups
    real_ids = np.arange(K)
    eos_ids = np.append(real_ids, eos)
    steps = [np.full((G, n_q), bos, dtype=np.int64)]
    end = None
    s = 0
    with no_grad():
        while end is None or s < _layout_length(kind, end + n_q):
            hidden = decoder.forward(np.stack(steps), cond)
            last = hidden[-1:]
            step = np.full((G, n_q), pad, dtype=np.int64)
            cache = {}
            for g, track, col in slot(kind, s):
                for k in range(n_q):
                    f = col - k
                    if f < 0 or (end is not None and f > end):
                        continue
                    if end is not None and f == end:
                        step[g, k] = eos
                        continue
                    leader = track == kind.leader and k == 0
                    if leader and f >= max_frames:
                        end = f
                        step[g, k] = eos
                        continue
                    head = head_for_group(kind, g)
                    if head not in cache:
                        cache[head] = decoder.logits(last, head).data[0]
                    row = cache[head][k]
                    if leader and f >= min_frames:
                        code = _pick(row[eos_ids], eos_ids, temperature, top_k, rng)
                    else:
                        code = _pick(row[:K], real_ids, temperature, top_k, rng)
                    if code == eos:
                        end = f
                    step[g, k] = code
            steps.append(step)
            s += 1
    codes = np.stack(steps[1:])
    tracks = _disassemble(kind, codes, pad)
    content = {}
    for name, arr in tracks.items():
        arr = arr[:, :-1].copy()
        arr[arr == eos] = pad
        content[name] = arr
    return PatternedSequence(kind, _assemble(kind, content, pad), K, end,
                             frame_rate=50)
