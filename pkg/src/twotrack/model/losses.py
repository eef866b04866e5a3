"""Teacher-forcing batches and the per-pattern weighted code loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from ..numerics import tensor as T
from ..numerics.tensor import Tensor
from ..patterns import PatternKind, TrainingSequence, specials

WEIGHT_TOLERANCE = 1e-6


def validate_weights(w, num_codebooks):
    """Codebook loss weights: N_q nonnegative entries, sum 1, earlier >= later."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (num_codebooks,):
        raise ConfigError(f"expected {num_codebooks} codebook weights, got shape {w.shape}")
    if abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError(f"codebook weights sum to {w.sum():.9f}, not 1")
    if np.any(w < 0):
        raise ConfigError("codebook weights must be nonnegative")
    if np.any(np.diff(w) > WEIGHT_TOLERANCE):
        raise ConfigError("codebook weights must not increase with codebook index")
    return w


def stream_coefficients(kind, vocal_weight):
    kind = PatternKind.from_name(kind)
    if kind is PatternKind.MIXED:
        return {"mixed": 1.0}
    if kind is PatternKind.MIXED_PRO:
        return {"mixed": 1.0, "vocal": float(vocal_weight)}
    return {"acc": 0.5, "vocal": 0.5}


@dataclass
class Stream:
    name: str
    head_group: int
    targets: np.ndarray  # (B, L, N_q)


@dataclass
class Batch:
    kind: PatternKind
    inputs: np.ndarray  # (B, L, G, N_q)
    streams: list
    cond: Tensor  # (B, Lc, D)
    cond_mask: np.ndarray  # (B, Lc)
    codebook_size: int

    @property
    def size(self):
        return self.inputs.shape[0]


def collate(sequences: list[TrainingSequence], conds: list[Tensor]) -> Batch:
    """Pad training sequences with PAD steps and stack their condition rows."""
    if not sequences or len(sequences) != len(conds):
        raise DimensionError("need one condition per training sequence")
    kind = sequences[0].kind
    K = sequences[0].codebook_size
    if any(s.kind is not kind or s.codebook_size != K for s in sequences):
        raise DimensionError("batch items must share pattern kind and codebook size")
    pad = specials(K)[0]
    L = max(s.length for s in sequences)
    _, G, n_q = sequences[0].inputs.shape
    inputs = np.full((len(sequences), L, G, n_q), pad, dtype=np.int64)
    for i, s in enumerate(sequences):
        inputs[i, :s.length] = s.inputs
    streams = []
    for j, first in enumerate(sequences[0].streams):
        t = np.full((len(sequences), L, n_q), pad, dtype=np.int64)
        for i, s in enumerate(sequences):
            t[i, :s.length] = s.streams[j].targets
        streams.append(Stream(first.name, first.head_group, t))
    cond, mask = T.pad_stack(conds)
    return Batch(kind, inputs, streams, cond, mask, K)


@dataclass
class LossResult:
    total: Tensor
    per_codebook: dict  # stream name -> (N_q,) mean CE per codebook
    counts: dict  # stream name -> (N_q,) number of scored targets

    def item(self):
        return self.total.item()


def loss_from_logits(logits_by_group, streams, weights, kind, vocal_weight):
    """Weighted code cross-entropy; PAD and BOS targets are excluded.

    Each stream scores ``sum_k w_k * CE_k`` where ``CE_k`` is the mean over
    that stream's valid codebook-``k`` targets; streams are combined with the
    pattern's coefficients. Streams sharing a head group are fused into one
    cross-entropy call.
    """
    any_logits = next(iter(logits_by_group.values()))
    n_q, V = any_logits.shape[-2:]
    K = V - 3
    w = validate_weights(weights, n_q)
    coef = stream_coefficients(kind, vocal_weight)
    pad, bos, _ = specials(K)
    merged = {}
    per_codebook, counts, masks = {}, {}, {}
    for s in streams:
        valid = (s.targets != pad) & (s.targets != bos)
        cnt = valid.reshape(-1, n_q).sum(axis=0)
        scale = np.where(cnt > 0, coef[s.name] * w / np.maximum(cnt, 1), 0.0)
        tgt, wt = merged.setdefault(s.head_group, (np.full(s.targets.shape, pad, np.int64),
                                                    np.zeros(s.targets.shape)))
        if np.any(valid & (wt > 0)):
            raise DimensionError(f"stream {s.name} overlaps another stream on its head group")
        tgt[valid] = s.targets[valid]
        wt += valid * scale
        counts[s.name] = cnt
        masks[s.name] = valid
    total = None
    items = {}
    for g in sorted(merged):
        tgt, wt = merged[g]
        ce = T.cross_entropy(logits_by_group[g], tgt, wt)
        items[g] = ce.items
        total = ce if total is None else total + ce
    for s in streams:
        it = np.where(masks[s.name], items[s.head_group], 0.0).reshape(-1, n_q).sum(axis=0)
        per_codebook[s.name] = it / np.maximum(counts[s.name], 1)
    return LossResult(total, per_codebook, counts)


def compute_loss(decoder, hidden, streams, weights):
    """Loss of a decoder's heads on ``hidden`` against the target streams."""
    groups = sorted({s.head_group for s in streams})
    logits = {g: decoder.logits(hidden, g) for g in groups}
    return loss_from_logits(logits, streams, weights, decoder.kind, decoder.config.vocal_weight)


def batch_loss(decoder, batch: Batch, weights):
    hidden = decoder.forward(batch.inputs, batch.cond, batch.cond_mask)
    return compute_loss(decoder, hidden, batch.streams, weights)
