"""Pattern-aware transformer decoder with cross-attention over the condition."""

from __future__ import annotations

import numpy as np

from ..errors import CapacityError, DimensionError, VocabularyError
from ..numerics import tensor as T
from ..numerics.nn import (FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, Parameter,
                           sinusoidal_positions)
from ..numerics.tensor import get_default_dtype
from ..patterns import specials
from .config import DecoderConfig


class DecoderLayer(Module):
    """Pre-norm: causal self-attention, cross-attention, feed-forward."""

    def __init__(self, rng, width, heads):
        self.ln_self = LayerNorm(width)
        self.self_attn = MultiHeadAttention(rng, width, heads)
        self.ln_cross = LayerNorm(width)
        self.cross_attn = MultiHeadAttention(rng, width, heads)
        self.ln_ffn = LayerNorm(width)
        self.ffn = FeedForward(rng, width)

    def __call__(self, x, cond, causal, cross_mask):
        h, w_self = self.self_attn(self.ln_self(x), mask=causal)
        x = x + h
        h, w_cross = self.cross_attn(self.ln_cross(x), kv=cond, mask=cross_mask)
        x = x + h
        return x + self.ffn(self.ln_ffn(x)), (w_self, w_cross)


class Decoder(Module):
    def __init__(self, config: DecoderConfig, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        n_q, V, D = config.num_codebooks, config.vocab, config.width
        pad = specials(config.codebook_size)[0]
        self.embed = []
        for _ in range(config.kind.num_groups):
            table = rng.normal(0.0, 0.02, size=(n_q, V, D)).astype(get_default_dtype())
            table[:, pad] = 0.0
            self.embed.append(Parameter(table))
        self.layers = [DecoderLayer(rng, D, config.heads) for _ in range(config.layers)]
        self.norm = LayerNorm(D)
        self.heads = [Linear(rng, D, n_q * V) for _ in range(config.head_groups)]

    @property
    def kind(self):
        return self.config.kind

    def embed_step(self, codes):
        """(..., L, G, N_q) code ids -> (..., L, D) embeddings plus positions.

        Mixed and interleaving steps sum their N_q embeddings; parallel steps
        average all 2*N_q embeddings of both groups.
        """
        cfg = self.config
        codes = np.asarray(codes, dtype=np.int64)
        G, n_q, V = cfg.kind.num_groups, cfg.num_codebooks, cfg.vocab
        if codes.ndim < 3 or codes.shape[-2:] != (G, n_q):
            raise DimensionError(f"{cfg.kind.value} steps need shape (..., L, {G}, {n_q}), "
                                 f"got {codes.shape}")
        if codes.size and (codes.min() < 0 or codes.max() >= V):
            raise VocabularyError(f"code id outside [0, {V})")
        offsets = np.arange(n_q) * V
        total = None
        for g in range(G):
            table = self.embed[g].reshape(n_q * V, cfg.width)
            e = T.embedding(table, codes[..., g, :] + offsets).sum(axis=-2)
            total = e if total is None else total + e
        if cfg.kind.is_parallel:
            total = total * (1.0 / (G * n_q))
        L = codes.shape[-3]
        return total + sinusoidal_positions(L, cfg.width, total.dtype)

    def forward(self, codes, cond, cond_mask=None, return_attention=False):
        """Hidden states for every input step.

        ``cond`` is (Lc, D) or (B, Lc, D); ``cond_mask`` marks valid condition
        rows when a batch is padded. With ``return_attention`` the per-layer
        (self, cross) attention weights are returned as well.
        """
        L = np.shape(codes)[-3]
        if L > self.config.max_len:
            raise CapacityError(f"{L} steps exceed the decoder's maximum of {self.config.max_len}")
        x = self.embed_step(codes)
        causal = np.tril(np.ones((L, L), dtype=bool))
        cross_mask = None if cond_mask is None else np.asarray(cond_mask)[..., None, None, :]
        maps = []
        for layer in self.layers:
            x, w = layer(x, cond, causal, cross_mask)
            maps.append(w)
        x = self.norm(x)
        return (x, maps) if return_attention else x

    __call__ = forward

    def logits(self, hidden, group):
        cfg = self.config
        if group >= len(self.heads):
            raise DimensionError(f"head group {group} is not present")
        out = self.heads[group](hidden)
        return out.reshape(*hidden.shape[:-1], cfg.num_codebooks, cfg.vocab)

    def drop_auxiliary_heads(self):
        """Remove training-only head groups (the MixedPro vocal heads)."""
        if self.kind.is_mixed:
            self.heads = self.heads[:1]
        return self
