"""Lyric, caption and reference-voice encoders, and the condition assembler."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..codec.audio import Waveform
from ..errors import ConfigError, DimensionError, InputError, VocabularyError
from ..numerics import tensor as T
from ..numerics.nn import (EncoderBlock, Embedding, LayerNorm, Linear, Module, Parameter,
                           normal_init, sinusoidal_positions)
from ..numerics.tensor import Tensor, get_default_dtype

VOICE_SECONDS = 3.0
VOICE_FRAME_RATE = 50
_WORD = re.compile(r"[a-z0-9']+")


class _SequenceEncoder(Module):
    """Token embedding + sinusoidal positions + bidirectional encoder blocks."""

    def __init__(self, rng, vocab, width, layers, heads):
        self.vocab = vocab
        self.width = width
        self.embed = Embedding(rng, vocab, width)
        self.blocks = [EncoderBlock(rng, width, heads) for _ in range(layers)]
        self.norm = LayerNorm(width)

    def __call__(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size == 0:
            return Tensor(np.zeros((0, self.width), dtype=self.embed.weight.dtype))
        if ids.min() < 0 or ids.max() >= self.vocab:
            raise VocabularyError(f"token id outside vocabulary of {self.vocab}")
        x = self.embed(ids) + sinusoidal_positions(len(ids), self.width, self.embed.weight.dtype)
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class LyricsEncoder(_SequenceEncoder):
    def __init__(self, rng, vocab, width=64, layers=2, heads=4):
        super().__init__(rng, vocab, width, layers, heads)


def caption_words(caption):
    return _WORD.findall(caption.lower())


def build_word_vocab(captions):
    """Sorted word list; id 0 is the unknown word, so word ``i`` has id ``i + 1``."""
    return sorted({w for c in captions for w in caption_words(c)})


class TextEncoder(_SequenceEncoder):
    def __init__(self, rng, words, width=64, layers=1, heads=4):
        self.words = list(words)
        self.word_ids = {w: i + 1 for i, w in enumerate(self.words)}
        super().__init__(rng, len(self.words) + 1, width, layers, heads)

    def ids(self, caption):
        words = caption_words(caption or "")
        if not words:
            raise ConfigError("a caption with at least one word is required")
        return [self.word_ids.get(w, 0) for w in words]

    def encode(self, caption):
        return self(self.ids(caption))


def voice_layer_stack(samples, sample_rate=16000, bands=32, layers=4, seed=1234,
                      frame_rate=VOICE_FRAME_RATE):
    """Frozen multi-scale spectral features, shaped (layers, frames, bands).

    Each frame's power spectrum is pooled into equal-width bands and
    log-compressed. Pseudo-layer ``l`` smooths that over ``2l + 1`` frames
    and applies a fixed random rotation with a tanh, so deeper layers see
    slower structure. Zero input gives exactly zero features.
    """
    hop = sample_rate // frame_rate
    n = len(samples) // hop
    frames = np.asarray(samples[:n * hop], dtype=np.float64).reshape(n, hop)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2 / hop
    edges = np.linspace(1, power.shape[1], bands + 1).astype(int)
    band = np.stack([power[:, a:b].sum(1) for a, b in zip(edges[:-1], edges[1:])], axis=1)
    base = np.log1p(band)
    rng = np.random.default_rng(seed)
    out = np.empty((layers, n, bands))
    for li in range(layers):
        w = 2 * (li + 1) + 1
        kernel = np.ones(w)
        summed = np.stack([np.convolve(base[:, j], kernel, mode="same") for j in range(bands)], 1)
        count = np.convolve(np.ones(n), kernel, mode="same")[:, None]
        smooth = summed / count
        proj = rng.normal(0.0, 1.0 / np.sqrt(bands), size=(bands, bands))
        out[li] = np.tanh(smooth @ proj)
    return out


class VoiceEmbedder(Module):
    """Frozen feature stack aggregated over layers by a learned kernel-1 convolution."""

    def __init__(self, bands=32, layers=4, seed=1234, sample_rate=16000):
        self.bands = bands
        self.layers = layers
        self.seed = seed
        self.sample_rate = sample_rate
        dt = get_default_dtype()
        self.mix = Parameter(np.full((layers,), 1.0 / layers, dtype=dt))
        self.mix_bias = Parameter(np.zeros((1,), dtype=dt))

    def features(self, reference: Waveform):
        expected = int(VOICE_SECONDS * reference.sample_rate)
        hop = reference.sample_rate // VOICE_FRAME_RATE
        if abs(len(reference) - expected) > hop:
            raise InputError(f"voice reference must last {VOICE_SECONDS:g} s (+-1 frame), "
                             f"got {reference.duration:.3f} s")
        if reference.sample_rate != self.sample_rate:
            raise InputError(f"voice reference at {reference.sample_rate} Hz, expected "
                             f"{self.sample_rate} Hz")
        return voice_layer_stack(reference.samples, reference.sample_rate, self.bands,
                                 self.layers, self.seed)

    def aggregate(self, stack):
        """(layers, frames, bands) array or tensor -> (frames, bands)."""
        stack = stack if isinstance(stack, Tensor) else Tensor(np.asarray(stack, self.mix.dtype))
        L, n, F = stack.shape
        flat = stack.reshape(L, n * F).transpose(1, 0)
        out = T.matmul(flat, self.mix.reshape(L, 1)).reshape(n, F)
        return out + self.mix_bias

    def __call__(self, reference: Waveform):
        return self.aggregate(self.features(reference))


@dataclass
class ConditionBundle:
    """Projected condition segments; ``cond`` concatenates voice, text, lyrics."""

    voice: Tensor
    text: Tensor
    lyrics: Tensor
    voice_present: bool
    null_voice: Tensor | None = None  # the row that stands in for a dropped voice

    @property
    def lengths(self):
        return self.voice.shape[0], self.text.shape[0], self.lyrics.shape[0]

    @property
    def cond(self):
        return T.concat([self.voice, self.text, self.lyrics], axis=0)

    def segment(self, name):
        nv, nt, _ = self.lengths
        start = {"voice": 0, "text": nv, "lyrics": nv + nt}[name]
        return start, start + self.lengths[("voice", "text", "lyrics").index(name)]


class Conditioner(Module):
    """Owns the three encoders, their projections to width D and the null-voice row."""

    def __init__(self, rng, tokenizer, words, width, lyric_width=64, lyric_layers=2,
                 text_width=64, text_layers=1, heads=4, voice_bands=32, voice_layers=4,
                 voice_seed=1234):
        self.tokenizer = tokenizer
        self.width = width
        self.settings = dict(width=width, lyric_width=lyric_width, lyric_layers=lyric_layers,
                             text_width=text_width, text_layers=text_layers, heads=heads,
                             voice_bands=voice_bands, voice_layers=voice_layers,
                             voice_seed=voice_seed)
        self.lyrics = LyricsEncoder(rng, len(tokenizer), lyric_width, lyric_layers, heads)
        self.text = TextEncoder(rng, words, text_width, text_layers, heads)
        self.voice = VoiceEmbedder(voice_bands, voice_layers, voice_seed)
        self.voice_proj = Linear(rng, voice_bands, width)
        self.text_proj = Linear(rng, text_width, width)
        self.lyrics_proj = Linear(rng, lyric_width, width)
        self.null_voice = normal_init(rng, (1, width))

    def assemble(self, voice, text, lyrics):
        """Project native-width segments to D; ``voice=None`` uses the null row."""
        for seg, proj, name in ((voice, self.voice_proj, "voice"), (text, self.text_proj, "text"),
                                (lyrics, self.lyrics_proj, "lyrics")):
            if seg is not None and (seg.ndim != 2 or seg.shape[1] != proj.weight.shape[0]):
                raise DimensionError(f"{name} segment of shape {seg.shape} does not fit a "
                                     f"projection from width {proj.weight.shape[0]}")
        v = self.null_voice if voice is None else self.voice_proj(voice)
        return ConditionBundle(v, self.text_proj(text), self.lyrics_proj(lyrics), voice is not None,
                               self.null_voice)

    def __call__(self, lyrics, caption, voice_stack=None):
        """Encode raw conditions; ``voice_stack`` is a precomputed frozen feature stack."""
        ids = self.tokenizer.tokenize(lyrics) if isinstance(lyrics, str) else lyrics
        voice = None if voice_stack is None else self.voice.aggregate(voice_stack)
        return self.assemble(voice, self.text.encode(caption), self.lyrics(ids))

    def without_voice(self, bundle: ConditionBundle):
        return ConditionBundle(self.null_voice, bundle.text, bundle.lyrics, False, self.null_voice)


def assemble_condition(conditioner, voice, text, lyrics):
    return conditioner.assemble(voice, text, lyrics)
