"""Waveform framing and the residual-VQ tokenizer."""

from .audio import SAMPLE_RATE, Waveform, read_wav, write_wav
from .rvq import (FRAME_RATE, CodebookSet, FrameFeatures, TokenGrid, decode, encode,
                  frame_features, kmeans, load_codebooks, quantize, save_codebooks, train_rvq)

__all__ = [
    "FRAME_RATE", "SAMPLE_RATE", "CodebookSet", "FrameFeatures", "TokenGrid", "Waveform",
    "decode", "encode", "frame_features", "kmeans", "load_codebooks", "quantize", "read_wav",
    "save_codebooks", "train_rvq", "write_wav",
]
