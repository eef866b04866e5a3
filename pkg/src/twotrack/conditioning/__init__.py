"""Condition encoders: lyric BPE, caption words, reference voice."""

from .bpe import LyricTokenizer, pretokenize, train_bpe
from .encoders import (ConditionBundle, Conditioner, LyricsEncoder, TextEncoder, VoiceEmbedder,
                       assemble_condition, build_word_vocab, caption_words, voice_layer_stack)

__all__ = [
    "ConditionBundle", "Conditioner", "LyricTokenizer", "LyricsEncoder", "TextEncoder",
    "VoiceEmbedder", "assemble_condition", "build_word_vocab", "caption_words", "pretokenize",
    "train_bpe", "voice_layer_stack",
]
