"""Model checkpoints: decoder (and optionally conditioner) weights plus config header."""

from __future__ import annotations

import numpy as np

from ..conditioning import Conditioner, LyricTokenizer
from ..errors import ParseError
from ..numerics.checkpoint import load_checkpoint, save_checkpoint
from .config import DecoderConfig
from .decoder import Decoder


def model_arrays(decoder, conditioner=None):
    arrays = {f"decoder.{k}": v for k, v in decoder.state_dict().items()}
    if conditioner is not None:
        arrays.update({f"conditioner.{k}": v for k, v in conditioner.state_dict().items()})
    return arrays


def model_meta(decoder, conditioner=None, extra=None):
    meta = {"format": "twotrack-model", "decoder": decoder.config.to_dict()}
    if conditioner is not None:
        meta["conditioner"] = conditioner.settings
        meta["tokenizer"] = conditioner.tokenizer.dumps()
        meta["words"] = conditioner.text.words
    meta.update(extra or {})
    return meta


def save_model(path, decoder, conditioner=None, extra=None, arrays=None):
    """``arrays`` adds further named arrays (e.g. optimiser moments)."""
    payload = model_arrays(decoder, conditioner)
    payload.update(arrays or {})
    save_checkpoint(path, payload, model_meta(decoder, conditioner, extra))


def split_prefix(arrays, prefix):
    n = len(prefix)
    return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix)}


def build_from_meta(meta, rng=None):
    if meta.get("format") != "twotrack-model":
        raise ParseError("checkpoint does not hold a model")
    rng = np.random.default_rng(0) if rng is None else rng
    decoder = Decoder(DecoderConfig.from_dict(meta["decoder"]), rng)
    conditioner = None
    if "conditioner" in meta:
        tok = LyricTokenizer.loads(meta["tokenizer"])
        conditioner = Conditioner(rng, tok, meta["words"], **meta["conditioner"])
    return decoder, conditioner


def load_model(path):
    """Returns ``(decoder, conditioner or None, meta, arrays)``."""
    arrays, meta = load_checkpoint(path)
    decoder, conditioner = build_from_meta(meta)
    decoder.load_state_dict(split_prefix(arrays, "decoder."))
    if conditioner is not None:
        conditioner.load_state_dict(split_prefix(arrays, "conditioner."))
    return decoder, conditioner, meta, arrays
