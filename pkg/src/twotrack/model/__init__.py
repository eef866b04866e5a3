"""Autoregressive decoder over patterned codec tokens."""

from .config import VOCAL_LOSS_WEIGHT, DecoderConfig, desk_config, full_scale_config
from .decoder import Decoder, DecoderLayer
from .io import build_from_meta, load_model, save_model, split_prefix
from .losses import (Batch, LossResult, Stream, batch_loss, collate, compute_loss,
                     loss_from_logits, stream_coefficients, validate_weights)
from .sampling import TEMPERATURE, TOP_K, generate

__all__ = [
    "Batch", "Decoder", "DecoderConfig", "DecoderLayer", "LossResult", "Stream", "TEMPERATURE",
    "TOP_K", "VOCAL_LOSS_WEIGHT", "batch_loss", "build_from_meta", "collate", "compute_loss",
    "desk_config", "generate", "load_model", "loss_from_logits", "full_scale_config", "save_model",
    "split_prefix", "stream_coefficients", "validate_weights",
]
