from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from ..errors import ConfigError
from ..patterns import PatternKind

VOCAL_LOSS_WEIGHT = 0.1


@dataclass
class DecoderConfig:
    kind: PatternKind = PatternKind.MIXED
    layers: int = 4
    width: int = 128
    heads: int = 4
    num_codebooks: int = 4
    codebook_size: int = 64
    vocal_weight: float = VOCAL_LOSS_WEIGHT
    max_len: int = 4096

    def __post_init__(self):
        try:
            self.kind = PatternKind.from_name(self.kind)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.vocal_weight < 0:
            raise ConfigError(f"vocal loss weight must be >= 0, got {self.vocal_weight}")
        if self.heads <= 0 or self.width % self.heads:
            raise ConfigError(f"{self.heads} heads do not divide width {self.width}")
        if self.width % 2:
            raise ConfigError("decoder width must be even for sinusoidal positions")
        if min(self.layers, self.num_codebooks, self.codebook_size, self.max_len) < 1:
            raise ConfigError("layers, codebooks, codebook size and max length must be positive")

    @property
    def vocab(self):
        """Per-codebook vocabulary: real codes plus PAD, BOS and EOS."""
        return self.codebook_size + 3

    @property
    def head_groups(self):
        return 2 if self.kind is PatternKind.MIXED_PRO or self.kind.is_parallel else 1

    def with_kind(self, kind):
        return replace(self, kind=PatternKind.from_name(kind))

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def desk_config(kind=PatternKind.MIXED, **overrides):
    return DecoderConfig(kind=kind, **overrides)


def full_scale_config(kind=PatternKind.MIXED, **overrides):
    settings = dict(layers=24, width=1024, heads=16, num_codebooks=8, codebook_size=1024)
    settings.update(overrides)
    return DecoderConfig(kind=kind, **settings)
