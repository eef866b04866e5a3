"""Experiment configuration read from and written to INI files."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..patterns import PatternKind
from ..pipeline.manifest import HQ_FILTER, PRETRAIN_FILTER, FilterThresholds


@dataclass
class ExperimentSection:
    seed: int = 0
    out: str = "experiment"
    pattern: str = "Mixed"


@dataclass
class CorpusSection:
    clips: int = 200
    heldout: int = 20
    target: float = 3.0
    max_duration: float = 6.0
    noise_max: float = 0.15
    tag_noise: float = 0.35


@dataclass
class CodecSection:
    num_codebooks: int = 4
    codebook_size: int = 64
    iterations: int = 20


@dataclass
class DecoderSection:
    layers: int = 4
    width: int = 128
    heads: int = 4
    vocal_weight: float = 0.1
    max_len: int = 4096


@dataclass
class ConditionerSection:
    bpe_vocab: int = 256
    lyric_width: int = 64
    lyric_layers: int = 2
    text_width: int = 64
    text_layers: int = 1
    heads: int = 4
    voice_bands: int = 32
    voice_layers: int = 4


@dataclass
class TrainSection:
    steps: int = 2000
    batch_size: int = 8
    voice_dropout: float = 0.5
    checkpoint_every: int = 100
    max_frames: int = 300
    curriculum: bool = True
    init_checkpoint: str = ""


@dataclass
class FilterSection:
    pretrain: str = f"{PRETRAIN_FILTER.max_edit}, {PRETRAIN_FILTER.min_align}, {PRETRAIN_FILTER.min_energy}"
    hq: str = f"{HQ_FILTER.max_edit}, {HQ_FILTER.min_align}, {HQ_FILTER.min_energy}"

    @staticmethod
    def parse(text):
        try:
            edit, align, energy = (float(x) for x in text.split(","))
        except ValueError:
            raise ConfigError(f"filter thresholds must be 'edit, align, energy', got {text!r}") \
                from None
        return FilterThresholds(edit, align, energy)


@dataclass
class GenerateSection:
    temperature: float = 1.0
    top_k: int = 32
    max_frames: int = 150


@dataclass
class EvalSection:
    clips: int = 10


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    codec: CodecSection = field(default_factory=CodecSection)
    decoder: DecoderSection = field(default_factory=DecoderSection)
    conditioner: ConditionerSection = field(default_factory=ConditionerSection)
    train: TrainSection = field(default_factory=TrainSection)
    filter: FilterSection = field(default_factory=FilterSection)
    generate: GenerateSection = field(default_factory=GenerateSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @property
    def seed(self):
        return self.experiment.seed

    @property
    def root(self):
        return Path(self.experiment.out)

    @property
    def kind(self):
        return PatternKind.from_name(self.experiment.pattern)

    @property
    def pretrain_filter(self):
        return FilterSection.parse(self.filter.pretrain)

    @property
    def hq_filter(self):
        return FilterSection.parse(self.filter.hq)

    # layout of the experiment directory
    @property
    def data_dir(self):
        return self.root / "data"

    @property
    def codec_path(self):
        return self.root / "codec.ttcb"

    def run_dir(self, kind=None):
        return self.root / "runs" / PatternKind.from_name(kind or self.kind).value

    def to_ini(self):
        parser = configparser.ConfigParser()
        for f in fields(self):
            section = getattr(self, f.name)
            parser[f.name] = {k.name: _format(getattr(section, k.name)) for k in fields(section)}
        lines = []
        for name in parser.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in parser[name].items())
            lines.append("")
        return "\n".join(lines)

    def save(self, path):
        Path(path).write_text(self.to_ini(), encoding="utf-8")

    @classmethod
    def from_ini(cls, text, source="<config>"):
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for name in parser.sections():
            if name not in known:
                raise ConfigError(f"{source}: unknown section [{name}]")
            section = getattr(cfg, name)
            types = {f.name: f.type for f in fields(section)}
            updates = {}
            for key, raw in parser[name].items():
                if key not in types:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
                updates[key] = _parse(raw, types[key], f"{source}: [{name}] {key}")
            setattr(cfg, name, dataclasses.replace(section, **updates))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_ini(text, str(path))

    def validate(self):
        try:
            self.kind
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.pretrain_filter, self.hq_filter
        if self.corpus.clips < 0 or self.corpus.heldout < 0:
            raise ConfigError("corpus sizes must be nonnegative")
        if not 0.0 <= self.train.voice_dropout <= 1.0:
            raise ConfigError("voice_dropout must lie in [0, 1]")
        return self


def _format(value):
    return str(value).lower() if isinstance(value, bool) else str(value)


def _parse(raw, typ, where):
    typ = {"int": int, "float": float, "str": str, "bool": bool}.get(typ, typ)
    raw = raw.strip()
    try:
        if typ is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return lowered in ("true", "yes", "1", "on")
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {typ.__name__}") from None
