"""Training items: codec tokens, lyric ids, caption and frozen voice features per clip."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..codec.audio import Waveform
from ..codec.rvq import encode
from ..conditioning.encoders import VOICE_SECONDS
from ..errors import DataError
from ..patterns import PatternKind, build_pattern
from ..pipeline.corpus import load_stems
from ..pipeline.manifest import filter_corpus


def padded_reference(vocal: Waveform, span, seconds=VOICE_SECONDS):
    """The reference span of ``vocal``, zero-padded at the end to ``seconds``."""
    a, b = span
    ref = np.asarray(vocal.samples[a:b], dtype=np.float64)
    n = int(seconds * vocal.sample_rate)
    out = np.zeros(n)
    out[:min(n, len(ref))] = ref[:n]
    return Waveform(out, vocal.sample_rate)


@dataclass
class TrainItem:
    id: str
    grids: dict  # "mixed" / "vocal" / "acc" -> TokenGrid
    lyric_ids: list
    caption: str
    voice_stack: np.ndarray | None
    record: object = None
    _training: dict = field(default_factory=dict, repr=False)

    def training(self, kind):
        kind = PatternKind.from_name(kind)
        if kind not in self._training:
            seq = build_pattern(kind, mixed=self.grids["mixed"], vocal=self.grids["vocal"],
                                acc=self.grids["acc"])
            self._training[kind] = seq.training()
        return self._training[kind]


def make_item(record, stems, codebooks, conditioner, max_frames=None):
    vocal, acc, mixed = stems
    grids = {}
    for name, w in (("vocal", vocal), ("acc", acc), ("mixed", mixed)):
        g = encode(w, codebooks)
        if max_frames is not None and g.num_frames > max_frames:
            g = type(g)(g.codes[:, :max_frames], g.codebook_size, g.frame_rate,
                        None if g.scales is None else g.scales[:max_frames],
                        None if g.means is None else g.means[:max_frames])
        grids[name] = g
    ref = padded_reference(vocal, record.voice_ref)
    stack = conditioner.voice.features(ref) if conditioner is not None else None
    ids = conditioner.tokenizer.tokenize(record.lyrics) if conditioner is not None else []
    return TrainItem(record.id, grids, ids, record.caption, stack, record)


def build_items(records, root, codebooks, conditioner, max_frames=None):
    """Load and encode every record's stems (in record order)."""
    return [make_item(r, load_stems(r, root), codebooks, conditioner, max_frames)
            for r in records]


def items_from_clips(clips, codebooks, conditioner, max_frames=None):
    """Same as :func:`build_items` from in-memory clips."""
    return [make_item(c.record, (c.vocal, c.acc, c.mixed), codebooks, conditioner, max_frames)
            for c in clips]


def select_items(items, thresholds):
    """Items whose records pass ``thresholds``; ``None`` keeps everything."""
    if thresholds is None:
        kept = list(items)
    else:
        ids = {r.id for r in filter_corpus([it.record for it in items], thresholds)[0]}
        kept = [it for it in items if it.id in ids]
    if not kept:
        raise DataError("no training clips left after filtering")
    return kept
