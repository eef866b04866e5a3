"""Desk-scale evaluation reports and attention-map export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..codec.rvq import decode, encode
from ..errors import DataError
from ..numerics.tensor import no_grad

CLIP_FIELDS = ("id", "token_accuracy", "lyric_error", "lyric_follow", "snr_db", "pattern_valid")
MEAN_ROW = "mean"


def snr_db(reference, estimate):
    """Signal-to-noise ratio of ``estimate`` against ``reference`` in dB (capped at 120)."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)[:ref.size]
    est = np.pad(est, (0, ref.size - est.size))
    noise = float(((ref - est) ** 2).sum())
    signal = float((ref ** 2).sum())
    if signal == 0.0:
        return 0.0
    if noise == 0.0:
        return 120.0
    return min(120.0, 10.0 * math.log10(signal / noise))


def reconstruction_snr(waveform, codebooks):
    return snr_db(waveform.samples, decode(encode(waveform, codebooks), codebooks).samples)


@dataclass
class ClipScore:
    id: str
    token_accuracy: float
    lyric_error: float
    lyric_follow: float
    snr_db: float
    pattern_valid: bool


@dataclass
class EvalReport:
    clips: list

    def __post_init__(self):
        if not self.clips:
            raise DataError("an evaluation report needs at least one clip")

    @property
    def aggregate(self):
        """Mean of every numeric field over clips; validity becomes the valid share."""
        out = {}
        for f in CLIP_FIELDS[1:]:
            out[f] = float(np.mean([float(getattr(c, f)) for c in self.clips]))
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CLIP_FIELDS)
        for c in self.clips:
            row = asdict(c)
            w.writerow([row["id"]] + [_cell(row[f]) for f in CLIP_FIELDS[1:]])
        agg = self.aggregate
        w.writerow([MEAN_ROW] + [repr(agg[f]) for f in CLIP_FIELDS[1:]])
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text):
        """Returns ``(report, stored_means)``."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CLIP_FIELDS:
            raise DataError("not an evaluation report")
        clips, means = [], None
        for r in rows[1:]:
            if r[0] == MEAN_ROW:
                means = {f: float(x) for f, x in zip(CLIP_FIELDS[1:], r[1:])}
                continue
            clips.append(ClipScore(r[0], float(r[1]), float(r[2]), float(r[3]), float(r[4]),
                                   r[5] == "1"))
        return cls(clips), means


def _cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(float(v))


# -- attention ---------------------------------------------------------------
def attention_maps(decoder, sequence, cond):
    """Per-layer ``(self, cross)`` weights of one teacher-forced pass, heads first."""
    with no_grad():
        _, maps = decoder.forward(sequence.inputs, cond, return_attention=True)
    return [(np.asarray(s), np.asarray(c)) for s, c in maps]


def parity_masses(weights):
    """Mean attention mass on same-parity versus other-parity keys.

    ``weights`` is (heads, L, L) self-attention; the first query row is
    skipped because it can only see itself.
    """
    w = np.asarray(weights, dtype=np.float64)
    L = w.shape[-1]
    if L < 2:
        return 1.0, 0.0
    idx = np.arange(L)
    same = (idx[:, None] % 2) == (idx[None, :] % 2)
    rows = w[..., 1:, :]
    s = (rows * same[1:]).sum(-1).mean()
    return float(s), float(1.0 - s)


def write_attention(maps, out_dir):
    """One CSV per layer, head and kind of attention, plus ``parity.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for li, (self_w, cross_w) in enumerate(maps):
        for kind, w in (("self", self_w), ("cross", cross_w)):
            for h in range(w.shape[0]):
                path = out_dir / f"{kind}_layer{li}_head{h}.csv"
                np.savetxt(path, w[h], delimiter=",", fmt="%.8g")
                written.append(path)
    with open(out_dir / "parity.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["layer", "same_parity", "cross_parity"])
        for li, (self_w, _) in enumerate(maps):
            same, cross = parity_masses(self_w)
            wr.writerow([li, repr(same), repr(cross)])
    written.append(out_dir / "parity.csv")
    return written
