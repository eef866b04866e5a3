"""Clip records, the JSON-lines manifest, and threshold filtering."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import DataError, ParseError

METRIC_KEYS = ("edit_distance_rate", "energy_vocal", "energy_acc", "alignment_score")


@dataclass
class ClipRecord:
    id: str
    vocal_path: str
    acc_path: str
    mixed_path: str
    lyrics: str  # first transcript; what training conditions on
    caption: str
    oracle_lyrics: str = ""
    transcript_b: str = ""
    tags: dict = field(default_factory=dict)
    voice_ref: list = field(default_factory=lambda: [0, 0])  # sample span within the clip
    duration: float = 0.0
    song: int = 0
    metrics: dict = field(default_factory=dict)


_FIELDS = [f.name for f in fields(ClipRecord)]


def record_to_json(r: ClipRecord):
    return json.dumps(asdict(r), sort_keys=True, ensure_ascii=False)


def write_manifest(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [record_to_json(r) for r in sorted(records, key=lambda r: r.id)]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path):
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=no) from None
        if not isinstance(obj, dict):
            raise ParseError("record is not an object", line=no)
        for key in obj:
            if key not in _FIELDS:
                raise ParseError(f"unknown field {key!r}", line=no, field=key)
        for key in ("id", "vocal_path", "acc_path", "mixed_path", "lyrics", "caption"):
            if key not in obj:
                raise ParseError(f"missing field {key!r}", line=no, field=key)
        records.append(ClipRecord(**obj))
    return records


@dataclass(frozen=True)
class FilterThresholds:
    max_edit: float
    min_align: float
    min_energy: float


PRETRAIN_FILTER = FilterThresholds(max_edit=0.20, min_align=0.25, min_energy=1000.0)
HQ_FILTER = FilterThresholds(max_edit=0.05, min_align=0.25, min_energy=1000.0)


def passes(record, t: FilterThresholds):
    return not failures(record, t)


def failures(record, t: FilterThresholds):
    m = record.metrics
    missing = [k for k in METRIC_KEYS if k not in m]
    if missing:
        raise DataError(f"record {record.id} lacks metrics {missing}")
    out = []
    if not m["edit_distance_rate"] <= t.max_edit:
        out.append("edit_distance")
    if not m["alignment_score"] >= t.min_align:
        out.append("alignment")
    if not min(m["energy_vocal"], m["energy_acc"]) > t.min_energy:
        out.append("energy")
    return out


def filter_corpus(records, thresholds: FilterThresholds):
    """Returns (kept records, report); a record is counted under every criterion it fails."""
    kept = []
    report = {"total": 0, "kept": 0, "rejected": {"edit_distance": 0, "alignment": 0, "energy": 0},
              "thresholds": asdict(thresholds)}
    for r in records:
        report["total"] += 1
        fails = failures(r, thresholds)
        for f in fails:
            report["rejected"][f] += 1
        if not fails:
            kept.append(r)
    report["kept"] = len(kept)
    return kept, report
