"""Token layouts for mixed and dual-track decoding, with exact inverses.

Every layout starts from per-track *delayed* grids: codebook ``k`` (0-based)
of a track is shifted right by ``k`` steps, so an ``N_q x T`` grid becomes
``N_q x T'`` with ``T' = T + N_q - 1``. Layouts then arrange the delayed
columns of one or two tracks into decoder steps. Each step holds one group
of ``N_q`` codes (mixed, interleaving) or two groups (parallel; group 0 is
always the accompaniment, group 1 the vocal).

Each codebook vocabulary reserves three ids past the ``K`` real codes:
``PAD = K``, ``BOS = K + 1``, ``EOS = K + 2``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec.rvq import TokenGrid
from .errors import AlignmentError, MalformedPatternError, ParseError


class PatternKind(enum.Enum):
    MIXED = "Mixed"
    MIXED_PRO = "MixedPro"
    PARALLEL_STD = "ParallelStd"
    PARALLEL_VA = "ParallelVA"
    PARALLEL_AV = "ParallelAV"
    INTERLEAVING_AV = "InterleavingAV"
    INTERLEAVING_VA = "InterleavingVA"

    @classmethod
    def from_name(cls, name):
        if isinstance(name, cls):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).lower():
                return kind
        raise ValueError(f"unknown pattern kind {name!r}; expected one of "
                         f"{[k.value for k in cls]}")

    @property
    def is_mixed(self):
        return self in (PatternKind.MIXED, PatternKind.MIXED_PRO)

    @property
    def is_parallel(self):
        return self.value.startswith("Parallel")

    @property
    def is_interleaving(self):
        return self.value.startswith("Interleaving")

    @property
    def is_dual(self):
        return not self.is_mixed

    @property
    def num_groups(self):
        """Code groups per decoder step (and embedding groups)."""
        return 2 if self.is_parallel else 1

    @property
    def tracks(self):
        if self.is_mixed:
            return ("mixed",)
        return ("acc", "vocal")

    @property
    def leader(self):
        """The track whose first codebook decides where generation ends."""
        if self.is_mixed:
            return "mixed"
        if self in (PatternKind.PARALLEL_VA, PatternKind.INTERLEAVING_VA):
            return "vocal"
        return "acc"


def specials(codebook_size):
    """``(PAD, BOS, EOS)`` ids for a codebook of ``K`` real codes."""
    return codebook_size, codebook_size + 1, codebook_size + 2


def delayed_length(num_frames, num_codebooks):
    return num_frames + num_codebooks - 1


def sequence_length(kind, num_frames, num_codebooks):
    """Number of content steps (no BOS/EOS) of a layout."""
    kind = PatternKind.from_name(kind)
    tp = delayed_length(num_frames, num_codebooks)
    if kind in (PatternKind.PARALLEL_AV, PatternKind.PARALLEL_VA):
        return tp + 1
    if kind.is_interleaving:
        return 2 * tp
    return tp


# -- codebook delay -----------------------------------------------------------
def _delay(codes, fill):
    n_q, T = codes.shape
    out = np.full((n_q, T + n_q - 1), fill, dtype=np.int64)
    for k in range(n_q):
        out[k, k:k + T] = codes[k]
    return out


def apply_delay(grid: TokenGrid) -> np.ndarray:
    """Shift codebook ``k`` right by ``k`` steps, filling vacated cells with PAD."""
    return _delay(grid.codes, specials(grid.codebook_size)[0])


def _real_mask(n_q, width, num_frames):
    k = np.arange(n_q)[:, None]
    c = np.arange(width)[None, :]
    return (c >= k) & (c < k + num_frames)


def undo_delay(delayed, codebook_size, frame_rate=50, strict=True) -> TokenGrid:
    """Invert :func:`apply_delay`.

    In strict mode the PAD cells must match the delay geometry exactly. With
    ``strict=False`` the trailing columns may be cut short: only frames whose
    every codebook is present are recovered.
    """
    delayed = np.asarray(delayed, dtype=np.int64)
    if delayed.ndim != 2:
        raise MalformedPatternError(f"delayed grid must be 2-D, got {delayed.shape}")
    n_q, width = delayed.shape
    T = width - (n_q - 1)
    if T < 0:
        raise MalformedPatternError(f"{width} columns cannot hold a {n_q}-codebook delay")
    pad = specials(codebook_size)[0]
    real = _real_mask(n_q, width, T)
    if strict:
        check = np.ones_like(real)
    else:
        # leading triangle only; trailing cells may hold codes of a cut frame
        check = np.arange(width)[None, :] < np.arange(n_q)[:, None]
        check = check | real
    cells = delayed[check & real]
    if cells.size and (cells.min() < 0 or cells.max() >= codebook_size):
        raise MalformedPatternError("PAD or out-of-range id where a code is required")
    if np.any(delayed[check & ~real] != pad):
        raise MalformedPatternError("real code where the delay geometry requires PAD")
    codes = np.empty((n_q, T), dtype=np.int64)
    for k in range(n_q):
        codes[k] = delayed[k, k:k + T]
    return TokenGrid(codes, codebook_size, frame_rate)


# -- layouts -----------------------------------------------------------------
def _slots(kind, length):
    """Per group: (track name per step, delayed column per step)."""
    s = np.arange(length)
    if kind.is_mixed:
        return [(np.array(["mixed"] * length), s)]
    if kind.is_interleaving:
        first, second = ("acc", "vocal") if kind is PatternKind.INTERLEAVING_AV else ("vocal", "acc")
        names = np.where(s % 2 == 0, first, second)
        return [(names, s // 2)]
    acc_shift = 1 if kind is PatternKind.PARALLEL_VA else 0
    voc_shift = 1 if kind is PatternKind.PARALLEL_AV else 0
    return [(np.array(["acc"] * length), s - acc_shift),
            (np.array(["vocal"] * length), s - voc_shift)]


def slot(kind, step):
    """``[(group, track, column), ...]`` for one decoder step."""
    return [(g, str(names[step]), int(cols[step]))
            for g, (names, cols) in enumerate(_slots(kind, step + 1))]


def _layout_length(kind, columns):
    if kind in (PatternKind.PARALLEL_AV, PatternKind.PARALLEL_VA):
        return columns + 1
    if kind.is_interleaving:
        return 2 * columns
    return columns


def _assemble(kind, tracks, pad):
    """Arrange per-track delayed arrays (N_q x C) into (L, G, N_q) steps."""
    C = next(iter(tracks.values())).shape[1]
    n_q = next(iter(tracks.values())).shape[0]
    L = _layout_length(kind, C)
    out = np.full((L, kind.num_groups, n_q), pad, dtype=np.int64)
    for g, (names, cols) in enumerate(_slots(kind, L)):
        for name, arr in tracks.items():
            sel = (names == name) & (cols >= 0) & (cols < C)
            out[sel, g, :] = arr[:, cols[sel]].T
    return out


def _disassemble(kind, codes, pad):
    """Inverse of :func:`_assemble`; vacated groups must be all PAD."""
    L = codes.shape[0]
    if kind.is_interleaving:
        C = L // 2
    elif kind in (PatternKind.PARALLEL_AV, PatternKind.PARALLEL_VA):
        C = L - 1
    else:
        C = L
    if C < 0:
        raise MalformedPatternError("sequence too short for its layout")
    n_q = codes.shape[2]
    tracks = {name: np.full((n_q, C), -1, dtype=np.int64) for name in kind.tracks}
    for g, (names, cols) in enumerate(_slots(kind, L)):
        inside = (cols >= 0) & (cols < C)
        if np.any(codes[~inside, g, :] != pad):
            raise MalformedPatternError(f"group {g} holds codes in a step reserved for PAD")
        for name in tracks:
            sel = (names == name) & inside
            tracks[name][:, cols[sel]] = codes[sel, g, :].T
    return tracks


@dataclass
class PatternedSequence:
    kind: PatternKind
    codes: np.ndarray  # (L, G, N_q)
    codebook_size: int
    num_frames: int
    aux: np.ndarray | None = None  # MixedPro: delayed vocal grid, N_q x T'
    truncated: bool = False
    frame_rate: int = 50

    @property
    def num_codebooks(self):
        return self.codes.shape[2]

    @property
    def num_steps(self):
        return self.codes.shape[0]

    @property
    def pad(self):
        return specials(self.codebook_size)[0]

    def step_tracks(self):
        """Track name of group 0 at each step (useful for interleaving parity)."""
        names, _ = _slots(self.kind, self.num_steps)[0]
        return [str(n) for n in names]

    def training(self) -> "TrainingSequence":
        return training_sequence(self)

    def __eq__(self, other):
        if not isinstance(other, PatternedSequence):
            return NotImplemented
        same_aux = (self.aux is None and other.aux is None) or (
            self.aux is not None and other.aux is not None and np.array_equal(self.aux, other.aux))
        return (self.kind == other.kind and self.codebook_size == other.codebook_size
                and self.num_frames == other.num_frames and self.truncated == other.truncated
                and np.array_equal(self.codes, other.codes) and same_aux)


def _check_pair(a: TokenGrid, b: TokenGrid, what):
    if a.codes.shape != b.codes.shape or a.codebook_size != b.codebook_size:
        raise AlignmentError(f"{what}: grids of shape {a.codes.shape} and {b.codes.shape} "
                             "are not frame-aligned")


def build_mixed(mixed: TokenGrid, vocal: TokenGrid | None = None) -> PatternedSequence:
    """Mixed layout; passing a vocal grid makes it MixedPro with an aux target."""
    kind = PatternKind.MIXED if vocal is None else PatternKind.MIXED_PRO
    aux = None
    if vocal is not None:
        _check_pair(mixed, vocal, "MixedPro")
        aux = apply_delay(vocal)
    codes = _assemble(kind, {"mixed": apply_delay(mixed)}, specials(mixed.codebook_size)[0])
    return PatternedSequence(kind, codes, mixed.codebook_size, mixed.num_frames, aux,
                             frame_rate=mixed.frame_rate)


def build_parallel(vocal: TokenGrid, acc: TokenGrid, variant="Std") -> PatternedSequence:
    kind = PatternKind.from_name("Parallel" + str(variant).replace("-", ""))
    if not kind.is_parallel:
        raise ValueError(f"not a parallel variant: {variant}")
    _check_pair(vocal, acc, kind.value)
    codes = _assemble(kind, {"acc": apply_delay(acc), "vocal": apply_delay(vocal)},
                      specials(acc.codebook_size)[0])
    return PatternedSequence(kind, codes, acc.codebook_size, acc.num_frames,
                             frame_rate=acc.frame_rate)


def build_interleaving(vocal: TokenGrid, acc: TokenGrid, variant="AV") -> PatternedSequence:
    kind = PatternKind.from_name("Interleaving" + str(variant).replace("-", ""))
    if not kind.is_interleaving:
        raise ValueError(f"not an interleaving variant: {variant}")
    _check_pair(vocal, acc, kind.value)
    codes = _assemble(kind, {"acc": apply_delay(acc), "vocal": apply_delay(vocal)},
                      specials(acc.codebook_size)[0])
    return PatternedSequence(kind, codes, acc.codebook_size, acc.num_frames,
                             frame_rate=acc.frame_rate)


def build_pattern(kind, mixed=None, vocal=None, acc=None) -> PatternedSequence:
    """Dispatch on kind; each kind reads only the grids it needs."""
    kind = PatternKind.from_name(kind)
    if kind is PatternKind.MIXED:
        return build_mixed(mixed)
    if kind is PatternKind.MIXED_PRO:
        return build_mixed(mixed, vocal)
    variant = kind.value.removeprefix("Parallel").removeprefix("Interleaving")
    if kind.is_parallel:
        return build_parallel(vocal, acc, variant)
    return build_interleaving(vocal, acc, variant)


@dataclass
class Inverted:
    mixed: TokenGrid | None = None
    vocal: TokenGrid | None = None
    acc: TokenGrid | None = None
    truncated: bool = False


def invert_pattern(seq: PatternedSequence) -> Inverted:
    """Recover the source grid(s); raises on any geometry violation.

    An interleaving sequence cut to an odd number of steps loses its last
    incomplete frame; the result is then flagged ``truncated``.
    """
    kind = seq.kind
    codes = np.asarray(seq.codes, dtype=np.int64)
    if codes.ndim != 3 or codes.shape[1] != kind.num_groups:
        raise MalformedPatternError(f"{kind.value} needs {kind.num_groups} code group(s) per "
                                    f"step, got array of shape {codes.shape}")
    truncated = seq.truncated
    if kind.is_interleaving and codes.shape[0] % 2:
        codes = codes[:-1]
        truncated = True
    tracks = _disassemble(kind, codes, seq.pad)
    grids = {name: undo_delay(arr, seq.codebook_size, seq.frame_rate, strict=not truncated)
             for name, arr in tracks.items()}
    if truncated:
        T = min(g.num_frames for g in grids.values())
        grids = {n: TokenGrid(g.codes[:, :T], seq.codebook_size, seq.frame_rate)
                 for n, g in grids.items()}
    if kind.is_mixed:
        vocal = None
        if seq.aux is not None:
            vocal = undo_delay(seq.aux, seq.codebook_size, seq.frame_rate)
        return Inverted(mixed=grids["mixed"], vocal=vocal, truncated=truncated)
    return Inverted(vocal=grids["vocal"], acc=grids["acc"], truncated=truncated)


# -- teacher-forcing views ----------------------------------------------------
@dataclass
class TargetStream:
    name: str
    head_group: int
    targets: np.ndarray  # (L, N_q)


@dataclass
class TrainingSequence:
    kind: PatternKind
    inputs: np.ndarray  # (L, G, N_q), starts with a BOS step
    streams: list = field(default_factory=list)
    codebook_size: int = 0

    @property
    def length(self):
        return self.inputs.shape[0]


def _with_eos(delayed, num_frames, codebook_size):
    pad, _, eos = specials(codebook_size)
    n_q = delayed.shape[0]
    out = np.concatenate([delayed, np.full((n_q, 1), pad, dtype=np.int64)], axis=1)
    for k in range(n_q):
        out[k, num_frames + k] = eos
    return out


def training_sequence(seq: PatternedSequence) -> TrainingSequence:
    """Decoder inputs (BOS-shifted) and per-track target streams.

    Every track's delayed grid gets one extra column carrying each
    codebook's EOS at its delayed position, so targets run one step past the
    content and inputs are the targets shifted right behind a BOS step.
    """
    kind = seq.kind
    K = seq.codebook_size
    pad, bos, _ = specials(K)
    tracks = _disassemble(kind, seq.codes, pad)
    tracks = {n: _with_eos(a, seq.num_frames, K) for n, a in tracks.items()}
    targets = _assemble(kind, tracks, pad)
    L, G, n_q = targets.shape
    inputs = np.concatenate([np.full((1, G, n_q), bos, dtype=np.int64), targets[:-1]], axis=0)
    streams = []
    if kind.is_mixed:
        streams.append(TargetStream("mixed", 0, targets[:, 0]))
        if kind is PatternKind.MIXED_PRO:
            if seq.aux is None:
                raise MalformedPatternError("MixedPro sequence carries no auxiliary vocal grid")
            aux = _with_eos(seq.aux, seq.num_frames, K).T
            streams.append(TargetStream("vocal", 1, aux))
    elif kind.is_parallel:
        streams.append(TargetStream("acc", 0, targets[:, 0]))
        streams.append(TargetStream("vocal", 1, targets[:, 1]))
    else:
        names, _ = _slots(kind, L)[0]
        for name in ("acc", "vocal"):
            t = targets[:, 0].copy()
            t[names != name] = pad
            streams.append(TargetStream(name, 0, t))
    return TrainingSequence(kind, inputs, streams, K)


# -- serialisation ------------------------------------------------------------
_MAGIC = b"TTPS"
_VERSION = 1
_KINDS = list(PatternKind)


def serialize(seq: PatternedSequence) -> bytes:
    L, G, n_q = seq.codes.shape
    flags = (1 if seq.truncated else 0) | (2 if seq.aux is not None else 0)
    head = struct.pack("<HBHIIIBBH", _VERSION, _KINDS.index(seq.kind), n_q, seq.codebook_size,
                       seq.num_frames, L, G, flags, seq.frame_rate)
    body = np.ascontiguousarray(seq.codes, dtype="<i4").tobytes()
    if seq.aux is not None:
        body += struct.pack("<I", seq.aux.shape[1]) + np.ascontiguousarray(seq.aux, "<i4").tobytes()
    return _MAGIC + head + body


def deserialize(blob: bytes) -> PatternedSequence:
    if blob[:4] != _MAGIC:
        raise ParseError("not a patterned-sequence payload")
    fmt = "<HBHIIIBBH"
    version, kind_idx, n_q, K, T, L, G, flags, fr = struct.unpack_from(fmt, blob, 4)
    if version != _VERSION:
        raise ParseError(f"unsupported patterned-sequence version {version}")
    if kind_idx >= len(_KINDS):
        raise ParseError(f"unknown pattern kind tag {kind_idx}")
    pos = 4 + struct.calcsize(fmt)
    n = L * G * n_q
    if len(blob) < pos + 4 * n:
        raise ParseError("truncated patterned-sequence payload")
    codes = np.frombuffer(blob, "<i4", n, pos).reshape(L, G, n_q).astype(np.int64)
    pos += 4 * n
    aux = None
    if flags & 2:
        (width,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        aux = np.frombuffer(blob, "<i4", n_q * width, pos).reshape(n_q, width).astype(np.int64)
    return PatternedSequence(_KINDS[kind_idx], codes, K, T, aux, bool(flags & 1), fr)
