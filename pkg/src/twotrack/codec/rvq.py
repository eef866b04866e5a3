"""Toy residual vector quantisation codec.

Audio is cut into non-overlapping frames; each frame is mean-removed and
scaled to unit RMS, and the per-frame (mean, scale) pair travels as sidecar
data next to the codes. Stage ``n`` of the codebook quantises the residual
left by stages ``1..n-1``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CodecError, InputError, ParseError, TrainingError
from .audio import SAMPLE_RATE, Waveform

FRAME_RATE = 50
DESK_NUM_CODEBOOKS = 4
DESK_CODEBOOK_SIZE = 64
FULL_NUM_CODEBOOKS = 8
FULL_CODEBOOK_SIZE = 1024

_SILENCE = 1e-8


@dataclass
class FrameFeatures:
    features: np.ndarray  # (T, frame_len)
    scales: np.ndarray  # (T,)
    means: np.ndarray  # (T,)


@dataclass
class TokenGrid:
    """An ``N_q x T`` matrix of codes in ``[0, K)``."""

    codes: np.ndarray
    codebook_size: int
    frame_rate: int = FRAME_RATE
    scales: np.ndarray | None = None
    means: np.ndarray | None = None

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2:
            raise CodecError(f"token grid must be 2-D, got shape {self.codes.shape}")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= self.codebook_size):
            raise CodecError(f"codes outside [0, {self.codebook_size})")

    @property
    def num_codebooks(self) -> int:
        return self.codes.shape[0]

    @property
    def num_frames(self) -> int:
        return self.codes.shape[1]

    def __eq__(self, other):
        return (isinstance(other, TokenGrid) and self.codebook_size == other.codebook_size
                and np.array_equal(self.codes, other.codes))


@dataclass
class CodebookSet:
    stages: np.ndarray  # (N_q, K, dim)
    frame_rate: int = FRAME_RATE
    sample_rate: int = SAMPLE_RATE
    default_scale: float = 0.1
    train_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.stages = np.asarray(self.stages, dtype=np.float64)
        if self.stages.ndim != 3 or self.stages.shape[0] < 1 or self.stages.shape[1] < 2:
            raise CodecError(f"codebook stages must be (N_q>=1, K>=2, dim), got {self.stages.shape}")

    @property
    def num_codebooks(self) -> int:
        return self.stages.shape[0]

    @property
    def codebook_size(self) -> int:
        return self.stages.shape[1]

    @property
    def dim(self) -> int:
        return self.stages.shape[2]


def frame_length(sample_rate, frame_rate):
    if sample_rate % frame_rate:
        raise InputError(f"frame rate {frame_rate} does not divide sample rate {sample_rate}")
    return sample_rate // frame_rate


def frame_features(waveform: Waveform, frame_rate=FRAME_RATE) -> FrameFeatures:
    n = frame_length(waveform.sample_rate, frame_rate)
    count = len(waveform) // n
    if count == 0:
        raise InputError(f"waveform of {len(waveform)} samples is shorter than one {n}-sample frame")
    frames = waveform.samples[: count * n].reshape(count, n)
    means = frames.mean(axis=1)
    centred = frames - means[:, None]
    scales = np.sqrt((centred ** 2).mean(axis=1))
    silent = scales < _SILENCE
    scales[silent] = 0.0
    features = np.where(silent[:, None], 0.0, centred / np.where(silent, 1.0, scales)[:, None])
    return FrameFeatures(features, scales, means)


def _sq_dist(x, c):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def nearest(x, c):
    """Index of the nearest centroid per row; near-ties go to the lowest index."""
    d = _sq_dist(x, c)
    best = d.min(axis=1, keepdims=True)
    tol = 1e-9 * np.maximum((x * x).sum(1, keepdims=True), 1e-12)
    return np.argmax(d <= best + tol, axis=1)


def kmeans(data, k, iterations, rng, fixed=None):
    """Lloyd's algorithm with k-means++ seeding.

    ``fixed`` centroids take part in assignment but never move; only the
    ``k`` free centroids are returned. Empty clusters are re-seeded at the
    worst-fit points.
    """
    n = data.shape[0]
    fixed = np.zeros((0, data.shape[1])) if fixed is None else np.asarray(fixed, dtype=float)
    nf = fixed.shape[0]
    centroids = np.empty((k, data.shape[1]))
    if nf:
        closest = _sq_dist(data, fixed).min(axis=1)
        start = 0
    else:
        centroids[0] = data[rng.integers(n)]
        closest = _sq_dist(data, centroids[:1])[:, 0]
        start = 1
    for j in range(start, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total) if total > 0 else rng.integers(n)
        centroids[j] = data[idx]
        closest = np.minimum(closest, _sq_dist(data, centroids[j:j + 1])[:, 0])
    for _ in range(iterations):
        allc = np.vstack([fixed, centroids])
        assign = nearest(data, allc)
        fit = ((data - allc[assign]) ** 2).sum(1)
        counts = np.bincount(assign, minlength=nf + k)[nf:]
        sums = np.zeros_like(centroids)
        free = assign >= nf
        np.add.at(sums, assign[free] - nf, data[free])
        worst = np.argsort(-fit, kind="stable")
        w = 0
        for j in range(k):
            if counts[j]:
                centroids[j] = sums[j] / counts[j]
            else:
                centroids[j] = data[worst[w]]
                w += 1
    return centroids


def quantize(features, stages, n_stages=None):
    """Greedy residual quantisation; ties resolve to the lowest index.

    Returns ``(codes (N_q, T), residual energies (N_q + 1, T))`` where row 0
    of the energies is the input energy.
    """
    n_stages = stages.shape[0] if n_stages is None else n_stages
    residual = np.array(features, dtype=np.float64)
    codes = np.zeros((n_stages, residual.shape[0]), dtype=np.int64)
    energy = np.zeros((n_stages + 1, residual.shape[0]))
    energy[0] = (residual ** 2).sum(1)
    for s in range(n_stages):
        idx = nearest(residual, stages[s])
        codes[s] = idx
        residual = residual - stages[s][idx]
        energy[s + 1] = (residual ** 2).sum(1)
    return codes, energy


def train_rvq(frames, num_codebooks=DESK_NUM_CODEBOOKS, codebook_size=DESK_CODEBOOK_SIZE,
              iterations=20, seed=0, null_code=True, frame_rate=FRAME_RATE,
              sample_rate=SAMPLE_RATE, default_scale=None) -> CodebookSet:
    """Fit one k-means codebook per stage on the running residual.

    With ``null_code`` the first centroid of every stage is pinned at zero, so
    quantising can never raise a frame's residual energy.
    """
    data = np.asarray(frames.features if isinstance(frames, FrameFeatures) else frames,
                      dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < codebook_size:
        raise TrainingError(f"need at least K={codebook_size} frames, got {data.shape[0]}")
    rng = np.random.default_rng(seed)
    learned = codebook_size - 1 if null_code else codebook_size
    stages = np.zeros((num_codebooks, codebook_size, data.shape[1]))
    residual = data.copy()
    means = [float((residual ** 2).sum(1).mean())]
    for s in range(num_codebooks):
        fixed = np.zeros((1, data.shape[1])) if null_code else None
        stages[s, codebook_size - learned:] = kmeans(residual, learned, iterations, rng, fixed)
        idx = nearest(residual, stages[s])
        residual = residual - stages[s][idx]
        means.append(float((residual ** 2).sum(1).mean()))
    if default_scale is None:
        scales = frames.scales if isinstance(frames, FrameFeatures) else np.zeros(0)
        voiced = scales[scales > 0]
        default_scale = float(np.median(voiced)) if voiced.size else 0.1
    return CodebookSet(stages, frame_rate, sample_rate, default_scale, np.array(means))


def encode(waveform: Waveform, codebooks: CodebookSet) -> TokenGrid:
    n = frame_length(waveform.sample_rate, codebooks.frame_rate)
    if n != codebooks.dim:
        raise CodecError(f"frame length {n} does not match codebook dimension {codebooks.dim}")
    if waveform.sample_rate != codebooks.sample_rate:
        raise CodecError(f"sample rate {waveform.sample_rate} != codec rate {codebooks.sample_rate}")
    ff = frame_features(waveform, codebooks.frame_rate)
    codes, _ = quantize(ff.features, codebooks.stages)
    return TokenGrid(codes, codebooks.codebook_size, codebooks.frame_rate, ff.scales, ff.means)


def reconstruct_features(codes, codebooks: CodebookSet, n_stages=None):
    codes = np.asarray(codes)
    n_stages = codes.shape[0] if n_stages is None else n_stages
    out = np.zeros((codes.shape[1], codebooks.dim))
    for s in range(n_stages):
        out += codebooks.stages[s][codes[s]]
    return out


def decode(grid: TokenGrid, codebooks: CodebookSet, n_stages=None, scales=None) -> Waveform:
    """Sum the selected centroids per frame, restore sidecar scale and mean.

    Grids without a sidecar (e.g. generated ones) use the codec's default
    scale and zero mean.
    """
    codes = np.asarray(grid.codes)
    if codes.shape[0] > codebooks.num_codebooks:
        raise CodecError(f"grid has {codes.shape[0]} codebooks, codec {codebooks.num_codebooks}")
    if codes.size and (codes.min() < 0 or codes.max() >= codebooks.codebook_size):
        raise CodecError(f"code outside [0, {codebooks.codebook_size})")
    T = codes.shape[1]
    if T == 0:
        return Waveform(np.zeros(0), codebooks.sample_rate)
    feats = reconstruct_features(codes, codebooks, n_stages)
    if scales is None:
        scales = grid.scales if grid.scales is not None else np.full(T, codebooks.default_scale)
    means = grid.means if grid.means is not None else np.zeros(T)
    frames = feats * np.asarray(scales)[:, None] + np.asarray(means)[:, None]
    return Waveform(np.clip(frames.reshape(-1), -1.0, 1.0), codebooks.sample_rate)


_MAGIC = b"TTCB"
_VERSION = 1


def save_codebooks(path, cb: CodebookSet):
    n_q, k, dim = cb.stages.shape
    res = np.asarray(cb.train_residuals, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HIIIIIdI", _VERSION, n_q, k, dim, cb.frame_rate, cb.sample_rate,
                            cb.default_scale, res.size))
        f.write(res.tobytes())
        f.write(np.ascontiguousarray(cb.stages, dtype="<f8").tobytes())


def load_codebooks(path) -> CodebookSet:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != _MAGIC:
        raise ParseError(f"{path}: not a codebook file")
    head = struct.calcsize("<HIIIIIdI")
    version, n_q, k, dim, fr, sr, scale, nres = struct.unpack_from("<HIIIIIdI", buf, 4)
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported codebook version {version}")
    pos = 4 + head
    res = np.frombuffer(buf, dtype="<f8", count=nres, offset=pos)
    pos += 8 * nres
    expected = n_q * k * dim
    if len(buf) - pos != 8 * expected:
        raise ParseError(f"{path}: truncated codebook payload")
    stages = np.frombuffer(buf, dtype="<f8", count=expected, offset=pos).reshape(n_q, k, dim)
    return CodebookSet(stages.astype(np.float64), fr, sr, scale, res.copy())
