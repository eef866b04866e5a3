import filecmp
from pathlib import Path

import numpy as np
import pytest

from twotrack.codec import Waveform


def tone_waveform(seconds, seed, sample_rate=16000):
    """Piecewise sinusoid mixtures: cheap in-distribution audio for codec tests."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    seg = sample_rate // 5
    for start in range(0, n, seg):
        sl = slice(start, min(n, start + seg))
        for _ in range(2):
            f = rng.uniform(100, 900)
            out[sl] += rng.uniform(0.05, 0.25) * np.sin(2 * np.pi * f * t[sl] + rng.uniform(0, 6.3))
    return Waveform(out, sample_rate)


@pytest.fixture
def tones():
    return tone_waveform


LYRICS = ["ba da la", "mi ra so la ti", "ko ko na"]
CAPTIONS = ["calm pop female", "upbeat rock male", "sad folk female"]


def tiny_system(kind, n_q=2, K=6, width=16, layers=2, seed=0, vocal_weight=0.1):
    """A decoder and conditioner small enough for finite differences."""
    from twotrack.conditioning import Conditioner, build_word_vocab, train_bpe
    from twotrack.model import Decoder, DecoderConfig

    rng = np.random.default_rng(seed)
    cfg = DecoderConfig(kind=kind, layers=layers, width=width, heads=2, num_codebooks=n_q,
                        codebook_size=K, vocal_weight=vocal_weight)
    tok = train_bpe(LYRICS, vocab_size=24)
    cond = Conditioner(rng, tok, build_word_vocab(CAPTIONS), width=width, lyric_width=8,
                       lyric_layers=1, text_width=8, text_layers=1, heads=2, voice_bands=4,
                       voice_layers=2)
    return Decoder(cfg, rng), cond


def random_training(kind, n_q, K, T, rng):
    from twotrack.codec import TokenGrid
    from twotrack.patterns import build_pattern

    grids = [TokenGrid(rng.integers(0, K, size=(n_q, T)), K) for _ in range(3)]
    return build_pattern(kind, mixed=grids[0], vocal=grids[1], acc=grids[2]).training()


def tiny_items(conditioner, n, n_q=2, K=6, frames=(3, 6), seed=0, metrics=None):
    """Random-code training items with real voice features and filterable records."""
    from twotrack.codec import TokenGrid
    from twotrack.pipeline import ClipRecord
    from twotrack.trainer import TrainItem

    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        T = int(rng.integers(frames[0], frames[1] + 1))
        grids = {name: TokenGrid(rng.integers(0, K, size=(n_q, T)), K)
                 for name in ("mixed", "vocal", "acc")}
        ref = Waveform(0.2 * np.sin(np.arange(48000) * rng.uniform(0.05, 0.3)))
        rec = ClipRecord(id=f"c{i:03d}", vocal_path="v.wav", acc_path="a.wav",
                         mixed_path="m.wav", lyrics=LYRICS[i % len(LYRICS)],
                         caption=CAPTIONS[i % len(CAPTIONS)],
                         metrics=dict(metrics or {"edit_distance_rate": 0.0,
                                                  "alignment_score": 1.0,
                                                  "energy_vocal": 5000.0, "energy_acc": 5000.0}))
        items.append(TrainItem(rec.id, grids, conditioner.tokenizer.tokenize(rec.lyrics),
                               rec.caption, conditioner.voice.features(ref), rec))
    return items


# -- tiny end-to-end experiment ----------------------------------------------
TINY = """
[experiment]
seed = 3
out = {root}
[corpus]
clips = 16
heldout = 3
[codec]
num_codebooks = 2
codebook_size = 16
iterations = 5
[decoder]
layers = 1
width = 32
heads = 2
[conditioner]
bpe_vocab = 40
lyric_width = 16
lyric_layers = 1
text_width = 16
heads = 2
voice_bands = 8
voice_layers = 2
[train]
steps = 4
batch_size = 2
checkpoint_every = 2
max_frames = 25
[generate]
max_frames = 20
[eval]
clips = 2
"""


def write_config(path, root, extra=""):
    path.write_text(TINY.format(root=root) + extra)
    return str(path)


def tree_equal(a, b):
    a, b = Path(a), Path(b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return files_a == files_b and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


# -- acceptance summary --------------------------------------------------------
_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = mark.args
        _CRITERIA.append((number, title, rep.passed, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    grouped = {}
    for number, title, passed, seconds in _CRITERIA:
        entry = grouped.setdefault(number, [title, 0, 0, 0.0])
        entry[1] += passed
        entry[2] += 1
        entry[3] += seconds
    terminalreporter.section("acceptance criteria")
    for number in sorted(grouped):
        title, ok, cases, seconds = grouped[number]
        verdict = "PASS" if ok == cases else "FAIL"
        detail = f"{ok}/{cases} cases, " if cases > 1 else ""
        terminalreporter.write_line(f"criterion {number:2d}  {verdict}  {title}  "
                                    f"({detail}{seconds:.1f} s)")
