"""Synthetic songs whose vocal stem encodes its lyrics in marker tones.

Every note of the vocal line is a pitched tone (fundamental plus second
harmonic, all below 900 Hz) overlaid with three marker tones above 1 kHz:
one for the syllable's vowel, one for its consonant, and one more when the
syllable ends a word. Accompaniment stays below 900 Hz as well, so the
markers survive mixing and the lyrics can be read back from either the
vocal stem or the mix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec.audio import Waveform

SAMPLE_RATE = 16000
CONSONANTS = "bdklmnprst"
VOWELS = "aeiou"
VOWEL_HZ = {v: 1000.0 + 200.0 * i for i, v in enumerate(VOWELS)}
CONSONANT_HZ = {c: 2000.0 + 200.0 * i for i, c in enumerate(CONSONANTS)}
WORD_END_HZ = 4200.0
MARKER_LEVEL = 0.25
NOTE_GAP = 0.03  # seconds of silence closing every note
FADE = 0.004

GENRES = ("pop", "rock", "folk", "jazz", "electronic")
MOODS = ("happy", "sad", "calm", "energetic", "dark")
TEMPO_CLASSES = ("slow", "medium", "fast")
GENDERS = ("female", "male")
TEMPO_BPM = {"slow": 76.0, "medium": 108.0, "fast": 144.0}
PITCH_RANGE = {"female": (220.0, 440.0), "male": (110.0, 220.0)}


@dataclass
class Note:
    syllable: str
    pitch: float
    beats: float
    word_end: bool = False
    rest_after: float = 0.0  # beats of silence after the note


@dataclass
class SongSpec:
    lyrics: str
    melody: list
    chords: list  # root frequencies, one per bar of four beats
    genre: str
    mood: str
    tempo_class: str
    gender: str
    harmonics: tuple = (1.0, 0.35)
    vocal_level: float = 0.2  # RMS over the sounding part of the stem
    acc_level: float = 0.2

    def __post_init__(self):
        syllables = [n.syllable for n in self.melody]
        if "".join(self.lyrics.split()) != "".join(syllables):
            raise ValueError("lyric syllables do not match the melody notes")

    @property
    def tags(self):
        return {"genre": self.genre, "mood": self.mood, "tempo": self.tempo_class,
                "gender": self.gender}

    @property
    def beat(self):
        return 60.0 / TEMPO_BPM[self.tempo_class]

    @property
    def duration(self):
        return sum(n.beats + n.rest_after for n in self.melody) * self.beat

    def note_times(self):
        """(onset, offset) in seconds of each sounding note."""
        t, out = 0.0, []
        for n in self.melody:
            out.append((t, t + n.beats * self.beat - NOTE_GAP))
            t += (n.beats + n.rest_after) * self.beat
        return out

    def phrase_spans(self):
        """(onset, offset) seconds of each run of notes between rests."""
        spans, start = [], None
        for n, (on, off) in zip(self.melody, self.note_times()):
            start = on if start is None else start
            if n.rest_after > 0:
                spans.append((start, off))
                start = None
        if start is not None:
            spans.append((start, self.note_times()[-1][1]))
        return spans


def syllable_inventory():
    return [c + v for c in CONSONANTS for v in VOWELS]


def random_song_spec(rng, phrases=(2, 4), words_per_phrase=(2, 4), syllables_per_word=(1, 3),
                     levels=((0.12, 0.3), (0.12, 0.3)), tags=None):
    """Draw a song; ``levels`` are log-uniform RMS ranges (vocal, acc)."""
    tags = dict(tags or {})
    genre = tags.get("genre") or str(rng.choice(GENRES))
    mood = tags.get("mood") or str(rng.choice(MOODS))
    tempo = tags.get("tempo") or str(rng.choice(TEMPO_CLASSES))
    gender = tags.get("gender") or str(rng.choice(GENDERS))
    lo, hi = PITCH_RANGE[gender]
    scale = lo * 2.0 ** (np.array([0, 2, 4, 5, 7, 9, 11, 12]) / 12.0)
    scale = scale[scale <= hi]
    melody, words = [], []
    n_phrases = int(rng.integers(phrases[0], phrases[1] + 1))
    for p in range(n_phrases):
        n_words = int(rng.integers(words_per_phrase[0], words_per_phrase[1] + 1))
        for w in range(n_words):
            n_syl = int(rng.integers(syllables_per_word[0], syllables_per_word[1] + 1))
            word = []
            for s in range(n_syl):
                syl = CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
                word.append(syl)
                melody.append(Note(syl, float(rng.choice(scale)), float(rng.choice([0.5, 1.0])),
                                   word_end=s == n_syl - 1))
            words.append("".join(word))
        if p < n_phrases - 1:
            melody[-1].rest_after = float(rng.choice([2.0, 3.0]))
    total_beats = sum(n.beats + n.rest_after for n in melody)
    roots = 110.0 * 2.0 ** (rng.integers(0, 12, size=int(np.ceil(total_beats / 4))) / 12.0)
    amp = [float(np.exp(rng.uniform(np.log(a), np.log(b)))) for a, b in levels]
    return SongSpec(" ".join(words), melody, [float(r) for r in roots], genre, mood, tempo,
                    gender, vocal_level=amp[0], acc_level=amp[1])


def _envelope(n, sample_rate):
    env = np.ones(n)
    f = min(int(FADE * sample_rate), n // 2)
    if f:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, f))
        env[:f] = ramp
        env[-f:] = ramp[::-1]
    return env


def _to_level(x, rms):
    sounding = x[x != 0]
    if sounding.size == 0:
        return x
    return x * (rms / np.sqrt(np.mean(sounding ** 2)))


def synth_song(spec: SongSpec, rng=None, sample_rate=SAMPLE_RATE):
    """Render (vocal, accompaniment, mixed); the mix is clipped to [-1, 1].

    ``rng`` only draws oscillator phases.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = int(round(spec.duration * sample_rate))
    vocal = np.zeros(n)
    for note, (on, off) in zip(spec.melody, spec.note_times()):
        a, b = int(round(on * sample_rate)), min(n, int(round(off * sample_rate)))
        t = np.arange(b - a) / sample_rate
        tone = sum(h * np.sin(2 * np.pi * (i + 1) * note.pitch * t + rng.uniform(0, 2 * np.pi))
                   for i, h in enumerate(spec.harmonics))
        tone = tone / sum(spec.harmonics)
        marks = [VOWEL_HZ[note.syllable[1]], CONSONANT_HZ[note.syllable[0]]]
        if note.word_end:
            marks.append(WORD_END_HZ)
        for f in marks:
            tone = tone + MARKER_LEVEL * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        vocal[a:b] = tone * _envelope(b - a, sample_rate)
    acc = np.zeros(n)
    bar = int(round(4 * spec.beat * sample_rate))
    beat = int(round(spec.beat * sample_rate))
    for i, root in enumerate(spec.chords):
        a = i * bar
        if a >= n:
            break
        b = min(n, a + bar)
        t = np.arange(b - a) / sample_rate
        chord = sum(np.sin(2 * np.pi * root * r * t) + 0.3 * np.sin(4 * np.pi * root * r * t)
                    for r in (1.0, 1.25, 1.5)) / 2.6
        pulse = np.exp(-1.2 * (np.arange(b - a) % beat) / beat)
        acc[a:b] = chord * pulse
    vocal = _to_level(vocal, spec.vocal_level)
    acc = _to_level(acc, spec.acc_level)
    mixed = np.clip(vocal + acc, -1.0, 1.0)
    return (Waveform(vocal, sample_rate), Waveform(acc, sample_rate),
            Waveform(mixed, sample_rate))


# -- oracle transcription ----------------------------------------------------
_HOP = 160  # 10 ms analysis frames keep every note gap visible


def _bin(freq, sample_rate):
    return int(round(freq * _HOP / sample_rate))


def oracle_transcribe(w: Waveform, min_frames=2, rel_threshold=0.1):
    """Read the syllables back from marker-band energy.

    Notes are runs of analysis frames whose strongest vowel marker exceeds a
    fraction of the clip's loud-frame level; each run yields the argmax
    vowel and consonant, and a word break when the word-end marker is
    present.
    """
    sr = w.sample_rate
    n = len(w.samples) // _HOP
    if n == 0:
        return ""
    frames = w.samples[:n * _HOP].reshape(n, _HOP) * np.hanning(_HOP)
    X = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    vow = X[:, [_bin(VOWEL_HZ[v], sr) for v in VOWELS]]
    con = X[:, [_bin(CONSONANT_HZ[c], sr) for c in CONSONANTS]]
    end = X[:, _bin(WORD_END_HZ, sr)]
    level = vow.max(axis=1)
    peak = np.quantile(level, 0.95) if level.size else 0.0
    if peak <= 1e-12:
        return ""
    active = level > rel_threshold * peak
    words, current = [], ""
    i = 0
    while i < n:
        if not active[i]:
            i += 1
            continue
        j = i
        while j < n and active[j]:
            j += 1
        if j - i >= min_frames:
            v = vow[i:j].sum(0)
            current += CONSONANTS[int(np.argmax(con[i:j].sum(0)))] + VOWELS[int(np.argmax(v))]
            if end[i:j].sum() > 0.25 * v.max():
                words.append(current)
                current = ""
        i = j
    if current:
        words.append(current)
    return " ".join(words)
