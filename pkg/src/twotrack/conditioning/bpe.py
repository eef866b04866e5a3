"""Character-level byte-pair encoding for lyric text."""

from __future__ import annotations

import json
import re
from collections import Counter
from pathlib import Path

from ..errors import ConfigError, ParseError, VocabularyError

UNK = "<unk>"
# a word keeps its single leading space, runs of spaces stay together
_PRETOKEN = re.compile(r" ?[^ ]+| +")
_HEADER = "twotrack-bpe 1"


def pretokenize(text):
    return _PRETOKEN.findall(text)


class LyricTokenizer:
    """Vocabulary plus ordered merge list. Id 0 is reserved for ``<unk>``."""

    def __init__(self, symbols, merges):
        self.symbols = [UNK] + [s for s in symbols if s != UNK]
        self.merges = [tuple(m) for m in merges]
        self.ids = {s: i for i, s in enumerate(self.symbols)}
        self.ranks = {m: r for r, m in enumerate(self.merges)}
        self._cache = {}

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return (isinstance(other, LyricTokenizer) and self.symbols == other.symbols
                and self.merges == other.merges)

    def _split(self, word):
        if word in self._cache:
            return self._cache[word]
        parts = list(word)
        while len(parts) > 1:
            pairs = [(self.ranks.get((a, b), None), i)
                     for i, (a, b) in enumerate(zip(parts, parts[1:]))]
            ranked = [p for p in pairs if p[0] is not None]
            if not ranked:
                break
            best = min(ranked)[0]
            a, b = self.merges[best]
            out, i = [], 0
            while i < len(parts):
                if i + 1 < len(parts) and parts[i] == a and parts[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            parts = out
        self._cache[word] = parts
        return parts

    def tokenize(self, text):
        ids = []
        for word in pretokenize(text):
            ids.extend(self.ids.get(p, 0) for p in self._split(word))
        return ids

    def detokenize(self, ids):
        out = []
        for i in ids:
            if not 0 <= int(i) < len(self.symbols):
                raise VocabularyError(f"token id {i} outside vocabulary of {len(self.symbols)}")
            out.append(self.symbols[int(i)])
        return "".join(out)

    def dumps(self):
        lines = [_HEADER, f"vocab {len(self.symbols) - 1}"]
        lines += [json.dumps(s) for s in self.symbols[1:]]
        lines.append(f"merges {len(self.merges)}")
        lines += [json.dumps(list(m)) for m in self.merges]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        if not lines or lines[0] != _HEADER:
            raise ParseError("not a tokenizer file", line=1)
        try:
            n_vocab = int(lines[1].split()[1])
            symbols = [json.loads(line) for line in lines[2:2 + n_vocab]]
            at = 2 + n_vocab
            n_merges = int(lines[at].split()[1])
            merges = [tuple(json.loads(line)) for line in lines[at + 1:at + 1 + n_merges]]
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed tokenizer file: {exc}") from exc
        if len(merges) != n_merges:
            raise ParseError("tokenizer file ends before its merge list")
        return cls(symbols, merges)

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def train_bpe(corpus, vocab_size=512, seed=0):
    """Learn merges until ``vocab_size`` symbols exist (characters plus merges).

    Ties between equally frequent pairs go to the lexicographically smallest
    pair, so the result does not depend on ``seed``; it is accepted for
    interface symmetry with the other trainers. Training stops early when no
    adjacent pair is left to merge.
    """
    del seed
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot train a tokenizer on an empty corpus")
    words = Counter(w for text in corpus for w in pretokenize(text))
    chars = sorted({c for w in words for c in w})
    if vocab_size < len(chars):
        raise ConfigError(f"vocab_size {vocab_size} is below the {len(chars)} distinct characters")
    symbols = list(chars)
    seen = set(symbols)
    merges = []
    splits = {w: list(w) for w in words}
    while len(symbols) < vocab_size:
        pairs = Counter()
        for w, n in words.items():
            parts = splits[w]
            for pair in zip(parts, parts[1:]):
                pairs[pair] += n
        if not pairs:
            break
        top = max(pairs.values())
        a, b = min(p for p, n in pairs.items() if n == top)
        merges.append((a, b))
        if a + b not in seen:
            seen.add(a + b)
            symbols.append(a + b)
        for w, parts in splits.items():
            if len(parts) < 2:
                continue
            out, i = [], 0
            while i < len(parts):
                if i + 1 < len(parts) and parts[i] == a and parts[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            splits[w] = out
    return LyricTokenizer(symbols, merges)
