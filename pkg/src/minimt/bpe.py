"""Byte-pair encoding: merge learning, subword segmentation and undo.

Continuation is marked with a suffix on every non-final piece of a word
("low@@ est"), the common merges-file convention, so merge tables learned
elsewhere can be loaded as-is.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_MARKER = "@@"


@dataclass
class BpeModel:
    """An ordered merge list; position in the list is the merge priority."""

    merges: list[tuple[str, str]]
    marker: str = DEFAULT_MARKER
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair")
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    def segment_word(self, word: str) -> list[str]:
        """Split one word into subword pieces, marker on all but the last."""
        if not word:
            return []
        symbols = list(word)
        while len(symbols) > 1:
            pairs = [(symbols[i], symbols[i + 1]) for i in range(len(symbols) - 1)]
            ranked = [(self._ranks[p], p) for p in set(pairs) if p in self._ranks]
            if not ranked:
                break
            _, best = min(ranked)
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return [s + self.marker for s in symbols[:-1]] + symbols[-1:]

    def segment_tokens(self, words: list[str]) -> list[str]:
        pieces: list[str] = []
        for w in words:
            pieces.extend(self.segment_word(w))
        return pieces

    def join_pieces(self, pieces: list[str]) -> list[str]:
        """Undo segmentation: glue marker-carrying pieces to their successor."""
        words: list[str] = []
        buf = ""
        for piece in pieces:
            if piece.endswith(self.marker):
                buf += piece[: -len(self.marker)]
            else:
                words.append(buf + piece)
                buf = ""
        if buf:
            words.append(buf)  # dangling continuation, keep the characters
        return words

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for a, b in self.merges:
                fh.write("%s %s\n" % (a, b))

    @classmethod
    def load(cls, path: str | Path, marker: str = DEFAULT_MARKER) -> "BpeModel":
        merges = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            a, b = line.split(" ")
            merges.append((a, b))
        return cls(merges, marker=marker)


def word_frequencies(tokenized: list[list[str]]) -> dict[str, int]:
    counts: Counter[str] = Counter()
    for sent in tokenized:
        counts.update(sent)
    return dict(counts)


def learn_bpe(word_freqs: dict[str, int], num_merges: int, marker: str = DEFAULT_MARKER) -> BpeModel:
    """Learn merges greedily by pair frequency, ties broken lexicographically.

    Performs exactly ``min(num_merges, available)`` merges; a pair only needs
    to occur once to remain mergeable.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    words = {w: (list(w), int(n)) for w, n in word_freqs.items() if w}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        counts: Counter[tuple[str, str]] = Counter()
        for symbols, n in words.values():
            for i in range(len(symbols) - 1):
                counts[(symbols[i], symbols[i + 1])] += n
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p))
        merges.append(best)
        for w, (symbols, n) in words.items():
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            words[w] = (merged, n)
    return BpeModel(merges, marker=marker)
