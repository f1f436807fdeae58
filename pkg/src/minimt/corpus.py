"""Text data pipeline: vocabularies, encoding, parallel corpora and batching.

Token ids 0..3 are reserved for the special tokens pad/unk/bos/eos, in that
order. Everything downstream (model, decoding, service) relies on these
fixed ids, which keeps saved checkpoints portable across vocabularies.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bpe import BpeModel
from .errors import EmptyInputError, VocabularyError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization. The single canonical pre-BPE tokenizer."""
    return text.split()


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocabulary:
    """Bijective token<->id map with the four specials at ids 0..3."""

    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if list(self.tokens[:4]) != list(SPECIAL_TOKENS):
            raise VocabularyError(
                "vocabulary must start with %s, got %s" % (SPECIAL_TOKENS, self.tokens[:4])
            )
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise VocabularyError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def token_to_id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def id_to_token(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise VocabularyError("token id %d out of range (|V|=%d)" % (idx, len(self.tokens)))
        return self.tokens[idx]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.tokens}, fh, ensure_ascii=False, indent=0)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict) or "tokens" not in data:
            raise VocabularyError("vocabulary file must be a JSON object with a 'tokens' list")
        return cls(list(data["tokens"]))


def build_vocabulary(
    tokenized: list[list[str]], max_size: int = 30000, min_freq: int = 1
) -> Vocabulary:
    """Build a vocabulary from tokenized sentences.

    Non-special tokens are ordered by descending corpus frequency, ties
    broken lexicographically. ``max_size`` caps the total size including
    the four specials; tokens seen fewer than ``min_freq`` times are
    dropped.
    """
    if max_size < 4:
        raise VocabularyError("max_size must be >= 4 to hold the special tokens")
    if min_freq < 1:
        raise VocabularyError("min_freq must be >= 1")
    if not tokenized:
        raise EmptyInputError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for sent in tokenized:
        counts.update(sent)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, n in ranked if n >= min_freq][: max_size - 4]
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


def encode(sentence: str, vocab: Vocabulary, bpe: BpeModel | None = None) -> list[int]:
    """Encode text to ``[bos] ++ ids ++ [eos]``; OOV tokens map to unk."""
    words = tokenize(sentence)
    if bpe is not None:
        pieces: list[str] = []
        for w in words:
            pieces.extend(bpe.segment_word(w))
        words = pieces
    return [BOS] + [vocab.token_to_id(w) for w in words] + [EOS]


def decode(ids: list[int], vocab: Vocabulary, bpe: BpeModel | None = None) -> str:
    """Invert :func:`encode`: strip specials, undo BPE continuation markers."""
    tokens = [vocab.id_to_token(i) for i in ids]
    tokens = [t for t, i in zip(tokens, ids) if i not in (PAD, BOS, EOS)]
    if bpe is not None:
        tokens = bpe.join_pieces(tokens)
    return detokenize(tokens)


@dataclass
class ParallelCorpus:
    """Aligned (source, target) sentence pairs for one data split."""

    pairs: list[tuple[str, str]]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @classmethod
    def from_files(cls, src_path: str | Path, trg_path: str | Path, split: str = "train") -> "ParallelCorpus":
        src_lines = Path(src_path).read_text(encoding="utf-8").splitlines()
        trg_lines = Path(trg_path).read_text(encoding="utf-8").splitlines()
        if len(src_lines) != len(trg_lines):
            raise VocabularyError(
                "unaligned corpus: %d source lines vs %d target lines" % (len(src_lines), len(trg_lines))
            )
        return cls(list(zip(src_lines, trg_lines)), split=split)


@dataclass
class Batch:
    """Padded id arrays plus 0/1 masks marking non-pad cells."""

    src: np.ndarray
    trg: np.ndarray
    src_mask: np.ndarray
    trg_mask: np.ndarray

    def __len__(self) -> int:
        return self.src.shape[0]


def _pad_block(rows: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        mask[i, : len(r)] = 1.0
    return ids, mask


def make_batches(
    corpus: ParallelCorpus,
    src_vocab: Vocabulary,
    trg_vocab: Vocabulary,
    batch_size: int,
    seed: int | None = None,
    src_bpe: BpeModel | None = None,
    trg_bpe: BpeModel | None = None,
) -> list[Batch]:
    """Encode and group a corpus into shuffled, padded batches.

    Every pair appears exactly once. With ``seed=None`` the corpus order is
    kept; otherwise the order is a deterministic permutation of that seed.
    """
    if batch_size < 1:
        raise VocabularyError("batch_size must be >= 1")
    if len(corpus) == 0:
        raise EmptyInputError("cannot batch an empty corpus")
    order = np.arange(len(corpus))
    if seed is not None:
        np.random.default_rng(seed).shuffle(order)
    encoded = [
        (encode(corpus.pairs[i][0], src_vocab, src_bpe), encode(corpus.pairs[i][1], trg_vocab, trg_bpe))
        for i in order
    ]
    batches = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start : start + batch_size]
        src, src_mask = _pad_block([c[0] for c in chunk])
        trg, trg_mask = _pad_block([c[1] for c in chunk])
        batches.append(Batch(src=src, trg=trg, src_mask=src_mask, trg_mask=trg_mask))
    return batches
