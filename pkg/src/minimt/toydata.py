"""Synthetic digit-sequence -> number-word corpora for demos and tests."""

from __future__ import annotations

import numpy as np

from .corpus import ParallelCorpus

DIGIT_WORDS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
}


def digit_pairs(n_pairs: int, min_len: int = 1, max_len: int = 6, seed: int = 0) -> list[tuple[str, str]]:
    """Unique random digit sequences paired with their spelled-out words."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    pairs: list[tuple[str, str]] = []
    while len(pairs) < n_pairs:
        length = int(rng.integers(min_len, max_len + 1))
        digits = [str(int(d)) for d in rng.integers(0, 10, size=length)]
        src = " ".join(digits)
        if src in seen:
            continue
        seen.add(src)
        pairs.append((src, " ".join(DIGIT_WORDS[d] for d in digits)))
    return pairs


def digit_splits(
    n_train: int = 100, n_dev: int = 20, n_test: int = 100, min_len: int = 1, max_len: int = 6, seed: int = 0
) -> tuple[ParallelCorpus, ParallelCorpus, ParallelCorpus]:
    """Disjoint train/dev/test splits of the digit translation task."""
    pairs = digit_pairs(n_train + n_dev + n_test, min_len, max_len, seed)
    return (
        ParallelCorpus(pairs[:n_train], "train"),
        ParallelCorpus(pairs[n_train : n_train + n_dev], "dev"),
        ParallelCorpus(pairs[n_train + n_dev :], "test"),
    )
