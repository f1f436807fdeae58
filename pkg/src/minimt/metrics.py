"""Translation quality and effort metrics: corpus BLEU, TER, KSMR."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path

from .errors import EmptyInputError


def _tokens(text) -> list[str]:
    return text.split() if isinstance(text, str) else list(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references) -> float:
    """Corpus BLEU-4 with clipped precisions and brevity penalty, no smoothing.

    A zero precision at any n-gram order yields 0. Single reference per
    hypothesis; inputs are whitespace-tokenized strings or token lists.
    """
    if len(hypotheses) != len(references):
        raise EmptyInputError("hypothesis/reference counts differ")
    if not hypotheses:
        raise EmptyInputError("empty corpus")
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = _tokens(hyp)
        r = _tokens(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            hc = _ngrams(h, n)
            rc = _ngrams(r, n)
            totals[n - 1] += sum(hc.values())
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    if any(t == 0 for t in totals) or any(m == 0 for m in matches):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matches, totals)) / 4.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(1, hyp_len))
    return 100.0 * bp * math.exp(log_prec)


def levenshtein(a: list[str], b: list[str]) -> int:
    """Word-level edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def wer(hypothesis, reference) -> float:
    h, r = _tokens(hypothesis), _tokens(reference)
    if not r:
        raise EmptyInputError("empty reference")
    return 100.0 * levenshtein(h, r) / len(r)


def _best_shift(hyp: list[str], ref: list[str], base: int):
    """The block shift with the largest edit-distance reduction.

    Ties go to the leftmost start, then the longest block, then the
    smallest destination. Returns (reduction, shifted sequence) or None.
    """
    n = len(hyp)
    best = None  # (reduction, start, -length, dest, candidate)
    for start in range(n):
        for length in range(1, n - start + 1):
            block = hyp[start : start + length]
            rest = hyp[:start] + hyp[start + length :]
            for dest in range(len(rest) + 1):
                if dest == start:
                    continue
                cand = rest[:dest] + block + rest[dest:]
                red = base - levenshtein(cand, ref)
                if red < 1:
                    continue
                key = (-red, start, -length, dest)
                if best is None or key < best[0]:
                    best = (key, cand)
    if best is None:
        return None
    return -best[0][0], best[1]


def _exact_edits(hyp: list[str], ref: list[str]) -> tuple[int, int]:
    """Minimal edits via search over shift-reachable token arrangements.

    Block shifts permute the hypothesis without changing its token multiset,
    so the reachable states are arrangements of the tokens; branch-and-bound
    over them is exact and cheap for short sequences.
    """
    from collections import deque

    start = tuple(hyp)
    best = levenshtein(hyp, ref)
    best_shifts = 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        seq = queue.popleft()
        d = dist[seq]
        total = d + levenshtein(list(seq), ref)
        if total < best:
            best, best_shifts = total, d
        if d + 1 >= best:
            continue
        n = len(seq)
        for s in range(n):
            for length in range(1, n - s + 1):
                block = seq[s : s + length]
                rest = seq[:s] + seq[s + length :]
                for dest in range(len(rest) + 1):
                    if dest == s:
                        continue
                    cand = rest[:dest] + block + rest[dest:]
                    if cand not in dist or dist[cand] > d + 1:
                        dist[cand] = d + 1
                        queue.append(cand)
    return best, best_shifts


EXACT_TER_LIMIT = 6


def ter_edits(hypothesis, reference) -> tuple[int, int]:
    """(total edits, shift count) of the shift + edit-distance procedure.

    Sequences up to EXACT_TER_LIMIT hypothesis tokens get the exact minimum
    (greedy shift selection can overshoot by one on rare short inputs);
    longer ones use the standard greedy search, largest reduction first.
    """
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    if not ref:
        raise EmptyInputError("empty reference")
    if len(hyp) <= EXACT_TER_LIMIT:
        return _exact_edits(hyp, ref)
    shifts = 0
    base = levenshtein(hyp, ref)
    while True:
        found = _best_shift(hyp, ref, base)
        if found is None:
            break
        red, hyp = found
        base -= red
        shifts += 1
    return base + shifts, shifts


def ter(hypothesis, reference) -> float:
    """Translation edit rate [%]: edits (incl. block shifts) over |reference|."""
    edits, _ = ter_edits(hypothesis, reference)
    return 100.0 * edits / len(_tokens(reference))


def corpus_ter(hypotheses, references) -> float:
    if len(hypotheses) != len(references):
        raise EmptyInputError("hypothesis/reference counts differ")
    if not hypotheses:
        raise EmptyInputError("empty corpus")
    total_edits = 0
    total_ref = 0
    for hyp, ref in zip(hypotheses, references):
        edits, _ = ter_edits(hyp, ref)
        total_edits += edits
        total_ref += len(_tokens(ref))
    return 100.0 * total_edits / total_ref


def ksmr(reports: list[dict]) -> float:
    """Keystroke mouse-action ratio [%] over per-sentence effort reports.

    Each report carries `keystrokes`, `mouse_actions` and `ref_chars`.
    """
    if not reports:
        raise EmptyInputError("no effort reports")
    actions = sum(r["keystrokes"] + r["mouse_actions"] for r in reports)
    chars = sum(r["ref_chars"] for r in reports)
    if chars == 0:
        raise EmptyInputError("zero reference characters")
    return 100.0 * actions / chars


def write_report(path: str | Path, values: dict[str, float]) -> str:
    """Plain-text metric lines plus a JSON sidecar next to `path`."""
    lines = ["%s = %.2f" % (k.upper(), v) for k, v in values.items()]
    text = "\n".join(lines) + "\n"
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(values, indent=2) + "\n", encoding="utf-8"
    )
    return text
