"""Beam search and friends: N-best decoding, ensembles, sentence scoring,
checkpoint averaging, statistical lexicons and unknown-word replacement.

One engine serves plain beam search, ensembles and character-prefix
constrained search (used by the interactive protocol): the optional
constraint restricts the candidate token set while a character prefix is
being consumed and can force out-of-vocabulary segments verbatim.
"""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .corpus import BOS, EOS, PAD, UNK, ParallelCorpus, Vocabulary, tokenize
from .errors import ConfigError, EmptyInputError, ShapeError


@dataclass
class BeamConfig:
    """Search tunables. The output length cap is ceil(a * src_len + b)."""

    beam_size: int = 6
    max_len_a: float = 1.5
    max_len_b: float = 10.0
    min_len: int = 0
    length_alpha: float = 0.0
    coverage_beta: float = 0.0

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.min_len < 0:
            raise ConfigError("min_len must be >= 0")
        if self.length_alpha < 0 or self.coverage_beta < 0:
            raise ConfigError("length_alpha and coverage_beta must be >= 0")

    def max_len_for(self, src_len: int) -> int:
        limit = math.ceil(self.max_len_a * src_len + self.max_len_b)
        if limit < max(1, self.min_len):
            raise ConfigError("max length %d below min length %d" % (limit, self.min_len))
        return limit


@dataclass
class Hypothesis:
    """A scored (partial or complete) translation with attention history."""

    ids: list[int]
    logprob: float
    alphas: list[np.ndarray]
    finished: bool
    score: float = 0.0
    forced: dict[int, str] = field(default_factory=dict)


def normalized_score(logprob: float, n_tokens: int, alpha_colsums: np.ndarray, config: BeamConfig) -> float:
    """Length-normalized, coverage-penalized hypothesis score."""
    lp = ((5.0 + max(1, n_tokens)) / 6.0) ** config.length_alpha
    score = logprob / lp
    if config.coverage_beta > 0:
        clipped = np.minimum(1.0, np.maximum(alpha_colsums, 1e-300))
        score += config.coverage_beta * float(np.log(clipped).sum())
    return float(score)


class CharPrefixConstraint:
    """Restricts beam candidates so the detokenized output starts with
    a given character prefix.

    While characters remain, only tokens whose surface contribution
    (joining space included) is consistent with the rest of the prefix are
    allowed. When no vocabulary token is consistent, the next segment of the
    prefix is forced through verbatim as an out-of-vocabulary token.
    """

    def __init__(self, prefix: str, vocab: Vocabulary, marker: str | None = None):
        self.prefix = prefix
        self.marker = marker
        surfaces = []
        for tid in range(4, len(vocab)):
            tok = vocab.tokens[tid]
            cont = marker is not None and tok.endswith(marker)
            surfaces.append((tid, tok[: -len(marker)] if cont else tok, cont))
        self._surfaces = surfaces

    def done(self, consumed: int) -> bool:
        return consumed >= len(self.prefix)

    def candidates(self, consumed: int, glue: bool) -> list[tuple[int, int, bool]]:
        """All (token id, chars consumed after, next-glues) consistent moves."""
        remaining = self.prefix[consumed:]
        out = []
        for tid, surface, cont in self._surfaces:
            if not surface:
                continue
            contribution = surface if glue else " " + surface
            if remaining.startswith(contribution):
                out.append((tid, consumed + len(contribution), cont))
            elif contribution.startswith(remaining):
                out.append((tid, len(self.prefix), cont))
        return out

    def forced_segment(self, consumed: int) -> tuple[str, int]:
        """Verbatim fallback: the prefix up to the next whitespace."""
        remaining = self.prefix[consumed:]
        seg = re.match(r"\s*\S*", remaining).group(0) or remaining
        return seg, consumed + len(seg)


@dataclass
class _Item:
    ids: tuple[int, ...]
    logprob: float
    alphas: list[np.ndarray]
    asum: np.ndarray
    hiddens: list[np.ndarray]
    consumed: int = 0
    glue: bool = True
    forced: dict[int, str] = field(default_factory=dict)


def _finish(item: _Item, config: BeamConfig) -> Hypothesis:
    return Hypothesis(
        ids=list(item.ids),
        logprob=item.logprob,
        alphas=item.alphas,
        finished=True,
        score=normalized_score(item.logprob, len(item.ids), item.asum, config),
        forced=item.forced,
    )


def beam_search(
    models,
    src_ids,
    config: BeamConfig | None = None,
    attention: str = "additive",
    nbest: int | None = None,
    constraint: CharPrefixConstraint | None = None,
    finish_after_prefix: bool = False,
) -> list[Hypothesis]:
    """N-best beam search over one source, optionally over a model ensemble.

    Hypotheses are ranked by the normalized score (applied at every pruning
    step as well); the ensemble combines per-model softmax outputs by
    arithmetic mean. Ties are broken lexicographically on token ids.
    """
    config = config or BeamConfig()
    if isinstance(models, M.ModelParams):
        models = [models]
    if not models:
        raise EmptyInputError("need at least one model")
    for m in models[1:]:
        if m.dims != models[0].dims:
            raise ShapeError("ensemble models must share dimensions/vocabularies")
    src = np.asarray(src_ids, dtype=np.int64)
    if src.size == 0:
        raise EmptyInputError("empty source")
    M.check_attention(attention)
    n_src = src.shape[0]
    max_len = config.max_len_for(n_src)
    encs = [M.encode_source(src, m) for m in models]
    inits = [M.init_decoder_state(h_enc, m).hidden for h_enc, m in zip(encs, models)]
    n_vocab = models[0].dims.trg_vocab

    start = _Item(
        ids=(), logprob=0.0, alphas=[], asum=np.zeros(n_src), hiddens=list(inits),
        consumed=0, glue=True,
    )
    open_items = [start]
    done: list[Hypothesis] = []
    step = 0
    while open_items:
        if step >= max_len:
            still = []
            for it in open_items:
                if constraint is None or constraint.done(it.consumed):
                    done.append(_finish(it, config))
                else:
                    still.append(it)  # must keep emitting the prefix
            open_items = still
            if not open_items:
                break
        prev = np.array([it.ids[-1] if it.ids else BOS for it in open_items])
        prob_sum = None
        alpha_sum = None
        new_hiddens = []
        for k, (h_enc, m) in enumerate(zip(encs, models)):
            hid = np.stack([it.hiddens[k] for it in open_items])
            hid_new, alpha, logits = M.decoder_step_batch(prev, hid, h_enc, m, attention)
            p = M.softmax_lastaxis(logits)
            prob_sum = p if prob_sum is None else prob_sum + p
            alpha_sum = alpha if alpha_sum is None else alpha_sum + alpha
            new_hiddens.append(hid_new)
        with np.errstate(divide="ignore"):
            logp = np.log(prob_sum / len(models))
        alpha = alpha_sum / len(models)

        candidates = []  # (score, new_ids, item_idx, tid, lp_new, consumed, glue, surface)
        for i, it in enumerate(open_items):
            asum_new = it.asum + alpha[i]
            n_new = len(it.ids) + 1
            lp_norm = ((5.0 + n_new) / 6.0) ** config.length_alpha
            cp = 0.0
            if config.coverage_beta > 0:
                clipped = np.minimum(1.0, np.maximum(asum_new, 1e-300))
                cp = config.coverage_beta * float(np.log(clipped).sum())
            consuming = constraint is not None and not constraint.done(it.consumed)
            if consuming:
                moves = constraint.candidates(it.consumed, it.glue)
                if not moves:
                    seg, consumed2 = constraint.forced_segment(it.consumed)
                    lp_new = it.logprob + logp[i, UNK]
                    score = lp_new / lp_norm + cp
                    candidates.append((score, it.ids + (UNK,), i, UNK, lp_new, consumed2, False, seg))
                else:
                    for tid, consumed2, glue2 in moves:
                        lp_new = it.logprob + logp[i, tid]
                        score = lp_new / lp_norm + cp
                        candidates.append((score, it.ids + (tid,), i, tid, lp_new, consumed2, glue2, None))
            elif constraint is not None and finish_after_prefix:
                lp_new = it.logprob + logp[i, EOS]
                score = lp_new / lp_norm + cp
                candidates.append((score, it.ids + (EOS,), i, EOS, lp_new, it.consumed, it.glue, None))
            else:
                for tid in range(n_vocab):
                    if tid in (PAD, BOS):
                        continue
                    if tid == EOS and len(it.ids) < config.min_len:
                        continue
                    lp_new = it.logprob + logp[i, tid]
                    score = lp_new / lp_norm + cp
                    candidates.append((score, it.ids + (tid,), i, tid, lp_new, it.consumed, it.glue, None))

        candidates.sort(key=lambda c: (-c[0], c[1]))
        next_open = []
        for score, new_ids, i, tid, lp_new, consumed2, glue2, surface in candidates[: config.beam_size]:
            it = open_items[i]
            forced = dict(it.forced)
            if surface is not None:
                forced[len(new_ids) - 1] = surface
            child = _Item(
                ids=new_ids,
                logprob=lp_new,
                alphas=it.alphas + [alpha[i]],
                asum=it.asum + alpha[i],
                hiddens=[h[i] for h in new_hiddens],
                consumed=consumed2,
                glue=glue2,
                forced=forced,
            )
            if tid == EOS:
                done.append(_finish(child, config))
            else:
                next_open.append(child)
        open_items = next_open
        step += 1

    done.sort(key=lambda h: (-h.score, tuple(h.ids)))
    return done[: nbest if nbest is not None else config.beam_size]


def greedy_decode(params: M.ModelParams, src_ids, config: BeamConfig | None = None, attention: str = "additive") -> Hypothesis:
    """Stepwise argmax decode; the reference point for beam size 1."""
    config = config or BeamConfig()
    src = np.asarray(src_ids, dtype=np.int64)
    if src.size == 0:
        raise EmptyInputError("empty source")
    max_len = config.max_len_for(src.shape[0])
    h_enc = M.encode_source(src, params)
    state = M.init_decoder_state(h_enc, params)
    ids: list[int] = []
    alphas: list[np.ndarray] = []
    logprob = 0.0
    prev = BOS
    for step in range(max_len):
        state, logits = M.decoder_step(prev, state, h_enc, params, attention)
        logp = M.log_softmax_lastaxis(logits)
        logp[PAD] = logp[BOS] = -np.inf
        if len(ids) < config.min_len:
            logp[EOS] = -np.inf
        tid = int(np.argmax(logp))
        ids.append(tid)
        alphas.append(state.attention)
        logprob += float(logp[tid])
        if tid == EOS:
            break
        prev = tid
    asum = np.sum(alphas, axis=0)
    return Hypothesis(ids=ids, logprob=logprob, alphas=alphas, finished=True,
                      score=normalized_score(logprob, len(ids), asum, config))


def score_sentence(params: M.ModelParams, src_ids, trg_ids, attention: str = "additive") -> float:
    """Teacher-forced log-probability of a full target given the source."""
    src = np.asarray(src_ids, dtype=np.int64)
    trg = np.asarray(trg_ids, dtype=np.int64)
    if src.size == 0 or trg.size < 2:
        raise EmptyInputError("need a non-empty source and a bos...eos target")
    h_enc = M.encode_source(src, params)
    state = M.init_decoder_state(h_enc, params)
    total = 0.0
    for t in range(trg.size - 1):
        state, logits = M.decoder_step(int(trg[t]), state, h_enc, params, attention)
        total += float(M.log_softmax_lastaxis(logits)[trg[t + 1]])
    return total


def average_checkpoints(checkpoints: list[M.ModelParams]) -> M.ModelParams:
    """Elementwise arithmetic mean of parameter sets with identical names/shapes."""
    if not checkpoints:
        raise EmptyInputError("no checkpoints to average")
    first = checkpoints[0]
    for other in checkpoints[1:]:
        if set(other.arrays) != set(first.arrays):
            raise ShapeError("checkpoint parameter names differ")
        for name, arr in other.arrays.items():
            if arr.shape != first.arrays[name].shape:
                raise ShapeError("checkpoint shapes differ for %s" % name)
    arrays = {
        name: np.mean(np.stack([c.arrays[name] for c in checkpoints]), axis=0)
        for name in first.arrays
    }
    return M.ModelParams(arrays, first.dims)


@dataclass
class StatDict:
    """Best lexical translation per source word, with its EM probability."""

    entries: dict[str, tuple[str, float]]

    def save(self, path: str | Path) -> None:
        data = {s: {"target": t, "score": p} for s, (t, p) in self.entries.items()}
        Path(path).write_text(json.dumps(data, ensure_ascii=False, indent=0), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StatDict":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({s: (d["target"], float(d["score"])) for s, d in data.items()})


def build_stat_dict(corpus: ParallelCorpus, iterations: int = 10) -> StatDict:
    """Lexical translation table via expectation-maximization.

    Classic co-occurrence EM (one-to-many alignment, no null word): ten
    rounds of posterior counting and per-source renormalization, then the
    argmax target per source word, ties broken lexicographically.
    """
    if len(corpus) == 0:
        raise EmptyInputError("cannot build a dictionary from an empty corpus")
    pairs = [(tokenize(s), tokenize(t)) for s, t in corpus.pairs]
    prob: dict[str, dict[str, float]] = {}
    for src_toks, trg_toks in pairs:
        for e in src_toks:
            bucket = prob.setdefault(e, {})
            for f in trg_toks:
                bucket[f] = 1.0
    for e, bucket in prob.items():
        u = 1.0 / len(bucket)
        for f in bucket:
            bucket[f] = u
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        for src_toks, trg_toks in pairs:
            for f in trg_toks:
                denom = sum(prob[e][f] for e in src_toks)
                if denom == 0:
                    continue
                for e in src_toks:
                    counts[e][f] += prob[e][f] / denom
        for e, bucket in counts.items():
            total = sum(bucket.values())
            prob[e] = {f: c / total for f, c in bucket.items()}
    entries = {}
    for e, bucket in prob.items():
        best = min(bucket.items(), key=lambda kv: (-kv[1], kv[0]))
        entries[e] = (best[0], best[1])
    return StatDict(entries)


def replace_unknowns(
    hyp: Hypothesis,
    src_tokens: list[str],
    vocab: Vocabulary,
    stat: StatDict | None = None,
) -> list[str]:
    """Surface tokens of a hypothesis with unk outputs resolved.

    Each unk token is replaced through the attention argmax: the aligned
    source word's dictionary translation when available, otherwise the
    source word itself. Attention rows cover bos/eos annotation positions,
    so the argmax index is clamped onto the real source tokens.
    """
    out: list[str] = []
    for t, tid in enumerate(hyp.ids):
        if tid == EOS:
            continue
        if t in hyp.forced:
            out.append(hyp.forced[t])
            continue
        if tid == UNK and hyp.alphas and src_tokens:
            j = int(np.argmax(hyp.alphas[t]))
            src_word = src_tokens[min(max(j - 1, 0), len(src_tokens) - 1)]
            if stat is not None and src_word in stat.entries:
                out.append(stat.entries[src_word][0])
            else:
                out.append(src_word)
            continue
        out.append(vocab.id_to_token(tid))
    return out


def hypothesis_tokens(hyp: Hypothesis, vocab: Vocabulary, bpe=None) -> list[str]:
    """Plain surface tokens (forced segments verbatim, BPE pieces joined)."""
    toks = []
    for t, tid in enumerate(hyp.ids):
        if tid == EOS:
            continue
        toks.append(hyp.forced.get(t, vocab.id_to_token(tid)))
    return bpe.join_pieces(toks) if bpe is not None else toks


def format_nbest(hyps: list[Hypothesis], texts: list[str], index: int = 0) -> list[str]:
    """The one-per-line N-best format: idx ||| text ||| norm score ||| logprob."""
    return [
        "%d ||| %s ||| %.6f ||| %.6f" % (index, text, h.score, h.logprob)
        for h, text in zip(hyps, texts)
    ]
