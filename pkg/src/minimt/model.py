"""Attentional GRU encoder-decoder: parameters, forward pass, gradients.

The network is a bidirectional GRU encoder over source embeddings, a
two-cell conditional GRU decoder (cell 1 -> attention -> cell 2) and a
deep-output readout combining decoder state, attention context and the
previous target embedding before the vocabulary projection.

Every formula is written once, over an `ops` namespace. With `NP` the
functions run on plain arrays (inference, beam search); with the autodiff
module they record the graph used by `backward` (training). The two paths
are locked together by tests comparing their outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, log_softmax_lastaxis, softmax_lastaxis, stable_sigmoid
from .errors import ConfigError, EmptyInputError, MinimtError, ShapeError, VocabularyError

ATTENTION_KINDS = ("additive", "dot")


@dataclass(frozen=True)
class ModelDims:
    """Everything that determines parameter shapes."""

    src_vocab: int
    trg_vocab: int
    d_emb: int
    d_state: int
    d_att: int

    def __post_init__(self) -> None:
        for name, v in self.__dict__.items():
            if v < 1:
                raise ConfigError("dimension %s must be >= 1, got %d" % (name, v))


def param_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    """Named parameter shapes, in the fixed creation/serialization order."""
    e, h, a = dims.d_emb, dims.d_state, dims.d_att
    return {
        "src_emb": (dims.src_vocab, e),
        "trg_emb": (dims.trg_vocab, e),
        "enc_fwd_W": (e, 3 * h),
        "enc_fwd_U": (h, 3 * h),
        "enc_fwd_b": (3 * h,),
        "enc_bwd_W": (e, 3 * h),
        "enc_bwd_U": (h, 3 * h),
        "enc_bwd_b": (3 * h,),
        "dec_gru1_W": (e, 3 * h),
        "dec_gru1_U": (h, 3 * h),
        "dec_gru1_b": (3 * h,),
        "dec_gru2_W": (2 * h, 3 * h),
        "dec_gru2_U": (h, 3 * h),
        "dec_gru2_b": (3 * h,),
        "att_W": (h, a),
        "att_U": (2 * h, a),
        "att_b": (a,),
        "att_v": (a,),
        "att_proj": (2 * h, h),
        "init_W": (2 * h, h),
        "init_b": (h,),
        "out_Ws": (h, e),
        "out_Wc": (2 * h, e),
        "out_We": (e, e),
        "out_b": (e,),
        "out_W": (e, dims.trg_vocab),
        "out_bv": (dims.trg_vocab,),
    }


@dataclass
class ModelParams:
    """All trainable arrays, keyed by name."""

    arrays: dict[str, np.ndarray]
    dims: ModelDims

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.dims)

    def validate(self) -> None:
        expected = param_shapes(self.dims)
        if set(self.arrays) != set(expected):
            missing = set(expected) - set(self.arrays)
            extra = set(self.arrays) - set(expected)
            raise ShapeError("parameter name mismatch: missing=%s extra=%s" % (sorted(missing), sorted(extra)))
        for name, shape in expected.items():
            if tuple(self.arrays[name].shape) != shape:
                raise ShapeError("%s has shape %s, expected %s" % (name, self.arrays[name].shape, shape))


def init_params(dims: ModelDims, seed: int = 0, dtype=np.float64) -> ModelParams:
    """Glorot-uniform matrices, zero biases; bit-reproducible under `seed`."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(dims).items():
        if name.endswith("_b") or name.endswith("_bv"):
            arrays[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = shape[0]
        fan_out = shape[1] if len(shape) > 1 else 1
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return ModelParams(arrays, dims)


def check_attention(kind: str) -> str:
    if kind not in ATTENTION_KINDS:
        raise ConfigError("unknown attention kind %r (choose from %s)" % (kind, ATTENTION_KINDS))
    return kind


@dataclass
class DecoderState:
    """Decoder hidden state plus the attention weights of the last step."""

    hidden: np.ndarray
    attention: np.ndarray | None = None


# ---------------------------------------------------------------------------
# formulas, generic over the ops namespace (numpy or autodiff)


class NP:
    """Plain-numpy twins of the autodiff operations."""

    tanh = staticmethod(np.tanh)
    sigmoid = staticmethod(stable_sigmoid)
    softmax_last = staticmethod(softmax_lastaxis)
    log_softmax_last = staticmethod(log_softmax_lastaxis)

    @staticmethod
    def take_rows(m, ids):
        return m[np.asarray(ids)]

    @staticmethod
    def slice_cols(x, start, stop):
        return x[..., start:stop]

    @staticmethod
    def concat_last(a, b):
        return np.concatenate([a, b], axis=-1)

    @staticmethod
    def reshape(x, shape):
        return x.reshape(shape)

    @staticmethod
    def dot_last(x, v):
        return x @ v

    @staticmethod
    def sum_last(x):
        return x.sum(axis=-1)

    @staticmethod
    def weighted_sum(alpha, h):
        if h.ndim == 2:
            return alpha @ h
        return np.einsum("bj,bjk->bk", alpha, h)

    @staticmethod
    def masked_mean_rows(h, mask):
        if h.ndim == 2:
            return h.mean(axis=0)
        if mask is None:
            return h.mean(axis=1)
        return np.einsum("bj,bjk->bk", mask, h) / mask.sum(axis=1)[:, None]

    @staticmethod
    def stack_time(items):
        return np.stack(items, axis=1)


def _gru(ops, x, h, w, u, b, n_state: int):
    """One GRU step; gate order in the packed matrices is (update, reset, candidate)."""
    pre_x = x @ w + b
    pre_h = h @ ops.slice_cols(u, 0, 2 * n_state)
    z = ops.sigmoid(ops.slice_cols(pre_x, 0, n_state) + ops.slice_cols(pre_h, 0, n_state))
    r = ops.sigmoid(ops.slice_cols(pre_x, n_state, 2 * n_state) + ops.slice_cols(pre_h, n_state, 2 * n_state))
    cand = ops.tanh(ops.slice_cols(pre_x, 2 * n_state, 3 * n_state) + (r * h) @ ops.slice_cols(u, 2 * n_state, 3 * n_state))
    return (1.0 - z) * h + z * cand


def _attend(ops, s, h_enc, p, kind: str, mask=None):
    """Scores -> softmax weights -> context over annotation rows.

    `s` is (B, H); `h_enc` is (J, 2H) shared across the batch or (B, J, 2H).
    """
    n_batch = s.shape[0]
    if kind == "additive":
        u = h_enc @ p["att_U"] + p["att_b"]
        sp = ops.reshape(s @ p["att_W"], (n_batch, 1, p["att_W"].shape[-1]))
        scores = ops.dot_last(ops.tanh(sp + u), p["att_v"])
    else:
        ph = h_enc @ p["att_proj"]
        sp = ops.reshape(s, (n_batch, 1, s.shape[-1]))
        scores = ops.sum_last(sp * ph)
    if mask is not None:
        scores = scores + (mask - 1.0) * 1e9
    alpha = ops.softmax_last(scores)
    context = ops.weighted_sum(alpha, h_enc)
    return context, alpha


def ops_constant(ops, x):
    """Wrap a plain array as a graph constant when recording, else pass through."""
    return ad.constant(x) if ops is ad else x


def _encode(ops, p, src_ids: np.ndarray, src_mask: np.ndarray | None, n_state: int):
    """Bidirectional GRU; row j is [forward state at j ; backward state at j]."""
    n_batch, length = src_ids.shape
    zero = np.zeros((n_batch, n_state))
    fwd: list = [None] * length
    h = ops_constant(ops, zero)
    for t in range(length):
        x = ops.take_rows(p["src_emb"], src_ids[:, t])
        hn = _gru(ops, x, h, p["enc_fwd_W"], p["enc_fwd_U"], p["enc_fwd_b"], n_state)
        if src_mask is not None:
            m = src_mask[:, t : t + 1]
            hn = hn * m + h * (1.0 - m)
        fwd[t] = hn
        h = hn
    bwd: list = [None] * length
    h = ops_constant(ops, zero)
    for t in range(length - 1, -1, -1):
        x = ops.take_rows(p["src_emb"], src_ids[:, t])
        hn = _gru(ops, x, h, p["enc_bwd_W"], p["enc_bwd_U"], p["enc_bwd_b"], n_state)
        if src_mask is not None:
            m = src_mask[:, t : t + 1]
            hn = hn * m + h * (1.0 - m)
        bwd[t] = hn
        h = hn
    rows = [ops.concat_last(fwd[t], bwd[t]) for t in range(length)]
    return ops.stack_time(rows)


def _init_state(ops, p, h_enc, mask):
    hbar = ops.masked_mean_rows(h_enc, mask)
    return ops.tanh(hbar @ p["init_W"] + p["init_b"])


def _step(ops, p, kind: str, y_prev: np.ndarray, s, h_enc, mask=None):
    """One decoder step: GRU1 -> attention -> GRU2 -> deep output logits."""
    n_state = p["init_W"].shape[-1]
    e = ops.take_rows(p["trg_emb"], y_prev)
    s_tilde = _gru(ops, e, s, p["dec_gru1_W"], p["dec_gru1_U"], p["dec_gru1_b"], n_state)
    context, alpha = _attend(ops, s_tilde, h_enc, p, kind, mask)
    s_new = _gru(ops, context, s_tilde, p["dec_gru2_W"], p["dec_gru2_U"], p["dec_gru2_b"], n_state)
    readout = ops.tanh(s_new @ p["out_Ws"] + context @ p["out_Wc"] + e @ p["out_We"] + p["out_b"])
    logits = readout @ p["out_W"] + p["out_bv"]
    return s_new, alpha, logits


# ---------------------------------------------------------------------------
# public inference path (plain numpy)


def encode_source(src_ids, params: ModelParams) -> np.ndarray:
    """Annotation matrix H of shape (J, 2*d_state) for one id sequence."""
    ids = np.asarray(src_ids, dtype=np.int64)
    if ids.size == 0:
        raise EmptyInputError("cannot encode an empty source")
    if ids.min() < 0 or ids.max() >= params.dims.src_vocab:
        raise VocabularyError("source id out of range")
    h = _encode(NP, params.arrays, ids[None, :], None, params.dims.d_state)
    return h[0]


def init_decoder_state(h_enc: np.ndarray, params: ModelParams) -> DecoderState:
    """tanh projection of the mean annotation row."""
    if h_enc.shape[0] == 0:
        raise EmptyInputError("empty annotation matrix")
    return DecoderState(hidden=_init_state(NP, params.arrays, h_enc, None))


def attend(state, h_enc: np.ndarray, params: ModelParams, attention: str = "additive"):
    """Context vector and attention weights for one decoder state."""
    check_attention(attention)
    if h_enc.shape[0] == 0:
        raise EmptyInputError("empty annotation matrix")
    s = state.hidden if isinstance(state, DecoderState) else np.asarray(state)
    context, alpha = _attend(NP, s[None, :], h_enc, params.arrays, attention)
    return context[0], alpha[0]


def decoder_step(prev_id: int, state: DecoderState, h_enc: np.ndarray, params: ModelParams, attention: str = "additive"):
    """Autoregressive single step; returns the new state (carrying its
    attention weights) and the unnormalized logits over the target vocabulary."""
    check_attention(attention)
    if not 0 <= prev_id < params.dims.trg_vocab:
        raise VocabularyError("target id %d out of range" % prev_id)
    hidden, alpha, logits = decoder_step_batch(
        np.array([prev_id]), state.hidden[None, :], h_enc, params, attention
    )
    return DecoderState(hidden=hidden[0], attention=alpha[0]), logits[0]


def decoder_step_batch(prev_ids, hidden, h_enc, params: ModelParams, attention: str = "additive"):
    """Vectorized decoder step over a batch of states sharing one source."""
    s, alpha, logits = _step(NP, params.arrays, attention, np.asarray(prev_ids, dtype=np.int64), hidden, h_enc)
    return s, alpha, logits


# ---------------------------------------------------------------------------
# training path (autodiff tape)


def forward_batch(params: ModelParams, src, trg, src_mask, trg_mask, attention: str = "additive") -> dict:
    """Teacher-forced forward over a padded batch, recording the graph.

    Returns a cache with per-step logits/attention nodes, parameter nodes,
    and plain-value conveniences: cache["logits"] (T-1, B, V) and
    cache["logprobs"] (T-1, B) log-probabilities of the forced targets.
    """
    check_attention(attention)
    src = np.asarray(src, dtype=np.int64)
    trg = np.asarray(trg, dtype=np.int64)
    if src.ndim != 2 or trg.ndim != 2:
        raise ShapeError("src/trg must be 2-D (batch, length)")
    pvars = {name: Var(arr) for name, arr in params.arrays.items()}
    h_enc = _encode(ad, pvars, src, src_mask, params.dims.d_state)
    s = _init_state(ad, pvars, h_enc, src_mask)
    step_logits: list[Var] = []
    step_alphas: list[Var] = []
    for t in range(trg.shape[1] - 1):
        s, alpha, logits = _step(ad, pvars, attention, trg[:, t], s, h_enc, src_mask)
        step_logits.append(logits)
        step_alphas.append(alpha)
    logits_val = np.stack([v.value for v in step_logits], axis=0) if step_logits else np.zeros((0,) + (trg.shape[0], params.dims.trg_vocab))
    logprobs = np.zeros(logits_val.shape[:2])
    if step_logits:
        lsm = log_softmax_lastaxis(logits_val)
        rows = np.arange(trg.shape[0])
        for t in range(logits_val.shape[0]):
            logprobs[t] = lsm[t, rows, trg[:, t + 1]]
    return {
        "step_logits": step_logits,
        "step_alphas": step_alphas,
        "pvars": pvars,
        "logits": logits_val,
        "alphas": np.stack([v.value for v in step_alphas], axis=0) if step_alphas else np.zeros((0, trg.shape[0], src.shape[1])),
        "logprobs": logprobs,
        "trg": trg,
        "trg_mask": trg_mask,
    }


def forward_logprob(src_ids, trg_ids, params: ModelParams, attention: str = "additive"):
    """Per-token log-probabilities of one teacher-forced pair, plus cache."""
    src = np.asarray(src_ids, dtype=np.int64)[None, :]
    trg = np.asarray(trg_ids, dtype=np.int64)
    if trg.size < 2:
        raise EmptyInputError("target must contain at least bos and eos")
    cache = forward_batch(params, src, trg[None, :], None, None, attention)
    return cache["logprobs"][:, 0], cache


def backward(cache: dict, dlogits, dalphas=None) -> dict[str, np.ndarray]:
    """Gradients of every parameter given output-side gradients.

    `dlogits` has the shape of cache["logits"]; `dalphas`, when given, seeds
    the per-step attention weights (coverage-style regularizers).
    """
    if not isinstance(cache, dict) or "step_logits" not in cache or "pvars" not in cache:
        raise MinimtError("backward needs the cache produced by forward_batch/forward_logprob")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache["logits"].shape:
        raise ShapeError("dlogits shape %s != logits shape %s" % (dlogits.shape, cache["logits"].shape))
    seeds = [(node, dlogits[t]) for t, node in enumerate(cache["step_logits"])]
    if dalphas is not None:
        dalphas = np.asarray(dalphas, dtype=np.float64)
        seeds += [(node, dalphas[t]) for t, node in enumerate(cache["step_alphas"])]
    ad.backward(seeds)
    return {
        name: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for name, v in cache["pvars"].items()
    }
