"""Loss, regularizers, optimizers, LR schedules and the training loops."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .corpus import PAD, Batch, ParallelCorpus, Vocabulary, encode, make_batches
from .errors import ConfigError, EmptyInputError, ShapeError

OPTIMIZERS = ("sgd", "adam", "adadelta")
SCHEDULES = ("constant", "linear", "exponential", "noam")

ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
ADADELTA_RHO, ADADELTA_EPS = 0.95, 1e-6


@dataclass
class TrainConfig:
    """Every training tunable, mirrored 1:1 by the config-file keys."""

    lr: float = 1e-3
    optimizer: str = "adam"
    schedule: str = "constant"
    lr_decay: float = 0.5          # gamma of the exponential schedule
    warmup_steps: int = 4000       # noam
    model_dim: int = 512           # noam
    total_steps: int = 10000       # linear
    label_smoothing: float = 0.0
    weight_decay: float = 0.0
    coverage_lambda: float = 0.0
    clip_norm: float = 5.0
    epochs: int = 20
    patience: int = 5
    eval_every: int = 100          # updates between dev evaluations
    batch_size: int = 16
    seed: int = 1

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("unknown optimizer %r (choose from %s)" % (self.optimizer, OPTIMIZERS))
        if self.schedule not in SCHEDULES:
            raise ConfigError("unknown schedule %r (choose from %s)" % (self.schedule, SCHEDULES))
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.coverage_lambda < 0:
            raise ConfigError("coverage_lambda must be >= 0")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def cross_entropy(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray, eps: float = 0.0):
    """Mean token-level cross-entropy with optional label smoothing.

    The smoothed target distribution mixes the one-hot target with a uniform
    distribution over the non-pad vocabulary. Returns (loss, dloss/dlogits);
    masked positions contribute nothing to either.
    """
    if not 0.0 <= eps < 1.0:
        raise ConfigError("smoothing must be in [0, 1)")
    logits = np.asarray(logits, dtype=np.float64)
    flat = logits.reshape(-1, logits.shape[-1])
    y = np.asarray(targets).reshape(-1)
    m = np.asarray(mask, dtype=np.float64).reshape(-1)
    n_tok = m.sum()
    if n_tok == 0:
        raise EmptyInputError("all positions are masked")
    n_vocab = flat.shape[-1]
    logp = M.log_softmax_lastaxis(flat)
    rows = np.arange(flat.shape[0])
    if eps == 0.0:
        per_tok = -logp[rows, y]
        q = np.zeros_like(flat)
        q[rows, y] = 1.0
    else:
        uniform = np.full(n_vocab, eps / (n_vocab - 1))
        uniform[PAD] = 0.0
        q = np.tile(uniform, (flat.shape[0], 1))
        q[rows, y] += 1.0 - eps
        per_tok = -(q * logp).sum(axis=-1)
    loss = float((per_tok * m).sum() / n_tok)
    dflat = (np.exp(logp) - q) * (m / n_tok)[:, None]
    return loss, dflat.reshape(logits.shape)


def coverage_regularizer(alphas: np.ndarray, lam: float):
    """Penalty pushing per-position attention mass, summed over time, to 1.

    `alphas` is (T, J): one attention weight vector per decoder step.
    Returns (penalty, dpenalty/dalphas).
    """
    if lam < 0:
        raise ConfigError("coverage weight must be >= 0")
    alphas = np.asarray(alphas, dtype=np.float64)
    column_mass = alphas.sum(axis=0)
    penalty = float(lam * ((1.0 - column_mass) ** 2).sum())
    dcol = lam * 2.0 * (column_mass - 1.0)
    return penalty, np.broadcast_to(dcol, alphas.shape).copy()


def _coverage_batch(alphas: np.ndarray, src_mask: np.ndarray | None, lam: float):
    """Batched coverage penalty, averaged over the batch; pads excluded."""
    column_mass = alphas.sum(axis=0)  # (B, J)
    if src_mask is None:
        src_mask = np.ones_like(column_mass)
    n_batch = column_mass.shape[0]
    diff = (column_mass - 1.0) * src_mask
    penalty = float(lam * (diff**2).sum() / n_batch)
    dcol = lam * 2.0 * diff / n_batch
    return penalty, np.broadcast_to(dcol, alphas.shape).copy()


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ConfigError("max_norm must be > 0")
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total <= max_norm * (1.0 + 1e-12):
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


@dataclass
class OptimizerState:
    """Per-parameter accumulators; shapes mirror the parameter arrays."""

    kind: str
    step: int = 0
    slots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


def init_optimizer_state(params: M.ModelParams, config: TrainConfig) -> OptimizerState:
    state = OptimizerState(kind=config.optimizer)
    for name, arr in params.arrays.items():
        if config.optimizer == "adam":
            state.slots[name] = {"m": np.zeros_like(arr), "v": np.zeros_like(arr)}
        elif config.optimizer == "adadelta":
            state.slots[name] = {"eg2": np.zeros_like(arr), "edx2": np.zeros_like(arr)}
        else:
            state.slots[name] = {}
    return state


def schedule_lr(
    base_lr: float,
    step: int,
    schedule: str,
    *,
    decay: float = 0.5,
    warmup_steps: int = 4000,
    model_dim: int = 512,
    total_steps: int = 10000,
) -> float:
    """Effective learning rate at 1-based `step`."""
    if step < 1:
        raise ConfigError("step must be >= 1")
    if schedule == "constant":
        return base_lr
    if schedule == "linear":
        return base_lr * max(0.0, 1.0 - step / total_steps)
    if schedule == "exponential":
        return base_lr * decay**step
    if schedule == "noam":
        return model_dim**-0.5 * min(step**-0.5, step * warmup_steps**-1.5)
    raise ConfigError("unknown schedule %r" % schedule)


def _scheduled_lr(config: TrainConfig, step: int) -> float:
    return schedule_lr(
        config.lr,
        step,
        config.schedule,
        decay=config.lr_decay,
        warmup_steps=config.warmup_steps,
        model_dim=config.model_dim,
        total_steps=config.total_steps,
    )


def optimizer_step(
    params: M.ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    config: TrainConfig,
) -> None:
    """Apply one update in place. The step counter drives the LR schedule."""
    if set(grads) != set(params.arrays):
        raise ShapeError("gradient names do not match parameter names")
    for name, g in grads.items():
        if g.shape != params.arrays[name].shape:
            raise ShapeError("gradient %s has shape %s, expected %s" % (name, g.shape, params.arrays[name].shape))
    state.step += 1
    lr = _scheduled_lr(config, state.step)
    for name, g in grads.items():
        theta = params.arrays[name]
        if config.optimizer == "sgd":
            theta -= lr * g
        elif config.optimizer == "adam":
            slot = state.slots[name]
            slot["m"] = ADAM_BETA1 * slot["m"] + (1 - ADAM_BETA1) * g
            slot["v"] = ADAM_BETA2 * slot["v"] + (1 - ADAM_BETA2) * g * g
            mhat = slot["m"] / (1 - ADAM_BETA1**state.step)
            vhat = slot["v"] / (1 - ADAM_BETA2**state.step)
            theta -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        else:  # adadelta (accumulate E[g^2] first, then scale by past E[dx^2])
            slot = state.slots[name]
            slot["eg2"] = ADADELTA_RHO * slot["eg2"] + (1 - ADADELTA_RHO) * g * g
            dx = -np.sqrt(slot["edx2"] + ADADELTA_EPS) / np.sqrt(slot["eg2"] + ADADELTA_EPS) * g
            slot["edx2"] = ADADELTA_RHO * slot["edx2"] + (1 - ADADELTA_RHO) * dx * dx
            theta += lr * dx
        if config.weight_decay > 0:
            theta -= lr * config.weight_decay * theta


@dataclass
class TrainLog:
    """Loss per update, dev score per evaluation, and the winning checkpoint."""

    losses: list[float] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    best_eval: int = -1
    best_bleu: float = -1.0

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, loss in enumerate(self.losses):
                fh.write(json.dumps({"type": "update", "update": i + 1, "loss": loss}) + "\n")
            for rec in self.evals:
                fh.write(json.dumps({"type": "eval", **rec}) + "\n")
            fh.write(json.dumps({"type": "best", "eval": self.best_eval, "bleu": self.best_bleu}) + "\n")


def _batch_loss_and_grads(params: M.ModelParams, batch: Batch, config: TrainConfig, attention: str):
    cache = M.forward_batch(params, batch.src, batch.trg, batch.src_mask, batch.trg_mask, attention)
    # predictions exist for targets after bos: positions 1..T-1
    logits = np.swapaxes(cache["logits"], 0, 1)  # (B, T-1, V)
    loss, dlogits = cross_entropy(
        logits, batch.trg[:, 1:], batch.trg_mask[:, 1:], config.label_smoothing
    )
    dlogits = np.swapaxes(dlogits, 0, 1)
    dalphas = None
    if config.coverage_lambda > 0 and cache["alphas"].shape[0] > 0:
        # attention rows at padded target steps are masked out of the sum
        step_mask = batch.trg_mask[:, 1:].T[:, :, None]
        penalty, dalphas = _coverage_batch(
            cache["alphas"] * step_mask, batch.src_mask, config.coverage_lambda
        )
        dalphas = dalphas * step_mask
        loss += penalty
    grads = M.backward(cache, dlogits, dalphas)
    return loss, grads


def train(
    train_corpus: ParallelCorpus,
    dev_corpus: ParallelCorpus,
    src_vocab: Vocabulary,
    trg_vocab: Vocabulary,
    dims: M.ModelDims,
    config: TrainConfig,
    attention: str = "additive",
    beam_size: int = 1,
    src_bpe=None,
    trg_bpe=None,
    init: M.ModelParams | None = None,
) -> tuple[M.ModelParams, TrainLog]:
    """Batch training with periodic dev-BLEU evaluation and early stopping.

    Keeps the best-scoring checkpoint seen; stops after `patience`
    evaluations without improvement or when `epochs` is exhausted. Fully
    deterministic under config.seed.
    """
    from . import decoding
    from .metrics import bleu

    if len(train_corpus) == 0 or len(dev_corpus) == 0:
        raise EmptyInputError("train and dev splits must be non-empty")
    M.check_attention(attention)
    params = init.copy() if init is not None else M.init_params(dims, config.seed)
    params.validate()
    state = init_optimizer_state(params, config)
    log = TrainLog()
    best_params = params.copy()
    dev_src = [encode(s, src_vocab, src_bpe) for s, _ in dev_corpus.pairs]
    dev_refs = [t for _, t in dev_corpus.pairs]
    stale = 0
    update = 0

    def evaluate() -> bool:
        """Returns True when training should stop."""
        nonlocal stale
        hyps = []
        for ids in dev_src:
            best = decoding.beam_search(params, ids, decoding.BeamConfig(beam_size=beam_size), attention)[0]
            hyps.append(decoding.hypothesis_tokens(best, trg_vocab, trg_bpe))
        score = bleu([" ".join(h) for h in hyps], dev_refs)
        log.evals.append({"update": update, "bleu": score})
        if score >= log.best_bleu:
            # ties keep the newest checkpoint: loss keeps improving while
            # BLEU plateaus (or sits at 0 on very short dev sentences)
            log.best_bleu = score
            log.best_eval = len(log.evals) - 1
            best_params.arrays = {k: v.copy() for k, v in params.arrays.items()}
        if score > max((e["bleu"] for e in log.evals[:-1]), default=-1.0):
            stale = 0
            return False
        stale += 1
        return stale > config.patience

    stop = False
    for epoch in range(config.epochs):
        batches = make_batches(
            train_corpus, src_vocab, trg_vocab, config.batch_size,
            seed=config.seed + epoch, src_bpe=src_bpe, trg_bpe=trg_bpe,
        )
        for batch in batches:
            loss, grads = _batch_loss_and_grads(params, batch, config, attention)
            grads = clip_gradients(grads, config.clip_norm)
            optimizer_step(params, grads, state, config)
            log.losses.append(loss)
            update += 1
            if update % config.eval_every == 0:
                stop = evaluate()
                if stop:
                    break
        if stop:
            break
    if not stop and (not log.evals or log.evals[-1]["update"] != update):
        evaluate()
    if log.best_eval < 0:
        best_params.arrays = {k: v.copy() for k, v in params.arrays.items()}
    return best_params, log


def online_update(
    params: M.ModelParams,
    state: OptimizerState,
    src_text: str,
    trg_text: str,
    config: TrainConfig,
    src_vocab: Vocabulary,
    trg_vocab: Vocabulary,
    steps: int = 1,
    attention: str = "additive",
    src_bpe=None,
    trg_bpe=None,
) -> M.ModelParams:
    """Adapt the model in place on one validated (source, target) pair."""
    if not trg_text.strip():
        raise EmptyInputError("validated target is empty")
    src = np.asarray(encode(src_text, src_vocab, src_bpe))[None, :]
    trg = np.asarray(encode(trg_text, trg_vocab, trg_bpe))[None, :]
    mask = np.ones_like(trg, dtype=np.float64)
    for _ in range(steps):
        cache = M.forward_batch(params, src, trg, None, mask, attention)
        logits = np.swapaxes(cache["logits"], 0, 1)
        _, dlogits = cross_entropy(logits, trg[:, 1:], mask[:, 1:], config.label_smoothing)
        dlogits = np.swapaxes(dlogits, 0, 1)
        dalphas = None
        if config.coverage_lambda > 0:
            penalty, dalphas = _coverage_batch(cache["alphas"], None, config.coverage_lambda)
        grads = M.backward(cache, dlogits, dalphas)
        grads = clip_gradients(grads, config.clip_norm)
        optimizer_step(params, grads, state, config)
    return params
