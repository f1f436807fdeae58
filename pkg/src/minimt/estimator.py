"""`Translator`, the estimator-style face of the engine.

Follows the familiar fit/predict/partial_fit/get_params conventions so the
model drops into existing tooling: constructor arguments are plain values,
learned state lives in trailing-underscore attributes, `partial_fit` is the
online-adaptation entry point and `score` returns corpus BLEU.
"""

from __future__ import annotations

import inspect
import json
from pathlib import Path

from . import checkpoint, decoding, training
from .bpe import BpeModel, learn_bpe, word_frequencies
from .corpus import ParallelCorpus, Vocabulary, build_vocabulary, encode, tokenize
from .decoding import BeamConfig, StatDict
from .errors import ConfigError, EmptyInputError, NotFittedError
from .model import ModelDims, check_attention, init_params


def check_sentences(x, name: str = "X") -> list[str]:
    """Validate a list of sentences: non-empty list of strings."""
    if isinstance(x, str):
        raise ConfigError("%s must be a list of sentences, not a single string" % name)
    out = list(x)
    if not out:
        raise EmptyInputError("%s is empty" % name)
    for item in out:
        if not isinstance(item, str):
            raise ConfigError("%s must contain strings, found %r" % (name, type(item).__name__))
    return out


def check_parallel(x, y) -> tuple[list[str], list[str]]:
    xs = check_sentences(x, "X")
    ys = check_sentences(y, "y")
    if len(xs) != len(ys):
        raise ConfigError("X and y must be aligned: %d vs %d sentences" % (len(xs), len(ys)))
    return xs, ys


class Translator:
    """Attentional encoder-decoder translator with interactive adaptation.

    Parameters mirror the configuration-file keys one to one; see
    `TrainConfig` and `BeamConfig` for the training and search subsets.
    """

    def __init__(
        self,
        d_emb: int = 32,
        d_state: int = 64,
        d_att: int = 64,
        attention: str = "additive",
        max_vocab: int = 30000,
        min_freq: int = 1,
        bpe_merges: int = 0,
        optimizer: str = "adam",
        lr: float = 1e-3,
        schedule: str = "constant",
        lr_decay: float = 0.5,
        warmup_steps: int = 4000,
        model_dim: int = 512,
        total_steps: int = 10000,
        label_smoothing: float = 0.0,
        weight_decay: float = 0.0,
        coverage_lambda: float = 0.0,
        clip_norm: float = 5.0,
        epochs: int = 20,
        patience: int = 5,
        eval_every: int = 100,
        batch_size: int = 16,
        seed: int = 1,
        beam_size: int = 6,
        max_len_a: float = 1.5,
        max_len_b: float = 10.0,
        min_len: int = 0,
        length_alpha: float = 0.0,
        coverage_beta: float = 0.0,
        ol_steps: int = 1,
        ol_optimizer: str = "sgd",
        ol_lr: float = 0.01,
    ):
        args = locals()
        for name in self._param_names():
            setattr(self, name, args[name])

    # -- sklearn-style parameter plumbing -----------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "Translator":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ConfigError("invalid parameter %r for Translator" % key)
            setattr(self, key, value)
        return self

    # -- configuration views -------------------------------------------------

    def train_config(self) -> training.TrainConfig:
        return training.TrainConfig(
            lr=self.lr,
            optimizer=self.optimizer,
            schedule=self.schedule,
            lr_decay=self.lr_decay,
            warmup_steps=self.warmup_steps,
            model_dim=self.model_dim,
            total_steps=self.total_steps,
            label_smoothing=self.label_smoothing,
            weight_decay=self.weight_decay,
            coverage_lambda=self.coverage_lambda,
            clip_norm=self.clip_norm,
            epochs=self.epochs,
            patience=self.patience,
            eval_every=self.eval_every,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def beam_config(self, beam_size: int | None = None) -> BeamConfig:
        return BeamConfig(
            beam_size=beam_size or self.beam_size,
            max_len_a=self.max_len_a,
            max_len_b=self.max_len_b,
            min_len=self.min_len,
            length_alpha=self.length_alpha,
            coverage_beta=self.coverage_beta,
        )

    def _ol_config(self) -> training.TrainConfig:
        cfg = self.train_config()
        cfg.optimizer = self.ol_optimizer
        cfg.lr = self.ol_lr
        return cfg

    # -- fitting ---------------------------------------------------------------

    def fit(self, X, y, X_dev=None, y_dev=None) -> "Translator":
        """Train from scratch on aligned sentence lists.

        Without an explicit dev split the train set doubles as one, which is
        fine at toy scale where the goal is to fit the data.
        """
        xs, ys = check_parallel(X, y)
        if (X_dev is None) != (y_dev is None):
            raise ConfigError("provide both X_dev and y_dev or neither")
        if X_dev is not None:
            xd, yd = check_parallel(X_dev, y_dev)
        else:
            xd, yd = xs, ys
        check_attention(self.attention)

        src_tok = [tokenize(s) for s in xs]
        trg_tok = [tokenize(t) for t in ys]
        self.src_bpe_ = self.trg_bpe_ = None
        if self.bpe_merges > 0:
            self.src_bpe_ = learn_bpe(word_frequencies(src_tok), self.bpe_merges)
            self.trg_bpe_ = learn_bpe(word_frequencies(trg_tok), self.bpe_merges)
            src_tok = [self.src_bpe_.segment_tokens(s) for s in src_tok]
            trg_tok = [self.trg_bpe_.segment_tokens(t) for t in trg_tok]
        self.src_vocab_ = build_vocabulary(src_tok, self.max_vocab, self.min_freq)
        self.trg_vocab_ = build_vocabulary(trg_tok, self.max_vocab, self.min_freq)
        self.dims_ = ModelDims(
            src_vocab=len(self.src_vocab_),
            trg_vocab=len(self.trg_vocab_),
            d_emb=self.d_emb,
            d_state=self.d_state,
            d_att=self.d_att,
        )
        self.params_, self.log_ = training.train(
            ParallelCorpus(list(zip(xs, ys)), "train"),
            ParallelCorpus(list(zip(xd, yd)), "dev"),
            self.src_vocab_,
            self.trg_vocab_,
            self.dims_,
            self.train_config(),
            attention=self.attention,
            beam_size=1,
            src_bpe=self.src_bpe_,
            trg_bpe=self.trg_bpe_,
        )
        self.lexicon_ = None
        self.ol_state_ = None
        return self

    def check_fitted(self) -> None:
        if getattr(self, "params_", None) is None:
            raise NotFittedError("Translator is not fitted; call fit() or load()")

    # -- inference ---------------------------------------------------------------

    def encode_source_text(self, text: str) -> list[int]:
        self.check_fitted()
        return encode(text, self.src_vocab_, self.src_bpe_)

    def translate_nbest(self, text: str, nbest: int = 1, beam_size: int | None = None):
        """N-best hypotheses for one sentence: (text, normalized score, raw logprob)."""
        self.check_fitted()
        cfg = self.beam_config(beam_size)
        hyps = decoding.beam_search(self.params_, self.encode_source_text(text), cfg, self.attention, nbest=nbest)
        out = []
        for h in hyps:
            toks = decoding.replace_unknowns(h, tokenize(text), self.trg_vocab_, getattr(self, "lexicon_", None))
            if self.trg_bpe_ is not None:
                toks = self.trg_bpe_.join_pieces(toks)
            out.append((" ".join(toks), h.score, h.logprob))
        return out

    def predict(self, X) -> list[str]:
        """Beam-translate a list of sentences."""
        xs = check_sentences(X)
        return [self.translate_nbest(s, nbest=1)[0][0] for s in xs]

    def score(self, X, y) -> float:
        """Corpus BLEU [%] of predict(X) against y."""
        xs, ys = check_parallel(X, y)
        return bleu_score(self.predict(xs), ys)

    # -- online adaptation ------------------------------------------------------

    def partial_fit(self, X, y, steps: int | None = None) -> "Translator":
        """Online updates, one validated pair at a time."""
        xs, ys = check_parallel(X, y)
        self.check_fitted()
        for s, t in zip(xs, ys):
            self.adapt(s, t, steps=steps)
        return self

    def adapt(self, src_text: str, trg_text: str, steps: int | None = None) -> None:
        """One online-learning event; optimizer state continues across events."""
        self.check_fitted()
        cfg = self._ol_config()
        if getattr(self, "ol_state_", None) is None or self.ol_state_.kind != cfg.optimizer:
            self.ol_state_ = training.init_optimizer_state(self.params_, cfg)
        training.online_update(
            self.params_,
            self.ol_state_,
            src_text,
            trg_text,
            cfg,
            self.src_vocab_,
            self.trg_vocab_,
            steps=self.ol_steps if steps is None else steps,
            attention=self.attention,
            src_bpe=self.src_bpe_,
            trg_bpe=self.trg_bpe_,
        )

    def build_lexicon(self, X, y) -> StatDict:
        """Fit the statistical dictionary used for unknown-word replacement."""
        xs, ys = check_parallel(X, y)
        self.lexicon_ = decoding.build_stat_dict(ParallelCorpus(list(zip(xs, ys))))
        return self.lexicon_

    # -- persistence ------------------------------------------------------------

    def save(self, out_dir: str | Path) -> Path:
        """Write checkpoint, vocabularies, optional BPE/lexicon and metadata."""
        self.check_fitted()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint.save_params(self.params_, out / "model.ckpt")
        self.src_vocab_.save(out / "src_vocab.json")
        self.trg_vocab_.save(out / "trg_vocab.json")
        if self.src_bpe_ is not None:
            self.src_bpe_.save(out / "src.bpe")
        if self.trg_bpe_ is not None:
            self.trg_bpe_.save(out / "trg.bpe")
        if getattr(self, "lexicon_", None) is not None:
            self.lexicon_.save(out / "lexicon.json")
        (out / "meta.json").write_text(
            json.dumps({"params": self.get_params()}, indent=2), encoding="utf-8"
        )
        return out

    @classmethod
    def load(cls, model_dir: str | Path) -> "Translator":
        model_dir = Path(model_dir)
        if model_dir.is_file():  # a bare checkpoint: sidecars live next to it
            model_dir = model_dir.parent
        meta = json.loads((model_dir / "meta.json").read_text(encoding="utf-8"))
        translator = cls(**meta["params"])
        translator.src_vocab_ = Vocabulary.load(model_dir / "src_vocab.json")
        translator.trg_vocab_ = Vocabulary.load(model_dir / "trg_vocab.json")
        translator.src_bpe_ = translator.trg_bpe_ = None
        if (model_dir / "src.bpe").exists():
            translator.src_bpe_ = BpeModel.load(model_dir / "src.bpe")
        if (model_dir / "trg.bpe").exists():
            translator.trg_bpe_ = BpeModel.load(model_dir / "trg.bpe")
        translator.params_ = checkpoint.load_params(model_dir / "model.ckpt")
        translator.dims_ = translator.params_.dims
        translator.lexicon_ = None
        if (model_dir / "lexicon.json").exists():
            translator.lexicon_ = StatDict.load(model_dir / "lexicon.json")
        translator.ol_state_ = None
        translator.log_ = None
        return translator

    def init_untrained(self, src_vocab: Vocabulary, trg_vocab: Vocabulary) -> "Translator":
        """Random parameters over given vocabularies (tests, demos)."""
        self.src_vocab_ = src_vocab
        self.trg_vocab_ = trg_vocab
        self.src_bpe_ = self.trg_bpe_ = None
        self.dims_ = ModelDims(len(src_vocab), len(trg_vocab), self.d_emb, self.d_state, self.d_att)
        self.params_ = init_params(self.dims_, self.seed)
        self.lexicon_ = None
        self.ol_state_ = None
        return self


def bleu_score(hypotheses, references) -> float:
    from .metrics import bleu

    return bleu(hypotheses, references)
