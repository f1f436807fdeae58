"""Shared fixtures. The two trained models are expensive, so they are
session-scoped: a digit-translation toy model and the tiny demo model whose
corpus makes 'pour toujours' the majority continuation and 'à jamais' the
minority one (so a single-character correction flips the hypothesis)."""

from __future__ import annotations

import numpy as np
import pytest

from minimt import Translator
from minimt import model as M
from minimt.toydata import digit_splits

DEMO_SOURCE = "They are lost forever ."
DEMO_MAJORITY = "Ils sont perdus pour toujours ."
DEMO_MINORITY = "Ils sont perdus à jamais ."


@pytest.fixture(scope="session")
def toy_task():
    return digit_splits(n_train=100, n_dev=20, n_test=100, seed=0)


@pytest.fixture(scope="session")
def toy_model(toy_task):
    train, dev, _ = toy_task
    mt = Translator(
        d_emb=32, d_state=64, d_att=32, epochs=500, batch_size=16, eval_every=35,
        lr=2e-3, beam_size=4, seed=7, patience=4,
    )
    mt.fit(
        [s for s, _ in train.pairs], [t for _, t in train.pairs],
        [s for s, _ in dev.pairs], [t for _, t in dev.pairs],
    )
    return mt


@pytest.fixture(scope="session")
def demo_model():
    sources = [DEMO_SOURCE] * 3
    targets = [DEMO_MAJORITY, DEMO_MAJORITY, DEMO_MINORITY]
    mt = Translator(
        d_emb=24, d_state=48, d_att=24, epochs=150, batch_size=4, eval_every=50,
        lr=5e-3, beam_size=4, seed=3, patience=50,
    )
    mt.fit(sources, targets)
    return mt


@pytest.fixture
def tiny_dims():
    return M.ModelDims(src_vocab=7, trg_vocab=7, d_emb=4, d_state=5, d_att=3)


@pytest.fixture
def tiny_params(tiny_dims):
    return M.init_params(tiny_dims, seed=0)


def sharpen(params: M.ModelParams, factor: float = 3.0) -> M.ModelParams:
    """Scale weights up so random models have non-degenerate distributions."""
    out = params.copy()
    for name in out.arrays:
        out.arrays[name] *= factor
    return out


def clone_translator(mt: Translator) -> Translator:
    """Independent copy sharing vocabularies but not parameters, so tests
    that adapt the model cannot pollute the session-scoped fixtures."""
    twin = Translator(**mt.get_params())
    twin.src_vocab_ = mt.src_vocab_
    twin.trg_vocab_ = mt.trg_vocab_
    twin.src_bpe_ = mt.src_bpe_
    twin.trg_bpe_ = mt.trg_bpe_
    twin.dims_ = mt.dims_
    twin.params_ = mt.params_.copy()
    twin.lexicon_ = getattr(mt, "lexicon_", None)
    twin.ol_state_ = None
    twin.log_ = None
    return twin


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
