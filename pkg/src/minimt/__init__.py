"""minimt: a miniature interactive-predictive machine translation engine."""

from .bpe import BpeModel, learn_bpe
from .corpus import ParallelCorpus, Vocabulary, build_vocabulary, decode, encode
from .estimator import Translator
from .model import ModelDims, ModelParams, init_params

__version__ = "0.1.0"

__all__ = [
    "BpeModel",
    "learn_bpe",
    "ParallelCorpus",
    "Vocabulary",
    "build_vocabulary",
    "decode",
    "encode",
    "Translator",
    "ModelDims",
    "ModelParams",
    "init_params",
    "__version__",
]
