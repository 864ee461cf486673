"""Graph-augmented abstractive summarization on a small numpy autodiff core."""
from .corpus import RawPair, Vocab, build_vocab, load_corpus
from .graph import SemanticGraph, build_graph
from .model import DSGSum, ModelConfig
from .train import TrainConfig, fit

__version__ = "0.1.0"

__all__ = ["RawPair", "Vocab", "build_vocab", "load_corpus", "SemanticGraph", "build_graph",
           "DSGSum", "ModelConfig", "TrainConfig", "fit"]
