import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dsgsum.corpus import RawPair, build_vocab  # noqa: E402
from dsgsum.model import DSGSum, ModelConfig, collate, make_example  # noqa: E402
from dsgsum.synthetic import make_corpus  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def tiny_config(vocab_size: int, **kw) -> ModelConfig:
    base = dict(vocab_size=vocab_size, d_model=16, n_heads=2, d_ff=16, enc_layers=1, dec_layers=1,
                lstm_hidden=8, lstm_layers=1, gat_layers=1, gat_heads=2, max_src_len=64,
                max_tgt_len=20, max_entities=8, dropout=0.1, seed=0)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def syn_pairs() -> list[RawPair]:
    return make_corpus(8, seed=3)


@pytest.fixture(scope="session")
def syn_vocab(syn_pairs):
    return build_vocab(syn_pairs)


@pytest.fixture()
def tiny_model(syn_vocab):
    return DSGSum(tiny_config(len(syn_vocab)))


@pytest.fixture()
def syn_batch(syn_pairs, syn_vocab):
    cfg = tiny_config(len(syn_vocab))
    exs = [make_example(p, syn_vocab, cfg) for p in syn_pairs[:4]]
    return collate(exs, cfg.max_src_len)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
