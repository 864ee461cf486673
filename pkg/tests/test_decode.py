import numpy as np
import pytest

from dsgsum.corpus import EOS_ID
from dsgsum.decode import beam_search, block_trigrams, greedy_decode
from dsgsum.model import DSGSum, make_example
from dsgsum.ndgrad import Tensor
from conftest import tiny_config
from oracles import has_repeated_trigram


def test_block_trigrams_cases():
    logits = np.zeros(6)
    a, b, c, d = 1, 2, 3, 4
    out = block_trigrams([a, b, c, a, b], logits)
    assert out[c] == -np.inf and np.isfinite(np.delete(out, c)).all()
    assert np.isfinite(block_trigrams([a, b, c, d], logits)).all()
    assert np.array_equal(block_trigrams([a], logits), logits)
    assert logits.tolist() == [0.0] * 6


def _instances(syn_pairs, syn_vocab, n, **flags):
    for k in range(n):
        cfg = tiny_config(len(syn_vocab), seed=k, max_tgt_len=12, **flags)
        model = DSGSum(cfg)
        yield model, make_example(syn_pairs[k % len(syn_pairs)], syn_vocab, cfg, with_target=False)


def test_beam_one_equals_greedy(syn_pairs, syn_vocab):
    for model, ex in _instances(syn_pairs, syn_vocab, 10):
        g = greedy_decode(model, ex)
        b = beam_search(model, ex, beam=1)
        assert g.tokens == b.tokens
        assert g.score == pytest.approx(b.score, abs=1e-12)


def test_outputs_are_well_formed(syn_pairs, syn_vocab):
    for model, ex in _instances(syn_pairs, syn_vocab, 6, use_copy=True):
        for hyp in (greedy_decode(model, ex, max_len=10), beam_search(model, ex, 3, max_len=10)):
            assert not has_repeated_trigram(hyp.tokens)
            assert (hyp.tokens and hyp.tokens[-1] == EOS_ID) or len(hyp.tokens) == 10
            assert hyp.finished == (bool(hyp.tokens) and hyp.tokens[-1] == EOS_ID)


def test_beam_raw_score_not_below_greedy(syn_pairs, syn_vocab):
    for model, ex in _instances(syn_pairs, syn_vocab, 10):
        g = greedy_decode(model, ex, block=True)
        b = beam_search(model, ex, beam=5, length_norm=False, block=True)
        assert b.score >= g.score - 1e-12


class _ForcedEOS(DSGSum):
    def decode(self, state, tgt_in, ctx=None):
        probs = np.full((tgt_in.shape[0], tgt_in.shape[1], self.cfg.vocab_size), 1e-6)
        probs[..., EOS_ID] = 1.0
        probs[..., 0] = 0.0
        return Tensor(probs / probs.sum(-1, keepdims=True))


def test_forced_eos_gives_empty_summary(syn_pairs, syn_vocab):
    cfg = tiny_config(len(syn_vocab))
    model = _ForcedEOS(cfg)
    ex = make_example(syn_pairs[0], syn_vocab, cfg, with_target=False)
    for hyp in (beam_search(model, ex, 5), greedy_decode(model, ex)):
        assert hyp.tokens == [EOS_ID]
        assert syn_vocab.decode(hyp.tokens) == []


def test_max_len_capped_by_position_table(syn_pairs, syn_vocab):
    cfg = tiny_config(len(syn_vocab), max_tgt_len=4)
    model = DSGSum(cfg)
    ex = make_example(syn_pairs[0], syn_vocab, cfg, with_target=False)
    assert len(greedy_decode(model, ex, max_len=100).tokens) <= cfg.max_tgt_len + 1
    with pytest.raises(ValueError):
        beam_search(model, ex, beam=0)
