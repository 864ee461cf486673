"""Greedy and beam-search decoding with trigram blocking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import BOS_ID, EOS_ID
from .model import DSGSum, EncoderState, Example, collate


@dataclass
class Hypothesis:
    tokens: list[int]  # generated ids, ending with [EOS] when finished
    score: float       # summed log-probability
    finished: bool

    def normalized(self) -> float:
        return self.score / max(1, len(self.tokens))


def block_trigrams(prefix, logits: np.ndarray) -> np.ndarray:
    """Copy of ``logits`` with tokens that would repeat a prefix trigram set to -inf."""
    out = np.array(logits, dtype=np.float64, copy=True)
    mask = kernels.trigram_block_mask(np.asarray(prefix, dtype=np.int64), out.shape[-1])
    out[mask] = -np.inf
    return out


def _next_logprobs(model: DSGSum, state: EncoderState, prefixes: np.ndarray) -> np.ndarray:
    probs = model.decode(state, prefixes).data[:, -1, :]
    with np.errstate(divide="ignore"):
        return np.log(probs)


def encode_example(model: DSGSum, example: Example) -> EncoderState:
    return model.encode(collate([example], model.cfg.max_src_len))


def _cap(model: DSGSum, max_len: int | None) -> int:
    limit = model.params["dec.pos_emb"].shape[0] - 1
    return limit if max_len is None else min(max_len, limit)


def greedy_decode(model: DSGSum, example: Example, max_len: int | None = None,
                  block: bool = True) -> Hypothesis:
    """Arg-max decoding; ties go to the lowest token id."""
    max_len = _cap(model, max_len)
    state = encode_example(model, example)
    seq, score = [BOS_ID], 0.0
    while len(seq) - 1 < max_len:
        lp = _next_logprobs(model, state, np.array([seq]))[0]
        if block:
            lp = block_trigrams(seq[1:], lp)
        total = score + lp
        y = int(np.argmax(total))
        seq.append(y)
        score = float(total[y])
        if y == EOS_ID:
            return Hypothesis(seq[1:], score, True)
    return Hypothesis(seq[1:], score, False)


def beam_search(model: DSGSum, example: Example, beam: int = 5, max_len: int | None = None,
                length_norm: bool = True, block: bool = True) -> Hypothesis:
    """Beam search over one example.

    Candidates at a step share a length, so they are ranked by raw summed
    log-probability (ties: lower token id, then lower beam index). Finished
    hypotheses compete by ``score / length`` when ``length_norm`` is set.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    max_len = _cap(model, max_len)
    base = encode_example(model, example)
    states: dict[int, EncoderState] = {}
    alive = [Hypothesis([], 0.0, False)]
    finished: list[Hypothesis] = []
    key = Hypothesis.normalized if length_norm else (lambda h: h.score)

    for _ in range(max_len):
        k = len(alive)
        if k not in states:
            states[k] = base.repeat(k)
        prefixes = np.array([[BOS_ID] + h.tokens for h in alive], dtype=np.int64)
        lp = _next_logprobs(model, states[k], prefixes)
        if block:
            lp = np.stack([block_trigrams(h.tokens, row) for h, row in zip(alive, lp)])
        totals = np.array([h.score for h in alive])[:, None] + lp
        v = totals.shape[1]
        flat = totals.reshape(-1)
        beam_idx, tok = np.divmod(np.arange(flat.size), v)
        order = np.lexsort((beam_idx, tok, -flat))
        new_alive: list[Hypothesis] = []
        for j in order:
            s = flat[j]
            if not np.isfinite(s):
                break
            src, y = alive[beam_idx[j]], int(tok[j])
            if y == EOS_ID:
                finished.append(Hypothesis(src.tokens + [y], float(s), True))
            else:
                new_alive.append(Hypothesis(src.tokens + [y], float(s), False))
                if len(new_alive) == beam:
                    break
        alive = new_alive
        if len(finished) >= beam or not alive:
            break
        if not length_norm and finished:
            # scores only fall as hypotheses grow
            if max(h.score for h in finished) >= max(h.score for h in alive):
                break
    else:
        finished.extend(alive)
    if not finished:
        finished = alive
    best = finished[0]
    for h in finished[1:]:
        if key(h) > key(best):
            best = h
    return best
