"""Entity-graph encoder and document encoder."""
from __future__ import annotations

import numpy as np

from . import ndgrad as nd
from .layers import (
    EVAL,
    NEG_INF,
    Ctx,
    Params,
    encoder_layer,
    ffn,
    lstm_layer,
    new_encoder_layer,
    new_ffn,
    new_linear,
    new_lstm,
    new_norm,
    norm,
    linear,
)
from .ndgrad import Tensor


def new_span_encoder(p: Params, d_word: int, hidden: int, layers: int, d_model: int) -> None:
    d_in = d_word
    for layer in range(layers):
        for direction in ("fwd", "bwd"):
            new_lstm(p, f"enc.lstm.{layer}.{direction}", d_in, hidden)
        d_in = 2 * hidden
    if 2 * hidden != d_model:
        new_linear(p, "enc.lstm.proj", 2 * hidden, d_model)


def encode_entity_spans(p: Params, word_emb: Tensor, span_ids: np.ndarray,
                        span_len: np.ndarray, ctx: Ctx = EVAL) -> Tensor:
    """Bi-LSTM span vectors ``[M, d]`` for right-padded token ids ``[M, L]``.

    Each row is forward-output-at-last-word concatenated with
    backward-output-at-last-word; the backward output at the last word has
    seen only that word, because the backward pass starts there.
    """
    span_ids = np.asarray(span_ids, dtype=np.int64)
    span_len = np.asarray(span_len, dtype=np.int64)
    if span_ids.ndim != 2 or (span_len < 1).any():
        raise ValueError("empty entity span")
    m, L = span_ids.shape
    step_mask = np.arange(L)[None, :] < span_len[:, None]
    x = nd.gather(word_emb, span_ids)
    layer = 0
    rows, last = np.arange(m), span_len - 1
    while f"enc.lstm.{layer}.fwd.wx" in p:
        x = ctx.drop(x)
        fwd = lstm_layer(p, f"enc.lstm.{layer}.fwd", x, step_mask)
        bwd = lstm_layer(p, f"enc.lstm.{layer}.bwd", x, step_mask, reverse=True)
        x = nd.concat([fwd, bwd], axis=-1)
        layer += 1
    e = x[rows, last]
    if "enc.lstm.proj.w" in p:
        e = linear(p, "enc.lstm.proj", ctx.drop(e))
    return e


def add_frequency_embedding(e: Tensor, ranks: np.ndarray, fe_table: Tensor | None) -> Tensor:
    """``g0[i] = e[i] + FE(rank[i])``; identity when the table is absent."""
    if fe_table is None:
        return e
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size and (ranks.min() < 0 or ranks.max() >= fe_table.shape[0]):
        raise ValueError(f"frequency rank out of range 0..{fe_table.shape[0] - 1}")
    return e + nd.gather(fe_table, ranks)


def new_gat_layer(p: Params, prefix: str, d: int, n_heads: int, d_ff: int) -> None:
    if d % n_heads:
        raise ValueError("d_model must be divisible by gat_heads")
    p.new(prefix + ".w1", (d, d))
    p.new(prefix + ".w2", (d, d))
    new_norm(p, prefix + ".ln", d)
    new_ffn(p, prefix + ".ffn", d, d_ff)


def _heads(x: Tensor, n_heads: int) -> Tensor:
    # [B, N, d] -> [B, H, N, d/H]
    b, n, d = x.shape
    return x.reshape(b, n, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def gat_attention_weights(p: Params, prefix: str, g: Tensor, adj: np.ndarray,
                          n_heads: int) -> Tensor:
    """Neighbourhood-restricted weights ``[B, H, N, N]``.

    Logits are the unscaled bilinear form ``(W1 g_i)(W2 g_j)^T`` per head;
    entries outside the neighbourhood are exactly zero.
    """
    adj = np.asarray(adj, dtype=bool)
    if not adj[..., np.arange(adj.shape[-1]), np.arange(adj.shape[-1])].all():
        raise ValueError("node without self-loop in adjacency")
    q = _heads(g @ p[prefix + ".w1"], n_heads)
    k = _heads(g @ p[prefix + ".w2"], n_heads)
    logits = nd.masked_fill(q @ k.swapaxes(-1, -2), ~adj[:, None, :, :], NEG_INF)
    return nd.softmax(logits, axis=-1)


def gat_layer(p: Params, prefix: str, g: Tensor, adj: np.ndarray, n_heads: int,
              ctx: Ctx = EVAL) -> Tensor:
    """``FFN(LayerNorm(g_i + sum_j a_ij g_j))`` with heads over slices of ``g``.

    Head ``h`` aggregates the ``h``-th ``d/H`` slice of the neighbour vectors;
    concatenating the heads restores width ``d`` ahead of the residual.
    """
    alpha = gat_attention_weights(p, prefix, g, adj, n_heads)
    b, n, d = g.shape
    agg = (alpha @ _heads(g, n_heads)).transpose(0, 2, 1, 3).reshape(b, n, d)
    x = norm(p, prefix + ".ln", g + agg)
    return ffn(p, prefix + ".ffn", x, ctx)


def encode_graph(p: Params, word_emb: Tensor, batch, n_heads: int, ctx: Ctx = EVAL) -> Tensor:
    """Node matrix ``[B, N, d]``; graph-less rows become the learned null node."""
    b, n, L = batch.ent_ids.shape
    e = encode_entity_spans(p, word_emb, batch.ent_ids.reshape(b * n, L),
                            batch.ent_len.reshape(b * n), ctx)
    g = e.reshape(b, n, e.shape[-1])
    g = add_frequency_embedding(g, batch.ent_rank, p.get("enc.fe"))
    layer = 0
    while f"enc.gat.{layer}.w1" in p:
        g = gat_layer(p, f"enc.gat.{layer}", g, batch.adj, n_heads, ctx)
        layer += 1
    has = batch.has_graph.astype(np.float64)[:, None, None]
    if has.all():
        return g
    return g * has + p["enc.null_node"] * (1.0 - has)


# ------------------------------------------------------------------ document


def new_document_encoder(p: Params, vocab_size: int, d: int, d_ff: int, layers: int,
                         max_len: int) -> None:
    p.new("enc.word_emb", (vocab_size, d), "normal", scale=d ** -0.5)
    p.new("enc.seg_emb", (2, d), "normal", scale=d ** -0.5)
    p.new("enc.pos_emb", (max_len, d), "normal", scale=d ** -0.5)
    for layer in range(layers):
        new_encoder_layer(p, f"enc.doc.{layer}", d, d_ff)


def encode_document(p: Params, ids: np.ndarray, segs: np.ndarray, pad: np.ndarray,
                    n_heads: int, ctx: Ctx = EVAL) -> Tensor:
    """``h = Transformer(w, w, w)`` with token + segment + position embeddings."""
    ids = np.asarray(ids, dtype=np.int64)
    b, t = ids.shape
    if t > p["enc.pos_emb"].shape[0]:
        raise ValueError(f"sequence of length {t} exceeds position table {p['enc.pos_emb'].shape[0]}")
    x = (nd.gather(p["enc.word_emb"], ids) + nd.gather(p["enc.seg_emb"], segs)
         + p["enc.pos_emb"][:t])
    x = ctx.drop(x)
    layer = 0
    while f"enc.doc.{layer}.attn.q.w" in p:
        x = encoder_layer(p, f"enc.doc.{layer}", x, n_heads, pad, ctx)
        layer += 1
    return x
