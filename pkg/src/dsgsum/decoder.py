"""Transformer decoder with context-to-entity fusion and the optional variants.

Variants, each behind a config flag: entity-to-context attention, a
token-independent global weight matrix in cross-attention, a pointer-generator
copy head over entity tokens, and plain cross-attention over graph nodes in
place of the context-to-entity path.
"""
from __future__ import annotations

import numpy as np

from . import ndgrad as nd
from .corpus import PAD_ID
from .layers import (
    EVAL,
    NEG_INF,
    Ctx,
    Params,
    attention,
    causal_mask,
    ffn,
    new_attention,
    new_ffn,
    new_norm,
    norm,
)
from .ndgrad import Tensor


def new_decoder_layer(p: Params, prefix: str, d: int, d_ff: int) -> None:
    new_attention(p, prefix + ".self", d)
    new_norm(p, prefix + ".ln1", d)
    new_attention(p, prefix + ".cross", d)
    new_norm(p, prefix + ".ln2", d)
    new_ffn(p, prefix + ".ffn", d, d_ff)
    new_norm(p, prefix + ".ln3", d)


def decode_self_attend(p: Params, prefix: str, w_d: Tensor, n_heads: int,
                       ctx: Ctx = EVAL) -> tuple[Tensor, Tensor]:
    """Causally masked self-attention sub-layer -> ``(s_d, weights)``."""
    t = w_d.shape[1]
    a, w = attention(p, prefix + ".self", w_d, w_d, n_heads, causal_mask(t)[None, None], ctx=ctx)
    return norm(p, prefix + ".ln1", w_d + ctx.drop(a)), w


def cross_attend(p: Params, prefix: str, s_d: Tensor, h: Tensor, src_pad: np.ndarray,
                 n_heads: int, g_global: Tensor | None = None,
                 ctx: Ctx = EVAL) -> tuple[Tensor, Tensor]:
    """Attention over non-pad source positions, then the feed-forward sub-layer."""
    if g_global is not None:
        g_global = g_global[: s_d.shape[1], : h.shape[1]]
    a, w = attention(p, prefix + ".cross", s_d, h, n_heads, src_pad[:, None, None, :],
                     g=g_global, ctx=ctx)
    s = norm(p, prefix + ".ln2", s_d + ctx.drop(a))
    return norm(p, prefix + ".ln3", s + ctx.drop(ffn(p, prefix + ".ffn", s, ctx))), w


def transformer_decode(p: Params, w_d: Tensor, h: Tensor, src_pad: np.ndarray,
                       n_heads: int, ctx: Ctx = EVAL) -> Tensor:
    s = w_d
    g_global = p.get("dec.global_g")
    layer = 0
    while f"dec.layer.{layer}.self.q.w" in p:
        s, _ = decode_self_attend(p, f"dec.layer.{layer}", s, n_heads, ctx)
        s, _ = cross_attend(p, f"dec.layer.{layer}", s, h, src_pad, n_heads, g_global, ctx)
        layer += 1
    return s


# ----------------------------------------------------------- context2entity


def new_context2entity(p: Params, d: int, entity2context: bool = False) -> None:
    p.new("dec.c2e.ws", (d, 1))
    p.new("dec.c2e.wg", (d, 1))
    p.new("dec.c2e.wsg", (d,), "xavier")
    p.new("dec.c2e.wG", ((4 if entity2context else 3) * d, d))


def context2entity_similarity(s: Tensor, g: Tensor, ws: Tensor, wg: Tensor,
                              wsg: Tensor) -> Tensor:
    """``M[t, i] = ws.s_t + wg.g_i + wsg.(s_t * g_i)`` -> ``[B, T, I]``."""
    return (s @ ws) + (g @ wg).swapaxes(-1, -2) + (s * wsg) @ g.swapaxes(-1, -2)


def context2entity_attend(m: Tensor, g: Tensor,
                          node_pad: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Row softmax of ``M`` over (non-pad) entities and the mixed entity vectors."""
    if node_pad is not None:
        m = nd.masked_fill(m, node_pad[:, None, :], NEG_INF)
    a = nd.softmax(m, axis=-1)
    return a, a @ g


def fuse_graph_state(s: Tensor, g_tilde: Tensor, w_fuse: Tensor,
                     s_tilde: Tensor | None = None) -> Tensor:
    """``s_g = W_G [s; g~; s*g~]`` (plus ``s*s~`` with entity-to-context)."""
    parts = [s, g_tilde, s * g_tilde]
    if s_tilde is not None:
        parts.append(s * s_tilde)
    return nd.concat(parts, axis=-1) @ w_fuse


def entity2context_attend(m: Tensor, s: Tensor, node_pad: np.ndarray | None = None) -> Tensor:
    """``s~_t = sum_{i<=t} b_i s_i`` with ``b = softmax(max_col M[:t])``.

    Each step only sees the decoder states up to itself.
    """
    if node_pad is not None:
        m = nd.masked_fill(m, node_pad[:, None, :], NEG_INF)
    best = nd.max_(m, axis=-1)  # [B, T]
    b, t = best.shape
    scores = best.reshape(b, 1, t) + np.zeros((1, t, 1))
    weights = nd.softmax(nd.masked_fill(scores, causal_mask(t)[None], NEG_INF), axis=-1)
    return weights @ s


def new_graph_cross(p: Params, d: int) -> None:
    new_attention(p, "dec.gx.attn", d)
    new_norm(p, "dec.gx.ln", d)


def graph_cross_attend(p: Params, s: Tensor, g: Tensor, node_pad: np.ndarray, n_heads: int,
                       ctx: Ctx = EVAL) -> tuple[Tensor, Tensor]:
    """``s_g = Transformer(s, g, g)``: one residual cross-attention block over nodes."""
    a, w = attention(p, "dec.gx.attn", s, g, n_heads, node_pad[:, None, None, :], ctx=ctx)
    return norm(p, "dec.gx.ln", s + ctx.drop(a)), w


# ----------------------------------------------------------------- output


def project_vocab(s_g: Tensor, w_out: Tensor) -> Tensor:
    """``softmax(W_P s_g)`` with the [PAD] logit removed."""
    logits = s_g @ w_out
    pad = np.zeros(w_out.shape[-1], dtype=bool)
    pad[PAD_ID] = True
    return nd.softmax(nd.masked_fill(logits, pad, NEG_INF), axis=-1)


def new_copy_head(p: Params, d: int) -> None:
    p.new("dec.copy.wc_s", (d, 1))
    p.new("dec.copy.wc_c", (d, 1))
    p.new("dec.copy.wg", (d, 1))
    p.new("dec.copy.wcc", (d, 1))
    p.new("dec.copy.bgen", (1,), "zeros")


def copy_distribution(p: Params, s_g: Tensor, c: Tensor, c_ids: np.ndarray,
                      copyable: np.ndarray, p_vocab: Tensor,
                      p_gen_override: float | None = None) -> tuple[Tensor, Tensor]:
    """Pointer-generator mix of ``p_vocab`` and a copy distribution over entity tokens.

    ``beta_t^i = W_c [s_g_t; c_i]``; the copy context fed to the switch is the
    copy-weighted mean of the entity-token encodings. Rows with no copyable
    token fall back to ``p_vocab``. Returns ``(final, p_gen)``.
    """
    b, tc = c_ids.shape
    v = p_vocab.shape[-1]
    copyable = np.asarray(copyable, dtype=bool)
    has_copy = copyable.any(axis=1)
    keys = copyable.copy()
    keys[~has_copy, 0] = True  # keeps the softmax defined; masked out below
    beta = (s_g @ p["dec.copy.wc_s"]) + (c @ p["dec.copy.wc_c"]).swapaxes(-1, -2)
    p_copy = nd.softmax(nd.masked_fill(beta, ~keys[:, None, :], NEG_INF), axis=-1)
    if p_gen_override is None:
        ctx_vec = p_copy @ c
        p_gen = nd.sigmoid(s_g @ p["dec.copy.wg"] + ctx_vec @ p["dec.copy.wcc"] + p["dec.copy.bgen"])
    else:
        p_gen = nd.Tensor(np.full(s_g.shape[:-1] + (1,), float(p_gen_override)))
    onehot = np.zeros((b, tc, v))
    onehot[np.arange(b)[:, None], np.arange(tc)[None, :], np.asarray(c_ids, dtype=np.int64)] = 1.0
    onehot *= keys[:, :, None]
    # examples without entity tokens: the switch is pinned to 1
    gate = has_copy.astype(np.float64)[:, None, None]
    p_gen = p_gen * gate + (1.0 - gate)
    final = p_gen * p_vocab + (1.0 - p_gen) * (p_copy @ onehot)
    return final, p_gen


def new_global_weights(p: Params, t_max: int, s_max: int, trainable: bool = True) -> None:
    p.new("dec.global_g", (t_max, s_max), "normal", scale=0.02, trainable=trainable)
