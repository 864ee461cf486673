"""Parameter store and transformer/LSTM building blocks on top of ndgrad.

All blocks are functions of ``(params, prefix, ...)`` and operate on
batch-major tensors: sequences are ``[B, T, d]``.
"""
from __future__ import annotations

import math
from collections.abc import Iterator, MutableMapping

import numpy as np

from . import ndgrad as nd
from .ndgrad import Tensor

NEG_INF = -np.inf


class Params(MutableMapping):
    """Named trainable tensors; the name prefix (``enc.``/``dec.``) is the optimizer group."""

    def __init__(self, seed: int = 0):
        self._t: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)
        self.frozen: set[str] = set()

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        self._t[name] = value

    def __delitem__(self, name: str) -> None:
        del self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def new(self, name: str, shape, init: str = "xavier", scale: float = 0.02,
            trainable: bool = True) -> Tensor:
        if name in self._t:
            raise KeyError(f"duplicate parameter {name}")
        shape = tuple(int(s) for s in shape)
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "normal":
            data = self.rng.normal(0.0, scale, shape)
        elif init == "xavier":
            fan_in, fan_out = (shape[0], shape[-1]) if len(shape) > 1 else (shape[0], shape[0])
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-lim, lim, shape)
        else:
            raise ValueError(init)
        t = Tensor(data, requires_grad=trainable, name=name)
        self._t[name] = t
        if not trainable:
            self.frozen.add(name)
        return t

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self._t.items() if k not in self.frozen}

    def group(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.trainable().items() if k.startswith(prefix + ".")}

    def n_values(self) -> int:
        return sum(t.size for t in self._t.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._t.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._t) - set(arrays)
        extra = set(arrays) - set(self._t)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, arr in arrays.items():
            if arr.shape != self._t[k].shape:
                raise ValueError(f"{k}: shape {arr.shape} != {self._t[k].shape}")
            self._t[k].data = np.array(arr, dtype=np.float64)

    def zero_grad(self) -> None:
        for t in self._t.values():
            t.grad = None


class Ctx:
    """Per-forward settings: train flag and the dropout generator."""

    def __init__(self, train: bool = False, dropout: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.train = train
        self.p = dropout
        self.rng = rng

    def drop(self, x: Tensor) -> Tensor:
        return nd.dropout(x, self.p, self.rng, self.train)


EVAL = Ctx()


# ------------------------------------------------------------------ creation


def new_linear(p: Params, prefix: str, d_in: int, d_out: int, bias: bool = True) -> None:
    p.new(prefix + ".w", (d_in, d_out))
    if bias:
        p.new(prefix + ".b", (d_out,), "zeros")


def new_norm(p: Params, prefix: str, d: int) -> None:
    p.new(prefix + ".gain", (d,), "ones")
    p.new(prefix + ".bias", (d,), "zeros")


def new_ffn(p: Params, prefix: str, d: int, d_ff: int) -> None:
    new_linear(p, prefix + ".l1", d, d_ff)
    new_linear(p, prefix + ".l2", d_ff, d)


def new_attention(p: Params, prefix: str, d: int) -> None:
    for k in ("q", "k", "v", "o"):
        new_linear(p, f"{prefix}.{k}", d, d)


def new_encoder_layer(p: Params, prefix: str, d: int, d_ff: int) -> None:
    new_attention(p, prefix + ".attn", d)
    new_norm(p, prefix + ".ln1", d)
    new_ffn(p, prefix + ".ffn", d, d_ff)
    new_norm(p, prefix + ".ln2", d)


def new_lstm(p: Params, prefix: str, d_in: int, hidden: int) -> None:
    p.new(prefix + ".wx", (d_in, 4 * hidden))
    p.new(prefix + ".wh", (hidden, 4 * hidden))
    b = p.new(prefix + ".b", (4 * hidden,), "zeros")
    b.data[hidden:2 * hidden] = 1.0  # forget-gate bias


# ------------------------------------------------------------------- forward


def linear(p: Params, prefix: str, x: Tensor) -> Tensor:
    y = x @ p[prefix + ".w"]
    b = p.get(prefix + ".b")
    return y if b is None else y + b


def norm(p: Params, prefix: str, x: Tensor) -> Tensor:
    return nd.layer_norm(x, p[prefix + ".gain"], p[prefix + ".bias"])


def ffn(p: Params, prefix: str, x: Tensor, ctx: Ctx = EVAL) -> Tensor:
    hid = nd.relu(linear(p, prefix + ".l1", ctx.drop(x)))
    return linear(p, prefix + ".l2", ctx.drop(hid))


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def merge_heads(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def causal_mask(t: int) -> np.ndarray:
    """True above the diagonal: query i may not see key j > i."""
    return np.triu(np.ones((t, t), dtype=bool), k=1)


def token_independent_attend(q: Tensor, k: Tensor, v: Tensor, g: Tensor | None,
                             mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """``softmax(q k^T / sqrt(d_k)) v + g v`` with masked keys removed from both terms.

    ``g`` is the token-independent weight matrix already sliced to
    ``[T_q, T_k]``; the summed weights are deliberately not renormalised.
    Returns ``(output, softmax weights)``.
    """
    dk = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) / math.sqrt(dk)
    if mask is not None:
        scores = nd.masked_fill(scores, mask, NEG_INF)
    w = nd.softmax(scores, axis=-1)
    out = w @ v
    if g is not None:
        if mask is not None:
            g = nd.masked_fill(g, mask, 0.0)
        out = out + g @ v
    return out, w


def attention(p: Params, prefix: str, q_in: Tensor, kv_in: Tensor, n_heads: int,
              mask: np.ndarray | None = None, g: Tensor | None = None,
              ctx: Ctx = EVAL) -> tuple[Tensor, Tensor]:
    """Multi-head attention. ``mask`` broadcasts to ``[B, H, T_q, T_k]``, True = blocked."""
    q = split_heads(linear(p, prefix + ".q", q_in), n_heads)
    k = split_heads(linear(p, prefix + ".k", kv_in), n_heads)
    v = split_heads(linear(p, prefix + ".v", kv_in), n_heads)
    out, w = token_independent_attend(q, k, v, g, mask)
    return linear(p, prefix + ".o", ctx.drop(merge_heads(out))), w


def encoder_layer(p: Params, prefix: str, x: Tensor, n_heads: int,
                  key_pad: np.ndarray | None, ctx: Ctx = EVAL) -> Tensor:
    """Post-LN self-attention block; ``key_pad`` is ``[B, T]`` with True at padding."""
    mask = None if key_pad is None else key_pad[:, None, None, :]
    a, _ = attention(p, prefix + ".attn", x, x, n_heads, mask, ctx=ctx)
    x = norm(p, prefix + ".ln1", x + ctx.drop(a))
    return norm(p, prefix + ".ln2", x + ctx.drop(ffn(p, prefix + ".ffn", x, ctx)))


def lstm_layer(p: Params, prefix: str, x: Tensor, step_mask: np.ndarray,
               reverse: bool = False) -> Tensor:
    """Unidirectional LSTM over ``x: [M, L, d_in]``, gates ordered (i, f, g, o).

    Where ``step_mask[m, t]`` is False the state is carried through unchanged,
    so right-padding never disturbs real positions in either direction.
    Returns per-position hidden outputs ``[M, L, hidden]``.
    """
    m, L, _ = x.shape
    hidden = p[prefix + ".wh"].shape[0]
    xw = x @ p[prefix + ".wx"] + p[prefix + ".b"]
    wh = p[prefix + ".wh"]
    h = Tensor(np.zeros((m, hidden)))
    c = Tensor(np.zeros((m, hidden)))
    outs: list[Tensor | None] = [None] * L
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        z = xw[:, t, :] + h @ wh
        i = nd.sigmoid(z[:, :hidden])
        f = nd.sigmoid(z[:, hidden:2 * hidden])
        gt = nd.tanh(z[:, 2 * hidden:3 * hidden])
        o = nd.sigmoid(z[:, 3 * hidden:])
        c_new = f * c + i * gt
        h_new = o * nd.tanh(c_new)
        keep = step_mask[:, t:t + 1].astype(np.float64)
        if keep.all():
            c, h = c_new, h_new
        else:
            # exact select: x*1 + y*0 == x in floating point
            c = c_new * keep + c * (1.0 - keep)
            h = h_new * keep + h * (1.0 - keep)
        outs[t] = h
    return nd.stack(outs, axis=1)
