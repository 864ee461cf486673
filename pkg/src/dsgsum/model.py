"""Model configuration, example batching and the full forward pass."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import decoder as dec
from . import encoder as enc
from . import ndgrad as nd
from .corpus import (
    CLS_ID,
    PAD_ID,
    SEP_ID,
    EncodedDoc,
    RawPair,
    Vocab,
    encode_document,
    encode_summary,
    frame_sentences,
)
from .graph import Edge, GraphOptions, Node, RelationKB, SemanticGraph, build_graph
from .layers import EVAL, Ctx, Params
from .ndgrad import Tensor

ABLATION_FLAGS = ("use_gat", "use_context2entity", "use_fe", "use_entity2context",
                  "use_token_independent", "use_copy", "use_graph_cross_attend")


@dataclass
class ModelConfig:
    vocab_size: int = 0
    d_model: int = 768
    n_heads: int = 4
    d_ff: int = 2048
    enc_layers: int = 2
    dec_layers: int = 2
    lstm_hidden: int = 384
    lstm_layers: int = 2
    gat_layers: int = 3
    gat_heads: int = 4
    max_src_len: int = 512
    max_tgt_len: int = 64
    max_entities: int = 128
    dropout: float = 0.2
    use_gat: bool = True
    use_context2entity: bool = True
    use_fe: bool = True
    use_entity2context: bool = False
    use_token_independent: bool = False
    token_independent_trainable: bool = True
    use_copy: bool = False
    use_graph_cross_attend: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.use_graph_cross_attend and self.use_context2entity:
            raise ValueError("use_graph_cross_attend and use_context2entity are mutually exclusive")
        if self.use_entity2context and not self.use_context2entity:
            raise ValueError("use_entity2context needs use_context2entity")
        if self.d_model % self.n_heads or self.d_model % self.gat_heads:
            raise ValueError("d_model must be divisible by n_heads and gat_heads")

    @property
    def uses_graph(self) -> bool:
        return self.use_context2entity or self.use_graph_cross_attend

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**obj)


# ------------------------------------------------------------------ examples


@dataclass
class Example:
    id: str
    doc: EncodedDoc
    target: list[int] | None
    graph: SemanticGraph
    node_tokens: list[list[int]] = field(default_factory=list)


def cap_graph(graph: SemanticGraph, max_nodes: int) -> SemanticGraph:
    """Keep the ``max_nodes`` most frequent nodes, renumbering ids densely."""
    if len(graph.nodes) <= max_nodes:
        return graph
    keep = sorted((n for n in graph.nodes if n.freq_rank < max_nodes), key=lambda n: n.id)
    remap = {n.id: i for i, n in enumerate(keep)}
    nodes = [Node(remap[n.id], n.surface, n.span, n.freq_count, n.freq_rank) for n in keep]
    edges = [Edge(remap[e.src], remap[e.dst], e.relation, e.source)
             for e in graph.edges if e.src in remap and e.dst in remap]
    return SemanticGraph(nodes, edges)


def make_example(pair: RawPair, vocab: Vocab, cfg: ModelConfig, kb: RelationKB | None = None,
                 graph: SemanticGraph | None = None, options: GraphOptions | None = None,
                 with_target: bool = True) -> Example:
    doc = encode_document(pair, vocab, cfg.max_src_len)
    if graph is None:
        kept = frame_sentences(pair.doc_tokens(), cfg.max_src_len)
        graph = build_graph(pair, kb, options, sentences=kept)
    graph = cap_graph(graph, cfg.max_entities)
    target = encode_summary(pair, vocab, cfg.max_tgt_len) if with_target else None
    node_tokens = [vocab.ids(n.tokens) or [PAD_ID] for n in graph.nodes]
    return Example(pair.id, doc, target, graph, node_tokens)


@dataclass
class Batch:
    ids: list[str]
    src: np.ndarray
    seg: np.ndarray
    src_pad: np.ndarray
    ent_ids: np.ndarray
    ent_len: np.ndarray
    ent_rank: np.ndarray
    node_pad: np.ndarray
    adj: np.ndarray
    has_graph: np.ndarray
    copy_ids: np.ndarray
    copy_pad: np.ndarray
    copyable: np.ndarray
    tgt_in: np.ndarray | None = None
    tgt_out: np.ndarray | None = None
    tgt_mask: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)


def _entity_text(node_tokens: Sequence[Sequence[int]], max_len: int) -> tuple[list[int], list[bool]]:
    ids, copyable = [CLS_ID], [False]
    for toks in node_tokens:
        if len(ids) + len(toks) + 1 > max_len:
            break
        ids.extend(toks)
        copyable.extend(t != PAD_ID for t in toks)
        ids.append(SEP_ID)
        copyable.append(False)
    if len(ids) == 1:
        ids.append(SEP_ID)
        copyable.append(False)
    return ids, copyable


def collate(examples: Sequence[Example], max_src_len: int = 512) -> Batch:
    b = len(examples)
    s = max(len(ex.doc) for ex in examples)
    src = np.full((b, s), PAD_ID, dtype=np.int64)
    seg = np.zeros((b, s), dtype=np.int64)
    for k, ex in enumerate(examples):
        src[k, : len(ex.doc)] = ex.doc.token_ids
        seg[k, : len(ex.doc)] = ex.doc.segment_ids
    src_pad = src == PAD_ID

    n = max(1, max(len(ex.graph.nodes) for ex in examples))
    L = max([1] + [len(t) for ex in examples for t in ex.node_tokens])
    ent_ids = np.full((b, n, L), PAD_ID, dtype=np.int64)
    ent_len = np.ones((b, n), dtype=np.int64)
    ent_rank = np.zeros((b, n), dtype=np.int64)
    node_pad = np.ones((b, n), dtype=bool)
    adj = np.broadcast_to(np.eye(n, dtype=bool), (b, n, n)).copy()
    has_graph = np.zeros(b, dtype=bool)
    texts = []
    for k, ex in enumerate(examples):
        g = ex.graph
        has_graph[k] = len(g.nodes) > 0
        node_pad[k, : max(1, len(g.nodes))] = False
        for node, toks in zip(g.nodes, ex.node_tokens):
            ent_ids[k, node.id, : len(toks)] = toks
            ent_len[k, node.id] = len(toks)
            ent_rank[k, node.id] = node.freq_rank
        for e in g.edges:
            adj[k, e.src, e.dst] = adj[k, e.dst, e.src] = True
        texts.append(_entity_text(ex.node_tokens, max_src_len))
    tc = max(len(t[0]) for t in texts)
    copy_ids = np.full((b, tc), PAD_ID, dtype=np.int64)
    copyable = np.zeros((b, tc), dtype=bool)
    for k, (ids, cp) in enumerate(texts):
        copy_ids[k, : len(ids)] = ids
        copyable[k, : len(cp)] = cp

    batch = Batch([ex.id for ex in examples], src, seg, src_pad, ent_ids, ent_len, ent_rank,
                  node_pad, adj, has_graph, copy_ids, copy_ids == PAD_ID, copyable)
    if all(ex.target is not None for ex in examples):
        t = max(len(ex.target) for ex in examples) - 1
        tgt_in = np.full((b, t), PAD_ID, dtype=np.int64)
        tgt_out = np.full((b, t), PAD_ID, dtype=np.int64)
        for k, ex in enumerate(examples):
            tgt_in[k, : len(ex.target) - 1] = ex.target[:-1]
            tgt_out[k, : len(ex.target) - 1] = ex.target[1:]
        batch.tgt_in, batch.tgt_out, batch.tgt_mask = tgt_in, tgt_out, tgt_out != PAD_ID
    return batch


# --------------------------------------------------------------------- model


@dataclass
class EncoderState:
    h: Tensor
    src_pad: np.ndarray
    g: Tensor | None
    node_pad: np.ndarray
    c: Tensor | None
    copy_ids: np.ndarray
    copyable: np.ndarray

    def repeat(self, k: int) -> "EncoderState":
        """Tile a single-example state ``k`` times (inference only)."""
        r = lambda a: np.repeat(a, k, axis=0)
        return EncoderState(Tensor(r(self.h.data)), r(self.src_pad),
                            None if self.g is None else Tensor(r(self.g.data)), r(self.node_pad),
                            None if self.c is None else Tensor(r(self.c.data)),
                            r(self.copy_ids), r(self.copyable))


class DSGSum:
    """Graph-augmented encoder-decoder summariser."""

    def __init__(self, cfg: ModelConfig):
        if cfg.vocab_size < 7:
            raise ValueError("vocab_size must cover the reserved tokens plus one")
        self.cfg = cfg
        p = self.params = Params(cfg.seed)
        d = cfg.d_model
        enc.new_document_encoder(p, cfg.vocab_size, d, cfg.d_ff, cfg.enc_layers, cfg.max_src_len)
        if cfg.uses_graph:
            enc.new_span_encoder(p, d, cfg.lstm_hidden, cfg.lstm_layers, d)
            if cfg.use_fe:
                p.new("enc.fe", (cfg.max_entities, d), "normal", scale=d ** -0.5)
            if cfg.use_gat:
                for layer in range(cfg.gat_layers):
                    enc.new_gat_layer(p, f"enc.gat.{layer}", d, cfg.gat_heads, cfg.d_ff)
            p.new("enc.null_node", (d,), "normal", scale=d ** -0.5)
        p.new("dec.pos_emb", (cfg.max_tgt_len + 2, d), "normal", scale=d ** -0.5)
        for layer in range(cfg.dec_layers):
            dec.new_decoder_layer(p, f"dec.layer.{layer}", d, cfg.d_ff)
        if cfg.use_token_independent:
            dec.new_global_weights(p, cfg.max_tgt_len + 2, cfg.max_src_len,
                                   cfg.token_independent_trainable)
        if cfg.use_context2entity:
            dec.new_context2entity(p, d, cfg.use_entity2context)
        if cfg.use_graph_cross_attend:
            dec.new_graph_cross(p, d)
        p.new("dec.out.w", (d, cfg.vocab_size))
        if cfg.use_copy:
            dec.new_copy_head(p, d)

    # ---------------------------------------------------------------- passes

    def ctx(self, train: bool, rng: np.random.Generator | None = None) -> Ctx:
        return Ctx(train, self.cfg.dropout, rng) if train else EVAL

    def encode(self, batch: Batch, ctx: Ctx = EVAL) -> EncoderState:
        p, cfg = self.params, self.cfg
        h = enc.encode_document(p, batch.src, batch.seg, batch.src_pad, cfg.n_heads, ctx)
        g = None
        if cfg.uses_graph:
            g = enc.encode_graph(p, p["enc.word_emb"], batch, cfg.gat_heads, ctx)
        c = None
        if cfg.use_copy:
            c = enc.encode_document(p, batch.copy_ids, np.zeros_like(batch.copy_ids),
                                    batch.copy_pad, cfg.n_heads, ctx)
        return EncoderState(h, batch.src_pad, g, batch.node_pad, c, batch.copy_ids, batch.copyable)

    def decoder_states(self, state: EncoderState, tgt_in: np.ndarray, ctx: Ctx = EVAL) -> Tensor:
        """Transformer decoder output ``s`` before any graph fusion."""
        p = self.params
        tgt_in = np.asarray(tgt_in, dtype=np.int64)
        t = tgt_in.shape[1]
        if t > p["dec.pos_emb"].shape[0]:
            raise ValueError(f"target length {t} exceeds decoder position table")
        w_d = ctx.drop(nd.gather(p["enc.word_emb"], tgt_in) + p["dec.pos_emb"][:t])
        return dec.transformer_decode(p, w_d, state.h, state.src_pad, self.cfg.n_heads, ctx)

    def fuse(self, state: EncoderState, s: Tensor, ctx: Ctx = EVAL) -> Tensor:
        p, cfg = self.params, self.cfg
        if cfg.use_context2entity:
            m = dec.context2entity_similarity(s, state.g, p["dec.c2e.ws"], p["dec.c2e.wg"],
                                              p["dec.c2e.wsg"])
            _, g_tilde = dec.context2entity_attend(m, state.g, state.node_pad)
            s_tilde = None
            if cfg.use_entity2context:
                s_tilde = dec.entity2context_attend(m, s, state.node_pad)
            return dec.fuse_graph_state(s, g_tilde, p["dec.c2e.wG"], s_tilde)
        if cfg.use_graph_cross_attend:
            s_g, _ = dec.graph_cross_attend(p, s, state.g, state.node_pad, cfg.n_heads, ctx)
            return s_g
        return s

    def decode(self, state: EncoderState, tgt_in: np.ndarray, ctx: Ctx = EVAL) -> Tensor:
        """Output distribution ``[B, T, V]`` for teacher-forced inputs."""
        s = self.decoder_states(state, tgt_in, ctx)
        s_g = self.fuse(state, s, ctx)
        probs = dec.project_vocab(ctx.drop(s_g), self.params["dec.out.w"])
        if self.cfg.use_copy:
            probs, _ = dec.copy_distribution(self.params, s_g, state.c, state.copy_ids,
                                             state.copyable, probs)
        return probs

    def forward(self, batch: Batch, ctx: Ctx = EVAL) -> Tensor:
        return self.decode(self.encode(batch, ctx), batch.tgt_in, ctx)

    # ----------------------------------------------------------- bookkeeping

    def n_parameters(self) -> int:
        return self.params.n_values()

    def groups(self) -> dict[str, dict[str, Tensor]]:
        return {"encoder": self.params.group("enc"), "decoder": self.params.group("dec")}
