"""Entity/relation graphs built from distant-supervision rules.

Two relation sources feed the graph: main mentions of distinct coreference
clusters that share a sentence, and entity pairs in one sentence that form a
whitelisted knowledge-base tuple. Every relation is relabelled with the single
constant :data:`RELATION`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusError, RawPair

log = logging.getLogger(__name__)

RELATION = "have relation with"
KB_WHITELIST = frozenset({"UsedFor", "CapableOf", "Causes", "CausesDesire", "Desires", "ObstructedBy"})
MIN_CLUSTER_MENTIONS = 3

DEFAULT_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before
being below between both but by can could did do does doing down during each few for
from further had has have having he her here hers herself him himself his how i if in
into is it its itself just me more most my myself no nor not now of off on once only or
other our ours ourselves out over own same she should so some such than that the their
theirs them themselves then there these they this those through to too under until up
very was we were what when where which while who whom why will with would you your
yours yourself yourselves
""".split())


@dataclass(frozen=True, order=True)
class EntitySpan:
    sent_index: int
    token_start: int
    token_end: int  # inclusive
    surface: str

    @property
    def key(self) -> str:
        return self.surface.lower()

    @property
    def n_words(self) -> int:
        return self.token_end - self.token_start + 1


@dataclass
class CorefCluster:
    mentions: list[EntitySpan]
    main_mention: int = 0

    @property
    def main(self) -> EntitySpan:
        return self.mentions[self.main_mention]

    @property
    def sentences(self) -> set[int]:
        return {m.sent_index for m in self.mentions}


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str
    source: str  # "coref_cooccur" | "kb"

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)


@dataclass
class RelationKB:
    tuples: set[tuple[str, str, str]] = field(default_factory=set)
    whitelist: frozenset[str] = KB_WHITELIST

    def __post_init__(self):
        self.tuples = {(s.lower(), r, o.lower()) for s, r, o in self.tuples if r in self.whitelist}
        self._pairs = {(s, o) for s, _, o in self.tuples}
        self._surfaces = {s for s, _, _ in self.tuples} | {o for _, _, o in self.tuples}
        self._max_words = max((len(s.split()) for s in self._surfaces), default=0)

    def related(self, a: str, b: str) -> bool:
        return (a.lower(), b.lower()) in self._pairs

    @property
    def surfaces(self) -> set[str]:
        return self._surfaces

    @property
    def max_surface_words(self) -> int:
        return self._max_words


def load_kb(path) -> RelationKB:
    """Read ``subject<TAB>relation_type<TAB>object`` lines."""
    tuples, skipped = set(), 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError("expected 3 tab-separated fields", path, lineno)
            s, r, o = parts
            if r not in KB_WHITELIST:
                skipped += 1
                continue
            tuples.add((s.strip(), r, o.strip()))
    if skipped:
        log.warning("%s: ignored %d lines with non-whitelisted relation types", path, skipped)
    return RelationKB(tuples)


# ------------------------------------------------------------------ entities


def _is_stop_span(tokens: Sequence[str], stopwords) -> bool:
    return all(t.lower() in stopwords for t in tokens)


def annotate_entities(doc: RawPair, stopwords=DEFAULT_STOPWORDS,
                      kb: RelationKB | None = None,
                      sentences: Sequence[Sequence[str]] | None = None) -> list[EntitySpan]:
    """Entity spans for ``doc``, sorted by position.

    Precomputed spans are used verbatim when present. Otherwise the built-in
    annotator emits maximal runs of capitalised tokens plus exact (lowercase)
    matches of knowledge-base surface forms. Stopword-only spans are dropped.
    """
    sents = [list(s) for s in (sentences if sentences is not None else doc.doc_tokens())]
    if doc.entities is not None:
        spans = []
        for e in doc.entities:
            si, a, b = int(e["sent"]), int(e["start"]), int(e["end"])
            if not (0 <= si < len(sents)) or not (0 <= a <= b < len(sents[si])):
                continue
            toks = sents[si][a:b + 1]
            if not _is_stop_span(toks, stopwords):
                spans.append(EntitySpan(si, a, b, " ".join(toks)))
        return spans

    found: set[EntitySpan] = set()
    for si, toks in enumerate(sents):
        i = 0
        while i < len(toks):
            if toks[i][:1].isupper():
                j = i
                while j + 1 < len(toks) and toks[j + 1][:1].isupper():
                    j += 1
                found.add(EntitySpan(si, i, j, " ".join(toks[i:j + 1])))
                i = j + 1
            else:
                i += 1
        if kb is not None and kb.surfaces:
            low = [t.lower() for t in toks]
            for n in range(1, kb.max_surface_words + 1):
                for i in range(len(low) - n + 1):
                    if " ".join(low[i:i + n]) in kb.surfaces:
                        found.add(EntitySpan(si, i, i + n - 1, " ".join(toks[i:i + n])))
    return sorted(s for s in found if not _is_stop_span(s.surface.split(), stopwords))


def _pick_main(mentions: list[EntitySpan]) -> int:
    return min(range(len(mentions)),
               key=lambda k: (mentions[k].sent_index, mentions[k].token_start, -mentions[k].n_words))


def cluster_corefs(doc: RawPair, spans: Sequence[EntitySpan]) -> list[CorefCluster]:
    """Coreference clusters with at least three mentions, ordered by main mention."""
    groups: list[list[EntitySpan]] = []
    if doc.corefs is not None and doc.entities is not None:
        # precomputed cluster indices refer to the raw entity list
        by_raw = {}
        for k, e in enumerate(doc.entities):
            for s in spans:
                if (s.sent_index, s.token_start, s.token_end) == (int(e["sent"]), int(e["start"]), int(e["end"])):
                    by_raw[k] = s
                    break
        for members in doc.corefs:
            groups.append(sorted({by_raw[k] for k in members if k in by_raw}))
    else:
        buckets: dict[str, list[EntitySpan]] = {}
        for s in spans:
            buckets.setdefault(s.key, []).append(s)
        groups = list(buckets.values())
    clusters = [CorefCluster(list(g), _pick_main(list(g)))
                for g in groups if len(g) >= MIN_CLUSTER_MENTIONS]
    clusters.sort(key=lambda c: (c.main.sent_index, c.main.token_start, -c.main.n_words))
    return clusters


# ----------------------------------------------------------------- relations


def extract_relations(doc: RawPair, spans: Sequence[EntitySpan],
                      clusters: Sequence[CorefCluster], kb: RelationKB | None) -> list[Triple]:
    triples: list[Triple] = []
    seen: set[frozenset] = set()

    def emit(a: str, b: str, source: str):
        if a == b:
            return
        key = frozenset((a, b))
        if key not in seen:
            seen.add(key)
            triples.append(Triple(a, RELATION, b, source))

    sent_sets = [c.sentences for c in clusters]
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            if sent_sets[i] & sent_sets[j]:
                emit(clusters[i].main.key, clusters[j].main.key, "coref_cooccur")

    if kb is not None and kb.tuples:
        by_sent: dict[int, list[EntitySpan]] = {}
        for s in spans:
            by_sent.setdefault(s.sent_index, []).append(s)
        for si in sorted(by_sent):
            members = by_sent[si]
            for a in members:
                for b in members:
                    if a is not b and kb.related(a.key, b.key):
                        emit(a.key, b.key, "kb")
    return triples


def filter_triples(triples: Sequence[Triple], max_arg_words: int = 10,
                   enabled: bool = True) -> list[Triple]:
    """Drop triples with an argument longer than ``max_arg_words`` words."""
    if not enabled:
        return list(triples)
    return [t for t in triples
            if len(t.subject.split()) <= max_arg_words and len(t.object.split()) <= max_arg_words]


# --------------------------------------------------------------------- graph


@dataclass
class Node:
    id: int
    surface: str
    span: EntitySpan | None = None
    freq_count: int = 0
    freq_rank: int = 0

    @property
    def tokens(self) -> list[str]:
        return self.surface.split()


@dataclass
class Edge:
    src: int
    dst: int
    relation: str = RELATION
    source: str = "coref_cooccur"


@dataclass
class SemanticGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> np.ndarray:
        """Symmetric boolean adjacency with self-loops."""
        n = len(self.nodes)
        adj = np.eye(n, dtype=bool)
        for e in self.edges:
            adj[e.src, e.dst] = adj[e.dst, e.src] = True
        return adj

    def edge_set(self) -> set[frozenset]:
        return {frozenset((self.nodes[e.src].surface, self.nodes[e.dst].surface)) for e in self.edges}

    def to_json(self) -> dict:
        nodes = []
        for n in self.nodes:
            rec = {"id": n.id, "surface": n.surface, "freq_count": n.freq_count, "freq_rank": n.freq_rank}
            if n.span is not None:
                rec["span"] = [n.span.sent_index, n.span.token_start, n.span.token_end, n.span.surface]
            nodes.append(rec)
        edges = [{"src": e.src, "dst": e.dst, "relation": e.relation, "source": e.source}
                 for e in self.edges]
        return {"nodes": nodes, "edges": edges}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, obj: dict) -> "SemanticGraph":
        nodes = []
        for rec in obj["nodes"]:
            span = EntitySpan(*rec["span"]) if rec.get("span") else None
            nodes.append(Node(rec["id"], rec["surface"], span, rec["freq_count"], rec["freq_rank"]))
        edges = [Edge(e["src"], e["dst"], e.get("relation", RELATION), e.get("source", "coref_cooccur"))
                 for e in obj["edges"]]
        return cls(nodes, edges)


def _occurrences(sent_tokens: Sequence[Sequence[str]], surface: str) -> tuple[int, int]:
    """(count, first global token position) of a lowercase token sequence."""
    needle = surface.split()
    n = len(needle)
    count, first, offset = 0, -1, 0
    for toks in sent_tokens:
        low = [t.lower() for t in toks]
        for i in range(len(low) - n + 1):
            if low[i:i + n] == needle:
                count += 1
                if first < 0:
                    first = offset + i
        offset += len(toks)
    return count, first


def rank_frequency(doc: RawPair, nodes: Sequence[Node],
                   sentences: Sequence[Sequence[str]] | None = None) -> list[Node]:
    """Set ``freq_count`` and ``freq_rank`` (count desc, first occurrence asc)."""
    sents = sentences if sentences is not None else doc.doc_tokens()
    firsts = {}
    for n in nodes:
        n.freq_count, first = _occurrences(sents, n.surface)
        firsts[n.id] = first if first >= 0 else float("inf")
    order = sorted(nodes, key=lambda n: (-n.freq_count, firsts[n.id], n.id))
    for rank, n in enumerate(order):
        n.freq_rank = rank
    return list(nodes)


@dataclass
class GraphOptions:
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    filter_triples: bool = False
    max_arg_words: int = 10


def build_graph(doc: RawPair, kb: RelationKB | None = None,
                options: GraphOptions | None = None,
                sentences: Sequence[Sequence[str]] | None = None) -> SemanticGraph:
    """Entities -> clusters -> triples -> filter -> nodes/edges -> frequency ranks.

    ``sentences`` restricts extraction to a (truncated) prefix of the document.
    """
    opts = options or GraphOptions()
    sents = [list(s) for s in (sentences if sentences is not None else doc.doc_tokens())]
    spans = annotate_entities(doc, opts.stopwords, kb, sents)
    clusters = cluster_corefs(doc, spans)
    triples = filter_triples(extract_relations(doc, spans, clusters, kb),
                             opts.max_arg_words, opts.filter_triples)

    first_span: dict[str, EntitySpan] = {}
    for s in spans:
        first_span.setdefault(s.key, s)
    for c in clusters:
        first_span[c.main.key] = min(first_span.get(c.main.key, c.main), c.main)

    surfaces = {c.main.key for c in clusters}
    for t in triples:
        surfaces.update((t.subject, t.object))
    ordered = sorted(surfaces, key=lambda k: (first_span[k].sent_index, first_span[k].token_start,
                                              -first_span[k].n_words, k))
    nodes = [Node(i, k, first_span[k]) for i, k in enumerate(ordered)]
    ids = {n.surface: n.id for n in nodes}
    edges = [Edge(ids[t.subject], ids[t.object], t.relation, t.source) for t in triples]
    rank_frequency(doc, nodes, sents)
    return SemanticGraph(nodes, edges)


def iter_graph_lines(graphs: Iterable[tuple[str, SemanticGraph]]) -> Iterable[str]:
    for pid, g in graphs:
        rec = {"id": pid, **g.to_json()}
        yield json.dumps(rec, sort_keys=True, ensure_ascii=False)


def load_graphs(path) -> dict[str, SemanticGraph]:
    path = Path(path)
    if not path.exists():
        raise CorpusError("graph file not found", path)
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[rec["id"]] = SemanticGraph.from_json(rec)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"bad graph record ({exc})", path, lineno) from None
    return out
