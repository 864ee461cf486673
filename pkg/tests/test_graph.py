import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgsum.corpus import CorpusError, RawPair
from dsgsum.graph import (
    DEFAULT_STOPWORDS,
    MIN_CLUSTER_MENTIONS,
    RELATION,
    EntitySpan,
    GraphOptions,
    Node,
    RelationKB,
    SemanticGraph,
    Triple,
    annotate_entities,
    build_graph,
    cluster_corefs,
    extract_relations,
    filter_triples,
    iter_graph_lines,
    load_graphs,
    load_kb,
    rank_frequency,
)
from oracles import KB_NOISE, KB_TUPLES, oracle_edges, random_doc

HAWKINS = RawPair("h", [
    "David Hawkins joined Baylor University in May .",
    "David Hawkins said David Hawkins liked Baylor University .",
    "fans at Baylor University cheered .",
], [])


def test_capitalised_runs():
    doc = RawPair("d", ["Barack Obama visited the White House"], [])
    assert [s.surface for s in annotate_entities(doc)] == ["Barack Obama", "White House"]
    assert annotate_entities(RawPair("e", [""], [])) == []


def test_precomputed_stopword_span_dropped():
    doc = RawPair("d", ["the cat sat"], [], entities=[{"sent": 0, "start": 0, "end": 0},
                                                       {"sent": 0, "start": 1, "end": 1}])
    assert [s.surface for s in annotate_entities(doc, stopwords={"the"})] == ["cat"]


def test_cluster_size_filter():
    three = RawPair("d", ["Obama spoke .", "Obama ate .", "then Obama left ."], [])
    clusters = cluster_corefs(three, annotate_entities(three))
    assert len(clusters) == 1 and len(clusters[0].mentions) == 3
    two = RawPair("d", ["Obama spoke .", "Obama ate ."], [])
    assert cluster_corefs(two, annotate_entities(two)) == []


def test_precomputed_clusters():
    ents = [{"sent": 0, "start": 0, "end": 0}, {"sent": 1, "start": 0, "end": 0},
            {"sent": 2, "start": 0, "end": 0}, {"sent": 0, "start": 2, "end": 2},
            {"sent": 1, "start": 2, "end": 2}]
    doc = RawPair("d", ["he met her", "he saw her", "he left"], [], ents, [[0, 1, 2], [3, 4]])
    clusters = cluster_corefs(doc, annotate_entities(doc, stopwords=set()))
    assert len(clusters) == 1 and len(clusters[0].mentions) == 3


def test_main_mention_is_earliest():
    doc = RawPair("d", ["x Obama", "Obama y", "Obama"], [])
    c = cluster_corefs(doc, annotate_entities(doc))[0]
    assert (c.main.sent_index, c.main.token_start) == (0, 1)


def test_hawkins_baylor_triple():
    g = build_graph(HAWKINS)
    assert frozenset(("david hawkins", "baylor university")) in g.edge_set()
    spans = annotate_entities(HAWKINS)
    triples = extract_relations(HAWKINS, spans, cluster_corefs(HAWKINS, spans), None)
    assert triples[0].as_tuple() == ("david hawkins", RELATION, "baylor university")


def test_kb_triple_and_negative_case():
    kb = RelationKB({("knife", "CapableOf", "cut")})
    doc = RawPair("d", ["the knife can cut bread"], [])
    spans = annotate_entities(doc, kb=kb)
    t = extract_relations(doc, spans, [], kb)
    assert [x.as_tuple() for x in t] == [("knife", RELATION, "cut")] and t[0].source == "kb"
    apart = RawPair("d", ["the knife is here", "we cut bread"], [])
    spans = annotate_entities(apart, kb=kb)
    assert extract_relations(apart, spans, cluster_corefs(apart, spans), kb) == []


def test_kb_whitelist(tmp_path, caplog):
    kb = RelationKB({("a", "IsA", "b"), ("c", "Causes", "d")})
    assert kb.tuples == {("c", "Causes", "d")}
    path = tmp_path / "kb.tsv"
    path.write_text("a\tIsA\tb\nfire\tCauses\theat\n# comment\n")
    with caplog.at_level(logging.WARNING):
        loaded = load_kb(path)
    assert loaded.tuples == {("fire", "Causes", "heat")}
    assert "non-whitelisted" in caplog.text
    path.write_text("only two\tfields\n")
    with pytest.raises(CorpusError):
        load_kb(path)


def test_filter_triples_lengths():
    ten, eleven = " ".join(["w"] * 10), " ".join(["w"] * 11)
    ts = [Triple(ten, RELATION, "x", "kb"), Triple("x", RELATION, eleven, "kb")]
    assert filter_triples(ts, 10, True) == [ts[0]]
    assert filter_triples(ts, 10, False) == ts


def test_rank_frequency_rules():
    doc = RawPair("d", ["X y X", "y X"], [])
    nodes = rank_frequency(doc, [Node(0, "y"), Node(1, "x")])
    assert {n.surface: n.freq_rank for n in nodes} == {"x": 0, "y": 1}
    doc = RawPair("d", ["X y", "y X"], [])
    nodes = rank_frequency(doc, [Node(0, "y"), Node(1, "x")])
    assert {n.surface: n.freq_rank for n in nodes} == {"x": 0, "y": 1}
    assert rank_frequency(doc, [Node(0, "x")])[0].freq_rank == 0


def test_empty_graph_and_json_round_trip(tmp_path):
    g = build_graph(RawPair("e", ["nothing here"], []))
    assert len(g.nodes) == 0 and len(g.edges) == 0
    g = build_graph(HAWKINS)
    again = SemanticGraph.from_json(g.to_json())
    assert again.dumps() == g.dumps() and again.edge_set() == g.edge_set()
    path = tmp_path / "g.jsonl"
    path.write_text("\n".join(iter_graph_lines([("h", g)])) + "\n")
    assert load_graphs(path)["h"].dumps() == g.dumps()
    path.write_text("{bad\n")
    with pytest.raises(CorpusError):
        load_graphs(path)


def test_adjacency_symmetric_with_self_loops():
    adj = build_graph(HAWKINS).adjacency()
    assert (adj == adj.T).all() and adj.diagonal().all()


def test_graph_restricted_to_kept_sentences():
    sents = [s.split() for s in HAWKINS.document[:1]]
    assert len(build_graph(HAWKINS, sentences=sents).nodes) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_graph_invariants(seed):
    rng = np.random.default_rng(seed)
    doc = RawPair("r", random_doc(rng), [])
    kb = RelationKB(KB_TUPLES | KB_NOISE)
    g = build_graph(doc, kb)
    assert all(e.relation == RELATION for e in g.edges)
    spans = annotate_entities(doc, kb=kb)
    assert all(len(c.mentions) >= MIN_CLUSTER_MENTIONS for c in cluster_corefs(doc, spans))
    assert build_graph(doc, kb).dumps() == g.dumps()
    ranks = sorted(n.freq_rank for n in g.nodes)
    assert ranks == list(range(len(g.nodes)))


def test_edges_match_brute_force_oracle():
    rng = np.random.default_rng(2024)
    kb = RelationKB(KB_TUPLES | KB_NOISE)
    for _ in range(200):
        sents = random_doc(rng)
        g = build_graph(RawPair("r", sents, []), kb)
        assert g.edge_set() == oracle_edges(sents)


def test_options_stopwords_and_filter():
    doc = RawPair("d", ["Zed met Yan .", "Zed saw Yan .", "Zed and Yan ."], [])
    assert len(build_graph(doc).edges) == 1
    g = build_graph(doc, options=GraphOptions(stopwords=DEFAULT_STOPWORDS | {"zed"}))
    assert [n.surface for n in g.nodes] == ["yan"]
    assert EntitySpan(0, 0, 1, "a b").n_words == 2
