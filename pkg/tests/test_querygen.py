"""Keyword extraction, variant expansion and query rendering."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erd import querygen
from erd.querygen import (
    NoExtractableTerms,
    QueryTerm,
    TextRankParams,
    build_cooccurrence,
    default_pairs,
    expand_variants,
    extract_keywords,
    parse_query,
    rank_graph,
    render_queries,
)
from oracles import pagerank_dense

STOP = frozenset({"the", "a", "of", "and", "is", "to", "in"})


# ---------------------------------------------------------------------------
# co-occurrence graph

def test_cooccurrence_adjacent_pair():
    g = build_cooccurrence([["x", "y"]], window=4)
    assert g == {"x": {"y": 1.0}, "y": {"x": 1.0}}


def test_cooccurrence_repeat_accumulates():
    # x..y..x: (x,y) co-occurs twice inside the window, self-pairs never
    g = build_cooccurrence([["x", "y", "x"]], window=4)
    assert g["x"]["y"] == 2.0
    assert g["y"]["x"] == 2.0
    assert "x" not in g["x"]


def test_cooccurrence_window_is_exclusive():
    # window=2 pairs each token with its immediate successor only
    g = build_cooccurrence([["a", "b", "c"]], window=2)
    assert "c" not in g["a"]
    assert g["a"]["b"] == 1.0 and g["b"]["c"] == 1.0


def test_cooccurrence_isolated_node():
    g = build_cooccurrence([["solo"]], window=4)
    assert g == {"solo": {}}


# ---------------------------------------------------------------------------
# ranking

def test_rank_symmetric_pair_equal_scores():
    g = build_cooccurrence([["x", "y"]], window=4)
    scores = rank_graph(g)
    assert scores["x"] == pytest.approx(scores["y"], abs=1e-12)


def test_rank_isolated_node_keeps_baseline():
    scores = rank_graph({"solo": {}}, damping=0.85)
    assert scores["solo"] == pytest.approx(0.15)


def test_rank_star_center_outranks_leaves():
    g = build_cooccurrence([["hub", "a", "hub", "b", "hub", "c"]], window=2)
    scores = rank_graph(g)
    assert all(scores["hub"] > scores[leaf] for leaf in "abc")


def _random_graph(rng, n_nodes):
    nodes = [f"n{i}" for i in range(n_nodes)]
    graph = {v: {} for v in nodes}
    edges = {}
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < 0.3:
                w = rng.randint(1, 5) * 1.0
                graph[nodes[i]][nodes[j]] = w
                graph[nodes[j]][nodes[i]] = w
                edges[(nodes[i], nodes[j])] = w
    return nodes, graph, edges


def test_rank_matches_dense_oracle():
    rng = random.Random(7)
    for _ in range(5):
        nodes, graph, edges = _random_graph(rng, rng.randint(2, 25))
        got = rank_graph(graph, damping=0.85, max_iter=200, tol=1e-10)
        want = pagerank_dense(nodes, edges, damping=0.85, max_iter=200, tol=1e-10)
        for v in nodes:
            assert got[v] == pytest.approx(want[v], abs=1e-6)


# ---------------------------------------------------------------------------
# keyword extraction

def test_extract_merges_adjacent_top_words():
    text = (
        "Gradient descent updates weights. Gradient descent converges. "
        "Momentum accelerates gradient descent in practice."
    )
    terms = extract_keywords([text], TextRankParams(top_k=3), stopwords=STOP)
    phrases = [t.phrase for t in terms]
    assert "gradient descent" in phrases
    # absorbed members never appear alone
    assert "gradient" not in phrases and "descent" not in phrases


def test_extract_truncates_to_top_k():
    # stopwords between keywords keep raw-text runs short, so nothing
    # merges and truncation is observable
    text = "the alpha of beta the gamma of delta the epsilon of zeta " * 3
    terms = extract_keywords([text], TextRankParams(top_k=4), stopwords=STOP)
    assert len(terms) == 4
    assert all(" " not in t.phrase for t in terms)


def test_extract_tie_order_is_lexicographic():
    # a fully symmetric pair ties exactly; order must be alphabetical
    terms = extract_keywords(["zeta kappa. zeta kappa."], TextRankParams(top_k=2),
                             stopwords=STOP)
    assert [t.phrase for t in terms] == sorted(t.phrase for t in terms)


def test_extract_sets_source_and_ids():
    terms = extract_keywords(["alpha beta alpha"], TextRankParams(top_k=2),
                             domain="d", stopwords=STOP)
    for t in terms:
        assert t.source == "textrank"
        assert t.domain == "d"
        assert t.id == querygen.term_id("d", t.phrase)


def test_extract_rejects_empty_inputs():
    with pytest.raises(NoExtractableTerms):
        extract_keywords([], TextRankParams(), stopwords=STOP)
    with pytest.raises(NoExtractableTerms):
        extract_keywords(["the of and 123 456"], TextRankParams(), stopwords=STOP)


# ---------------------------------------------------------------------------
# variants

def _term(phrase, variants=()):
    return QueryTerm(id="t0", phrase=phrase, variants=list(variants))


def test_acronym_for_multiword_phrase():
    t = expand_variants(_term("machine translation"))
    assert t.variants == ["MT"]


def test_no_acronym_for_single_word():
    assert expand_variants(_term("segmentation")).variants == []


def test_aliases_merge_after_acronym():
    t = expand_variants(
        _term("information retrieval"),
        {"information retrieval": ["document ranking"]},
    )
    assert t.variants == ["IR", "document ranking"]


def test_variant_equal_to_phrase_is_dropped():
    t = expand_variants(_term("transformers"), {"transformers": ["Transformers"]})
    assert t.variants == []


def test_expand_is_idempotent():
    aliases = {"machine translation": ["MT", "neural mt"]}
    once = expand_variants(_term("machine translation"), aliases)
    twice = expand_variants(once, aliases)
    assert twice == once


@given(
    st.lists(
        st.text(alphabet="abcdefghij", min_size=1, max_size=6),
        min_size=1,
        max_size=4,
    )
)
@settings(max_examples=60, deadline=None)
def test_expand_idempotent_property(words):
    t = _term(" ".join(words))
    once = expand_variants(t)
    assert expand_variants(once) == once


# ---------------------------------------------------------------------------
# rendering

def test_default_pairs_rules():
    pairs = default_pairs(
        [".edu", "blog.example.com", None], ["pdf", "html"]
    )
    assert pairs == [
        (".edu", "pdf"),
        ("blog.example.com", "html"),
        (None, "pdf"),
        (None, "html"),
    ]


def test_default_pairs_tld_carries_pptx_not_html():
    pairs = default_pairs([".edu"], ["pdf", "pptx", "html"])
    assert pairs == [(".edu", "pdf"), (".edu", "pptx")]


def test_render_format_and_order():
    terms = [
        QueryTerm(id="t1", phrase="machine translation", variants=["MT"]),
        QueryTerm(id="t2", phrase="parsing"),
    ]
    qs = render_queries(terms, [".edu", None], ["pdf"])
    assert [q.rendered for q in qs] == [
        '"machine translation OR MT" site:.edu filetype:.pdf',
        '"machine translation OR MT" filetype:.pdf',
        '"parsing" site:.edu filetype:.pdf',
        '"parsing" filetype:.pdf',
    ]
    assert len(qs) == len(terms) * 2


def test_render_rejects_bad_filetype():
    with pytest.raises(ValueError):
        render_queries([_term("x")], [None], ["docx"])
    with pytest.raises(ValueError):
        render_queries([], [None], ["pdf"])


def test_query_id_is_stable_digest():
    [q] = render_queries([_term("parsing")], [None], ["pdf"])
    assert len(q.query_id) == 16
    assert q.query_id == render_queries([_term("parsing")], [None], ["pdf"])[0].query_id


PHRASE_CHARS = "abcdefghijklmnopqrstuvwxyz "


@given(
    phrase=st.text(alphabet=PHRASE_CHARS, min_size=1, max_size=20).filter(
        lambda s: s.strip() and " OR " not in s and s == " ".join(s.split())
    ),
    variants=st.lists(
        st.text(alphabet="ABCDEFG", min_size=1, max_size=5), max_size=2
    ),
    site=st.sampled_from([None, ".edu", "example.com"]),
    ft=st.sampled_from(["pdf", "pptx", "html"]),
)
@settings(max_examples=80, deadline=None)
def test_render_parse_round_trip(phrase, variants, site, ft):
    term = QueryTerm(id="t", phrase=phrase, variants=variants)
    [q] = render_queries([term], [site], [ft], pairs=[(site, ft)])
    phrases, got_site, got_ft = parse_query(q.rendered)
    assert phrases == [phrase] + variants
    assert got_site == site
    assert got_ft == ft
