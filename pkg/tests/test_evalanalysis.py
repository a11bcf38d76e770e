"""Metrics, transfer ablation, n-gram overlap, top sites, agreement,
and corpus statistics."""

import math
import random
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erd.classifier import ForestParams, fit_binning, save_model, train_forest
from erd.classifier import DesignMatrix
from erd.docmodel import parse_html
from erd.evalanalysis import (
    AnnotationTable,
    LabeledDataset,
    Metrics,
    corpus_stats,
    evaluate_model,
    krippendorff_alpha,
    ngram_overlap,
    prf1,
    run_ablation,
    top_sites,
    transfer_eval,
)
from erd.features import CATEGORICAL_FEATURES, NUMERIC_FEATURES, FeatureVector
from oracles import alpha_pairs, tally_corpus


def make_fv(rid, scores=None, **overrides):
    numeric = {name: 0.0 for name in NUMERIC_FEATURES}
    categorical = {name: "x" for name in CATEGORICAL_FEATURES}
    for k, v in overrides.items():
        if k in categorical:
            categorical[k] = v
        else:
            numeric[k] = float(v)
    return FeatureVector(
        resource_id=rid, numeric=numeric, categorical=categorical,
        scores=dict(scores or {}),
    )


# ---------------------------------------------------------------------------
# precision / recall / F1

def test_prf1_hand_values():
    m = prf1(tp=3, fp=1, fn=1)
    assert m == Metrics(0.75, 0.75, 0.75, degenerate=False)
    m = prf1(tp=8, fp=2, fn=8)
    assert m.precision == 0.8
    assert m.recall == 0.5
    assert m.f1 == pytest.approx(2 * 0.8 * 0.5 / 1.3)


@pytest.mark.parametrize(
    "tp,fp,fn",
    [(0, 0, 5), (0, 5, 0), (0, 0, 0)],
)
def test_prf1_zero_denominators_flagged_not_raised(tp, fp, fn):
    m = prf1(tp, fp, fn)
    assert m.degenerate
    assert m.f1 == 0.0


@given(
    tp=st.integers(min_value=1, max_value=500),
    fp=st.integers(min_value=0, max_value=500),
    fn=st.integers(min_value=0, max_value=500),
)
def test_f1_is_between_precision_and_recall(tp, fp, fn):
    m = prf1(tp, fp, fn)
    lo, hi = sorted([m.precision, m.recall])
    assert lo - 1e-12 <= m.f1 <= hi + 1e-12
    assert not m.degenerate


# ---------------------------------------------------------------------------
# transfer evaluation

def _separable_source():
    vectors, labels = [], []
    for i, v in enumerate([0, 1, 2, 3, 4, 6, 7, 8, 9, 10]):
        label = 1 if v > 5 else 0
        vectors.append(make_fv(f"s{i}", NumPara=v, scores={"baseline": 0.0}))
        labels.append(label)
    return LabeledDataset(vectors, labels)


def test_labeled_dataset_length_mismatch():
    with pytest.raises(ValueError, match="differ in length"):
        LabeledDataset([make_fv("a")], [0, 1])


def test_transfer_eval_counts_and_metrics():
    source = _separable_source()
    target = LabeledDataset(
        [make_fv(f"t{i}", NumPara=v, scores={"baseline": 0.0})
         for i, v in enumerate([1, 2, 8, 9])],
        [0, 0, 1, 1],
    )
    report = transfer_eval(
        source, target, ["g1"], ForestParams(n_trees=15, seed=4), n_bins=4,
        setting="a->b",
    )
    assert (report.tp, report.fp, report.fn, report.tn) == (2, 0, 0, 2)
    assert report.f1 == 1.0
    assert report.setting == "a->b"
    assert report.to_dict()["feature_groups"] == ["g1"]


def test_binning_is_fit_on_source_only():
    # target values far outside the source range clamp into the
    # boundary bins of the source-fitted scheme
    source = _separable_source()
    target = LabeledDataset(
        [make_fv(f"t{i}", NumPara=v, scores={"baseline": 0.0})
         for i, v in enumerate([-50, 999, 3, 8])],
        [1, 0, 0, 1],
    )
    report = transfer_eval(
        source, target, ["g1"], ForestParams(n_trees=15, seed=4), n_bins=4
    )
    assert (report.tp, report.fp, report.fn, report.tn) == (1, 1, 1, 1)
    assert report.precision == report.recall == report.f1 == 0.5


def test_transfer_groups_deduplicated_and_sorted():
    source = _separable_source()
    report = transfer_eval(
        source, source, ["g2", "g1", "g1"], ForestParams(n_trees=3, seed=1)
    )
    assert report.feature_groups == ["g1", "g2"]


def test_all_negative_predictions_marked_degenerate():
    source = _separable_source()
    target = LabeledDataset(
        [make_fv(f"t{i}", NumPara=-50, scores={"baseline": 0.0})
         for i in range(3)],
        [1, 0, 1],
    )
    report = transfer_eval(
        source, target, ["g1"], ForestParams(n_trees=9, seed=4), n_bins=4
    )
    assert report.tp == 0 and report.fp == 0
    assert report.degenerate


def test_ablation_grid_is_targets_times_ladder():
    source = _separable_source()
    targets = {"beta": source, "gamma": source}
    reports = run_ablation(
        source, targets, ForestParams(n_trees=3, seed=9), n_bins=3,
        source_name="alpha",
    )
    assert len(reports) == 6
    assert [r.setting for r in reports] == (
        ["alpha->beta"] * 3 + ["alpha->gamma"] * 3
    )
    assert [r.feature_groups for r in reports[:3]] == [
        ["g1"], ["g1", "g2"], ["g1", "g2", "g3"],
    ]


def test_evaluate_model_uses_saved_model_unchanged(tmp_path):
    source = _separable_source()
    scheme = fit_binning(source.vectors, n_bins=4, groups=["g1", "g3"])
    matrix = DesignMatrix.from_vectors(source.vectors, scheme, labels=source.labels)
    model = train_forest(matrix, ForestParams(n_trees=15, seed=4), binning=scheme)
    save_model(model, tmp_path / "m.json")
    before = (tmp_path / "m.json").read_bytes()

    report = evaluate_model(model, source, setting="model->self")
    assert report.setting == "model->self"
    assert report.feature_groups == ["g1", "g3"]
    assert report.tp + report.fp + report.fn + report.tn == len(source.labels)
    assert report.f1 == 1.0
    # evaluation must not touch the model
    save_model(model, tmp_path / "m2.json")
    assert (tmp_path / "m2.json").read_bytes() == before


# ---------------------------------------------------------------------------
# n-gram overlap

def test_overlap_identity_and_disjoint():
    a = [["alpha", "beta"], ["gamma"]]
    assert ngram_overlap(a, a, 1) == 100.0
    assert ngram_overlap(a, [["delta"]], 1) == 0.0


def test_overlap_counts_type_coverage_of_b():
    a = [["a", "b", "c"]]
    b = [["a", "b"], ["b", "d"]]
    # B bigram types: (a,b) and (b,d); A covers one of them
    assert ngram_overlap(a, b, 2) == 50.0


def test_overlap_is_case_insensitive():
    assert ngram_overlap([["The"]], [["the"]], 1) == 100.0


def test_ngrams_do_not_cross_sentence_boundaries():
    a = [["a"], ["b"]]
    b = [["a", "b"]]
    assert ngram_overlap(a, b, 2) == 0.0


def test_overlap_direction_matters():
    a = [["a", "b", "c", "d"]]
    b = [["a", "b"]]
    assert ngram_overlap(a, b, 1) == 100.0
    assert ngram_overlap(b, a, 1) == 50.0


def test_overlap_undefined_without_b_grams():
    assert math.isnan(ngram_overlap([["a"]], [], 1))
    assert math.isnan(ngram_overlap([["a", "b"]], [["x"]], 2))
    with pytest.raises(ValueError):
        ngram_overlap([["a"]], [["a"]], 0)


@settings(max_examples=60)
@given(
    a=st.lists(st.lists(st.sampled_from("pqrs"), min_size=1, max_size=5), max_size=6),
    extra=st.lists(st.lists(st.sampled_from("pqrs"), min_size=1, max_size=5), max_size=6),
    b=st.lists(st.lists(st.sampled_from("pqrs"), min_size=2, max_size=5), min_size=1, max_size=6),
    n=st.integers(min_value=1, max_value=2),
)
def test_growing_a_never_lowers_overlap(a, extra, b, n):
    base = ngram_overlap(a, b, n)
    grown = ngram_overlap(a + extra, b, n)
    assert grown >= base - 1e-12
    assert 0.0 <= grown <= 100.0


# ---------------------------------------------------------------------------
# top sites

def _rec(url, label):
    return SimpleNamespace(url=url, label=label)


def test_top_sites_ranks_positive_hosts():
    records = [
        _rec("https://a.example.edu/x", 1),
        _rec("https://a.example.edu/y", 1),
        _rec("https://B.example.org/z", 1),
        _rec("https://c.example.com/w", 0),
        _rec("https://c.example.com/v", None),
    ]
    assert top_sites(records, k=5) == [("a.example.edu", 2), ("b.example.org", 1)]
    assert top_sites(records, k=1) == [("a.example.edu", 2)]
    with_all = dict(top_sites(records, k=5, positives_only=False))
    assert with_all["c.example.com"] == 2


def test_top_sites_ties_break_lexicographically():
    records = [_rec(f"https://{h}/p", 1) for h in ("zz.net", "aa.net", "mm.net")]
    assert top_sites(records, k=3) == [("aa.net", 1), ("mm.net", 1), ("zz.net", 1)]


def test_top_sites_skips_hostless_urls():
    records = [_rec("mailto:someone@example.com", 1), _rec("https://ok.org/", 1)]
    assert top_sites(records, k=5) == [("ok.org", 1)]


# ---------------------------------------------------------------------------
# Krippendorff's alpha

def test_alpha_perfect_agreement_is_one():
    table = AnnotationTable([["a", "a"], ["b", "b"], ["a", "a"]])
    result = krippendorff_alpha(table)
    assert result.value == 1.0
    assert not result.degenerate


def test_alpha_single_disagreeing_pair_is_zero():
    result = krippendorff_alpha(AnnotationTable([["a", "b"]]))
    assert result.value == pytest.approx(0.0, abs=1e-12)


def test_alpha_uniform_labels_degenerate():
    result = krippendorff_alpha(AnnotationTable([["a", "a"], ["a", "a"]]))
    assert result.value == 1.0
    assert result.degenerate


def test_alpha_ignores_underlabeled_items():
    base = [["a", "b", None], ["b", "b", "b"]]
    with_gap = base + [["a", None, None], [None, None, "b"]]
    a1 = krippendorff_alpha(AnnotationTable(base))
    a2 = krippendorff_alpha(AnnotationTable(with_gap))
    assert a1.value == pytest.approx(a2.value, abs=1e-15)


def _random_table(rng):
    while True:
        rows = [
            [rng.choice(["a", "b", "c", None]) for _ in range(rng.randint(2, 4))]
            for _ in range(rng.randint(2, 8))
        ]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            rows = [r[: min(widths)] for r in rows]
        if any(sum(1 for v in r if v is not None) >= 2 for r in rows):
            return rows


def test_alpha_matches_pair_enumeration_oracle():
    rng = random.Random(4021)
    compared = 0
    for _ in range(100):
        rows = _random_table(rng)
        got = krippendorff_alpha(AnnotationTable(rows))
        want = alpha_pairs(rows)
        if want is None:
            assert got.degenerate and got.value == 1.0
            continue
        assert got.value == pytest.approx(want, abs=1e-12)
        compared += 1
    assert compared > 50


def test_alpha_invariant_to_relabeling_and_row_order():
    rows = [["a", "b", "a"], ["b", "b", None], ["a", "a", "b"], ["c", "c", "c"]]
    base = krippendorff_alpha(AnnotationTable(rows)).value
    swapped = [[{"a": "z", "b": "q", "c": "k", None: None}[v] for v in r] for r in rows]
    assert krippendorff_alpha(AnnotationTable(swapped)).value == pytest.approx(base, abs=1e-15)
    shuffled = [rows[i] for i in (2, 0, 3, 1)]
    assert krippendorff_alpha(AnnotationTable(shuffled)).value == pytest.approx(base, abs=1e-15)


def test_annotation_table_validation():
    with pytest.raises(ValueError, match="ragged"):
        AnnotationTable([["a", "b"], ["a"]])
    with pytest.raises(ValueError, match="2 annotators"):
        AnnotationTable([["a"], ["b"]])
    with pytest.raises(ValueError, match="2 or more labels"):
        AnnotationTable([["a", None], [None, "b"]])


def test_annotation_csv_round_trip(tmp_path):
    table = AnnotationTable([["pos", "neg", None], [None, "pos", "pos"]])
    path = tmp_path / "ann.csv"
    table.to_csv(path)
    again = AnnotationTable.from_csv(path)
    assert again.values == table.values


def test_annotation_csv_strips_whitespace(tmp_path):
    path = tmp_path / "ann.csv"
    path.write_text("pos , neg\n , pos\n", encoding="utf-8")
    table = AnnotationTable.from_csv(path)
    assert table.values == [["pos", "neg"], [None, "pos"]]


# ---------------------------------------------------------------------------
# corpus statistics

def _doc(html):
    return parse_html(html, base_url="https://example.org/")


def _corpus():
    docs = {
        "r1": _doc("<p>One two three. Four five.</p><p>Six seven.</p>"),
        "r2": _doc("<p>Alpha beta gamma delta.</p>"),
        "r3": _doc("<p>Red green. Blue yellow. More words here.</p>"),
    }
    records = [
        SimpleNamespace(id="r1", domain="nlp", filetype="html", label=1,
                        url="https://a.org/1"),
        SimpleNamespace(id="r2", domain="nlp", filetype="pdf", label=0,
                        url="https://a.org/2"),
        SimpleNamespace(id="r3", domain="cv", filetype="html", label=1,
                        url="https://b.org/3"),
        # fetched but never parsed: counts only
        SimpleNamespace(id="r4", domain="cv", filetype="pdf", label=None,
                        url="https://b.org/4"),
    ]
    return records, docs


def test_corpus_stats_counts_and_rates():
    records, docs = _corpus()
    stats = corpus_stats(records, docs)
    assert list(stats) == ["cv", "nlp", "__total__"]
    assert stats["nlp"]["resources"] == 2
    assert stats["nlp"]["by_filetype"] == {"html": 1, "pdf": 1}
    assert stats["nlp"]["positive_rate"] == 0.5
    # unlabeled record widens nothing: cv has one label, one positive
    assert stats["cv"]["positive_rate"] == 1.0
    assert stats["__total__"] == {
        "resources": 4, "positives": 2, "positive_rate": 2 / 3,
    }


def test_corpus_stats_match_independent_tally():
    records, docs = _corpus()
    stats = corpus_stats(records, docs)
    oracle = tally_corpus(records, docs)
    for domain in ("nlp", "cv"):
        got = stats[domain]
        want = oracle[domain]
        assert got["resources"] == want["resources"]
        assert got["positives"] == want["positives"]
        assert got["positive_rate"] == pytest.approx(want["positive_rate"])
        assert got["sentences_per_document"]["mean"] == pytest.approx(want["sentences_mean"])
        assert got["sentences_per_document"]["median"] == want["sentences_median"]
        assert got["sentences_per_document"]["max"] == want["sentences_max"]
        assert got["tokens_per_sentence"]["mean"] == pytest.approx(want["tokens_mean"])
        assert got["tokens_per_sentence"]["median"] == want["tokens_median"]
        assert got["tokens_per_sentence"]["max"] == want["tokens_max"]


def test_corpus_stats_without_any_docs():
    records = [SimpleNamespace(id="r9", domain="nlp", filetype="pdf", label=None,
                               url="https://a.org/9")]
    stats = corpus_stats(records, {})
    assert stats["nlp"]["tokens_per_sentence"] == {"mean": 0.0, "median": 0.0, "max": 0}
    assert stats["nlp"]["positive_rate"] == 0.0
    assert stats["__total__"]["positive_rate"] == 0.0
