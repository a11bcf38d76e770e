"""Evaluation metrics, the transfer ablation protocol, and corpus
analyses: n-gram overlap, top sites, corpus statistics, and
Krippendorff's alpha for annotator agreement.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from urllib.parse import urlsplit

import numpy as np

from erd.classifier import (
    SCORE_PREFIX,
    DesignMatrix,
    ForestParams,
    RandomForestModel,
    fit_binning,
    predict_many,
    train_forest,
)
from erd.docmodel import is_word_token, tokenize
from erd.features import GROUP1_NUMERIC, GROUP2_CATEGORICAL, GROUP2_NUMERIC


# ---------------------------------------------------------------------------
# Precision / recall / F1

@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def prf1(tp: int, fp: int, fn: int) -> Metrics:
    """Standard precision/recall/F1. A zero denominator reports the
    affected metric as 0 and flags the result instead of raising."""
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return Metrics(precision, recall, f1, degenerate)


# ---------------------------------------------------------------------------
# Transfer evaluation

@dataclass
class LabeledDataset:
    vectors: list
    labels: list[int]

    def __post_init__(self):
        if len(self.vectors) != len(self.labels):
            raise ValueError("vectors and labels differ in length")


@dataclass
class EvalReport:
    setting: str
    feature_groups: list[str]
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "feature_groups": list(self.feature_groups),
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": self.degenerate,
        }


def transfer_eval(
    source: LabeledDataset,
    target: LabeledDataset,
    groups,
    params: ForestParams,
    n_bins: int = 10,
    setting: str = "source->target",
) -> EvalReport:
    """Fit binning and a forest on the source domain only, predict the
    target domain, and report counts and metrics. Target labels are
    consumed only after prediction."""
    groups = sorted(frozenset(groups))
    scheme = fit_binning(source.vectors, n_bins=n_bins, groups=groups)
    train = DesignMatrix.from_vectors(source.vectors, scheme, labels=source.labels)
    model = train_forest(train, params, binning=scheme)

    test = DesignMatrix.from_vectors(target.vectors, scheme)
    predicted, _ = predict_many(model, test.rows)

    actual = np.asarray(target.labels, dtype=np.uint8)
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    tn = int(np.sum((predicted == 0) & (actual == 0)))
    m = prf1(tp, fp, fn)
    return EvalReport(
        setting=setting,
        feature_groups=groups,
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=m.precision, recall=m.recall, f1=m.f1,
        degenerate=m.degenerate,
    )


def evaluate_model(
    model: RandomForestModel,
    target: LabeledDataset,
    setting: str = "saved->target",
) -> EvalReport:
    """Score an already-trained model (with its embedded binning) on a
    labeled target dataset."""
    test = DesignMatrix.from_vectors(target.vectors, model.binning)
    predicted, _ = predict_many(model, test.rows)
    actual = np.asarray(target.labels, dtype=np.uint8)
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    tn = int(np.sum((predicted == 0) & (actual == 0)))
    m = prf1(tp, fp, fn)
    return EvalReport(
        setting=setting,
        feature_groups=_groups_of(model.binning),
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=m.precision, recall=m.recall, f1=m.f1,
        degenerate=m.degenerate,
    )


def _groups_of(scheme) -> list[str]:
    # recover which feature groups a binning scheme covers
    names = set(scheme.numeric_features) | set(scheme.categorical_features)
    groups = []
    if names & set(GROUP1_NUMERIC):
        groups.append("g1")
    if names & (set(GROUP2_NUMERIC) | set(GROUP2_CATEGORICAL)):
        groups.append("g2")
    if any(n.startswith(SCORE_PREFIX) for n in names):
        groups.append("g3")
    return groups


GROUP_LADDER = (("g1",), ("g1", "g2"), ("g1", "g2", "g3"))


def run_ablation(
    source: LabeledDataset,
    targets: dict[str, LabeledDataset],
    params: ForestParams,
    n_bins: int = 10,
    source_name: str = "source",
    ladder=GROUP_LADDER,
) -> list[EvalReport]:
    """The full ablation grid: every target domain crossed with the
    cumulative feature-group ladder."""
    reports = []
    for target_name, target in targets.items():
        for groups in ladder:
            reports.append(
                transfer_eval(
                    source, target, groups, params, n_bins=n_bins,
                    setting=f"{source_name}->{target_name}",
                )
            )
    return reports


# ---------------------------------------------------------------------------
# N-gram overlap

def _ngram_set(corpus, n: int) -> set[tuple[str, ...]]:
    grams: set[tuple[str, ...]] = set()
    for sentence in corpus:
        toks = [t.lower() for t in sentence]
        grams.update(
            tuple(toks[i : i + n]) for i in range(len(toks) - n + 1)
        )
    return grams


def ngram_overlap(corpus_a, corpus_b, n: int) -> float:
    """Percentage of corpus B's n-gram types also present in corpus A.

    Corpora are sequences of tokenized sentences; n-grams never cross
    sentence boundaries and are compared as lowercased type sets. An
    empty B n-gram set leaves the measure undefined: returns NaN.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grams_a = _ngram_set(corpus_a, n)
    grams_b = _ngram_set(corpus_b, n)
    if not grams_b:
        return float("nan")
    return 100.0 * len(grams_a & grams_b) / len(grams_b)


def doc_sentences_tokens(doc) -> list[list[str]]:
    """Tokenized sentences of a parsed document, ready for overlap."""
    return [tokenize(s) for s in doc.sentence_texts()]


# ---------------------------------------------------------------------------
# Top sites

def top_sites(records, k: int, positives_only: bool = True) -> list[tuple[str, int]]:
    """Hosts ranked by resource count, descending; ties lexicographic.

    With positives_only, only records labeled positive count."""
    counts: dict[str, int] = {}
    for rec in records:
        if positives_only and getattr(rec, "label", None) != 1:
            continue
        host = (urlsplit(rec.url).hostname or "").lower()
        if host:
            counts[host] = counts.get(host, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Krippendorff's alpha (nominal)

@dataclass
class AnnotationTable:
    """Items x annotators matrix of optional labels (None = missing)."""

    values: list[list[str | None]]

    def __post_init__(self):
        widths = {len(row) for row in self.values}
        if len(widths) > 1:
            raise ValueError("ragged annotation table")
        if not self.values or len(self.values[0]) < 2:
            raise ValueError("need at least 2 annotators")
        if not any(
            sum(1 for v in row if v is not None) >= 2 for row in self.values
        ):
            raise ValueError("no item carries 2 or more labels")

    @classmethod
    def from_csv(cls, path) -> "AnnotationTable":
        rows: list[list[str | None]] = []
        with open(path, newline="", encoding="utf-8") as f:
            for record in csv.reader(f):
                rows.append([cell.strip() or None for cell in record])
        return cls(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            for row in self.values:
                writer.writerow(["" if v is None else v for v in row])


@dataclass
class AlphaResult:
    value: float
    degenerate: bool = False


def krippendorff_alpha(table: AnnotationTable) -> AlphaResult:
    """Nominal-metric alpha via the coincidence-matrix formulation.

    Items with fewer than 2 labels are excluded (they pair with
    nothing). When every pairable label is identical the expected
    disagreement is zero; by convention alpha is 1.0 then, flagged."""
    units = [
        [v for v in row if v is not None]
        for row in table.values
    ]
    units = [u for u in units if len(u) >= 2]

    labels = sorted({v for u in units for v in u})
    index = {v: i for i, v in enumerate(labels)}
    k = len(labels)
    coincidence = np.zeros((k, k), dtype=np.float64)
    for u in units:
        m = len(u)
        for i, a in enumerate(u):
            for j, b in enumerate(u):
                if i != j:
                    coincidence[index[a], index[b]] += 1.0 / (m - 1)

    n = coincidence.sum()
    margins = coincidence.sum(axis=1)
    agree = np.trace(coincidence)
    expected_pairs = n * n - np.sum(margins * margins)
    if expected_pairs == 0.0:
        return AlphaResult(1.0, degenerate=True)
    alpha = 1.0 - (n - 1.0) * (n - agree) / expected_pairs
    return AlphaResult(float(alpha))


# ---------------------------------------------------------------------------
# Corpus statistics

def _dist_stats(values) -> dict:
    vals = list(values)
    if not vals:
        return {"mean": 0.0, "median": 0.0, "max": 0}
    return {
        "mean": sum(vals) / len(vals),
        "median": float(statistics.median(vals)),
        "max": max(vals),
    }


def positive_rate(positives: int, total: int) -> float:
    return positives / total if total else 0.0


def corpus_stats(records, docs: dict) -> dict:
    """Per-domain resource counts, positive rates and free-text
    statistics. docs maps record id to its ParsedDocument; records
    without a parsed document contribute to counts only."""
    domains: dict[str, dict] = {}
    for rec in records:
        d = domains.setdefault(
            rec.domain,
            {
                "resources": 0,
                "by_filetype": {},
                "labeled": 0,
                "positives": 0,
                "tokens_per_sentence": [],
                "sentences_per_document": [],
            },
        )
        d["resources"] += 1
        d["by_filetype"][rec.filetype] = d["by_filetype"].get(rec.filetype, 0) + 1
        label = getattr(rec, "label", None)
        if label is not None:
            d["labeled"] += 1
            if label == 1:
                d["positives"] += 1
        doc = docs.get(rec.id)
        if doc is not None:
            sent_tokens = [
                sum(1 for t in tokenize(s) if is_word_token(t))
                for s in doc.sentence_texts()
            ]
            d["tokens_per_sentence"].extend(sent_tokens)
            d["sentences_per_document"].append(len(doc.sentences))

    out: dict[str, dict] = {}
    total = {"resources": 0, "labeled": 0, "positives": 0}
    for name, d in sorted(domains.items()):
        out[name] = {
            "resources": d["resources"],
            "by_filetype": dict(sorted(d["by_filetype"].items())),
            "positives": d["positives"],
            "positive_rate": positive_rate(d["positives"], d["labeled"]),
            "tokens_per_sentence": _dist_stats(d["tokens_per_sentence"]),
            "sentences_per_document": _dist_stats(d["sentences_per_document"]),
        }
        total["resources"] += d["resources"]
        total["labeled"] += d["labeled"]
        total["positives"] += d["positives"]
    out["__total__"] = {
        "resources": total["resources"],
        "positives": total["positives"],
        "positive_rate": positive_rate(total["positives"], total["labeled"]),
    }
    return out
