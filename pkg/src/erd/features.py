"""Feature extraction for harvested resources.

Three feature groups: structural counts from the parsed document
(Group 1), URL and text-statistics features (Group 2), and per-encoder
query-relevance scores (Group 3, filled in by erd.relevance). Every
vector carries all 18 numeric names and the 3 categorical names; scores
hold one entry per configured encoder.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from urllib.parse import urlsplit

from erd.docmodel import (
    ParsedDocument,
    is_alphabetic_token,
    is_word_token,
    tokenize,
)
from erd.ioutil import atomic_write_text

GROUP1_NUMERIC = (
    "NumAuthor", "NumHeading", "NumFig", "NumEqu",
    "NumPara", "NumSent", "NumLink", "BibLen",
)
GROUP2_NUMERIC = (
    "NumUrlSubdirs", "NormalizedUniqueVocab", "UniqueVocabMean",
    "UniqueVocabStdev", "WordLenMean", "WordLenStdev",
    "SentenceLenMean", "SentenceLenStdev", "PercentTypos",
    "NumGithubLinks",
)
GROUP2_CATEGORICAL = ("Subdomain", "SecondDomain", "TopDomain")
NUMERIC_FEATURES = GROUP1_NUMERIC + GROUP2_NUMERIC
CATEGORICAL_FEATURES = GROUP2_CATEGORICAL


@dataclass
class FeatureVector:
    resource_id: str
    numeric: dict[str, float] = field(default_factory=dict)
    categorical: dict[str, str] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)
    degenerate_text: bool = False

    def to_dict(self) -> dict:
        d = {
            "resource_id": self.resource_id,
            "numeric": dict(self.numeric),
            "categorical": dict(self.categorical),
            "scores": dict(self.scores),
        }
        if self.degenerate_text:
            d["degenerate_text"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        return cls(
            resource_id=d["resource_id"],
            numeric=dict(d["numeric"]),
            categorical=dict(d["categorical"]),
            scores=dict(d.get("scores") or {}),
            degenerate_text=bool(d.get("degenerate_text", False)),
        )


def load_dictionary(path=None) -> frozenset[str]:
    """Lowercase word set for the typo-rate feature. Without a path the
    compact built-in English list is used."""
    if path is None:
        text = (
            importlib_resources.files("erd.data")
            .joinpath("english_words.txt")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


def _mean_stdev(values) -> tuple[float, float]:
    # population stdev; a single value has stdev 0
    vals = list(values)
    if not vals:
        return 0.0, 0.0
    m = sum(vals) / len(vals)
    var = sum((v - m) ** 2 for v in vals) / len(vals)
    return m, math.sqrt(var)


def extract_group1(doc: ParsedDocument) -> dict[str, float]:
    return {
        "NumAuthor": float(len(doc.authors)),
        "NumHeading": float(len(doc.headings)),
        "NumFig": float(doc.num_figures),
        "NumEqu": float(doc.num_equations),
        "NumPara": float(len(doc.paragraphs)),
        "NumSent": float(len(doc.sentences)),
        "NumLink": float(len(doc.links)),
        "BibLen": float(len(doc.bibliography)),
    }


_IPV4_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def url_components(url: str) -> tuple[str, str, str, int]:
    """(Subdomain, SecondDomain, TopDomain, NumUrlSubdirs) of an
    absolute http(s) URL.

    For host a.b.c.tld the top domain is the last label, the second
    domain the one before it, and the subdomain everything remaining
    joined by dots. IP-literal hosts put the whole IP in SecondDomain.
    Path segments count when non-empty, excluding a final segment that
    contains a dot (a document name rather than a directory).
    """
    parts = urlsplit(url)
    host = (parts.hostname or "").lower()
    if _IPV4_RE.match(host) or ":" in host:
        sub, second, top = "", host, ""
    else:
        labels = [l for l in host.split(".") if l]
        if len(labels) >= 2:
            top = labels[-1]
            second = labels[-2]
            sub = ".".join(labels[:-2])
        elif len(labels) == 1:
            sub, second, top = "", "", labels[0]
        else:
            sub, second, top = "", "", ""
    segments = [s for s in parts.path.split("/") if s]
    if segments and "." in segments[-1]:
        segments = segments[:-1]
    return sub, second, top, len(segments)


def _in_dictionary(token: str, dictionary: frozenset[str]) -> bool:
    if token in dictionary:
        return True
    parts = re.split(r"[-'’]", token)
    return len(parts) > 1 and all(p in dictionary for p in parts)


def _github_host(link: str) -> bool:
    host = (urlsplit(link).hostname or "").lower()
    return host == "github.com" or host.endswith(".github.com")


def extract_group2_text(
    doc: ParsedDocument, dictionary: frozenset[str]
) -> tuple[dict[str, float], bool]:
    """Text-statistics features plus a degeneracy flag.

    All vocabulary statistics run over alphabetic tokens (letters only,
    hyphen/apostrophe joiners allowed); sentence lengths count word
    tokens. A document with zero alphabetic tokens reports zeros and is
    flagged degenerate.
    """
    tokens = tokenize(doc.free_text)
    alpha = [t for t in tokens if is_alphabetic_token(t)]
    out: dict[str, float] = {}
    degenerate = not alpha

    if alpha:
        counts: dict[str, int] = {}
        for t in alpha:
            counts[t] = counts.get(t, 0) + 1
        out["NormalizedUniqueVocab"] = len(counts) / len(alpha)
        mean, stdev = _mean_stdev(counts.values())
        out["UniqueVocabMean"] = mean
        out["UniqueVocabStdev"] = stdev
        wmean, wstdev = _mean_stdev(len(t) for t in alpha)
        out["WordLenMean"] = wmean
        out["WordLenStdev"] = wstdev
        typos = sum(1 for t in alpha if not _in_dictionary(t, dictionary))
        out["PercentTypos"] = 100.0 * typos / len(alpha)
    else:
        for name in (
            "NormalizedUniqueVocab", "UniqueVocabMean", "UniqueVocabStdev",
            "WordLenMean", "WordLenStdev", "PercentTypos",
        ):
            out[name] = 0.0

    sent_lengths = [
        sum(1 for t in tokenize(s) if is_word_token(t))
        for s in doc.sentence_texts()
    ]
    smean, sstdev = _mean_stdev(sent_lengths)
    out["SentenceLenMean"] = smean
    out["SentenceLenStdev"] = sstdev
    out["NumGithubLinks"] = float(sum(1 for l in doc.links if _github_host(l)))
    return out, degenerate


def extract_features(
    resource_id: str,
    doc: ParsedDocument,
    url: str,
    dictionary: frozenset[str],
) -> FeatureVector:
    """Full Group 1 + Group 2 vector for one resource. Group 3 scores
    are added later by erd.relevance.compute_group3."""
    fv = FeatureVector(resource_id=resource_id)
    fv.numeric.update(extract_group1(doc))
    text_stats, degenerate = extract_group2_text(doc, dictionary)
    fv.numeric.update(text_stats)
    sub, second, top, n_subdirs = url_components(url)
    fv.numeric["NumUrlSubdirs"] = float(n_subdirs)
    fv.categorical["Subdomain"] = sub
    fv.categorical["SecondDomain"] = second
    fv.categorical["TopDomain"] = top
    fv.degenerate_text = degenerate
    return fv


def write_features_jsonl(path, vectors) -> None:
    atomic_write_text(
        path,
        "".join(json.dumps(fv.to_dict(), sort_keys=True) + "\n" for fv in vectors),
    )


def read_features_jsonl(path) -> list[FeatureVector]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(FeatureVector.from_dict(json.loads(line)))
    return out
