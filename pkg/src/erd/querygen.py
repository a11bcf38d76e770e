"""Search-query generation: TextRank keyword extraction from seed
documents, variant expansion (acronyms and alias dictionaries), and
rendering of engine query strings with site and filetype constraints.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources

from erd.docmodel import is_alphabetic_token, tokenize

FILETYPES = ("pdf", "pptx", "html")


class NoExtractableTerms(Exception):
    """Seed text produced no graph nodes to rank."""


@dataclass
class TextRankParams:
    window: int = 4
    damping: float = 0.85
    max_iter: int = 100
    tol: float = 1e-6
    top_k: int = 20

    def __post_init__(self):
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must be in (0,1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class QueryTerm:
    id: str
    phrase: str
    variants: list[str] = field(default_factory=list)
    domain: str = ""
    source: str = "external-list"  # or "textrank"


@dataclass
class SearchQuery:
    term_id: str
    site: str | None
    filetype: str
    rendered: str

    @property
    def query_id(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()[:16]


def term_id(domain: str, phrase: str) -> str:
    return hashlib.sha256(f"{domain}:{phrase}".encode("utf-8")).hexdigest()[:12]


def load_stopwords(path=None) -> frozenset[str]:
    if path is None:
        text = (
            importlib_resources.files("erd.data")
            .joinpath("stopwords.txt")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


# ---------------------------------------------------------------------------
# TextRank

def build_cooccurrence(
    token_sequences, window: int
) -> dict[str, dict[str, float]]:
    """Undirected weighted co-occurrence graph: tokens within window
    positions of each other (in the given filtered sequences) share an
    edge whose weight counts their co-occurrences."""
    graph: dict[str, dict[str, float]] = {}
    for seq in token_sequences:
        for i, a in enumerate(seq):
            graph.setdefault(a, {})
            for j in range(i + 1, min(i + window, len(seq))):
                b = seq[j]
                if b == a:
                    continue
                graph.setdefault(b, {})
                graph[a][b] = graph[a].get(b, 0.0) + 1.0
                graph[b][a] = graph[b].get(a, 0.0) + 1.0
    return graph


def rank_graph(
    graph: dict[str, dict[str, float]],
    damping: float = 0.85,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> dict[str, float]:
    """Weighted PageRank over an undirected graph, raw scores.

    score(i) = (1 - d) + d * sum over neighbors j of
    w(j,i)/outweight(j) * score(j). Iteration stops when the L1 change
    drops below tol or after max_iter rounds. Isolated nodes keep the
    baseline 1 - d.
    """
    nodes = sorted(graph)
    scores = {v: 1.0 for v in nodes}
    out_weight = {v: sum(graph[v].values()) for v in nodes}
    for _ in range(max_iter):
        delta = 0.0
        new_scores = {}
        for v in nodes:
            rank = 0.0
            for u, w in graph[v].items():
                if out_weight[u] > 0.0:
                    rank += w / out_weight[u] * scores[u]
            new_scores[v] = (1.0 - damping) + damping * rank
            delta += abs(new_scores[v] - scores[v])
        scores = new_scores
        if delta < tol:
            break
    return scores


def _filtered_sequences(seed_texts, stopwords) -> tuple[list[list[str]], list[list[str]]]:
    raw_sequences = [tokenize(t) for t in seed_texts]
    filtered = [
        [t for t in seq if is_alphabetic_token(t) and t not in stopwords]
        for seq in raw_sequences
    ]
    return raw_sequences, filtered


def extract_keywords(
    seed_texts,
    params: TextRankParams | None = None,
    domain: str = "",
    stopwords: frozenset[str] | None = None,
) -> list[QueryTerm]:
    """Top-ranked keyword terms from seed documents.

    Stopwords and non-alphabetic tokens are dropped before the graph is
    built. Top-ranked words that appear consecutively in the raw text
    merge into a phrase scored by the sum of its member scores; words
    absorbed into a phrase are not emitted alone. Ranked by score
    descending, ties lexicographic, truncated to top_k.
    """
    params = params or TextRankParams()
    if stopwords is None:
        stopwords = load_stopwords()
    seed_texts = list(seed_texts)
    if not seed_texts:
        raise NoExtractableTerms("no seed texts supplied")

    raw_sequences, filtered = _filtered_sequences(seed_texts, stopwords)
    graph = build_cooccurrence(filtered, params.window)
    if not graph:
        raise NoExtractableTerms("no extractable terms after tokenization")

    raw_scores = rank_graph(graph, params.damping, params.max_iter, params.tol)
    peak = max(raw_scores.values())
    scores = {v: s / peak for v, s in raw_scores.items()} if peak > 0 else raw_scores

    ranked_words = sorted(scores, key=lambda w: (-scores[w], w))
    candidates = set(ranked_words[: params.top_k])

    phrases: dict[str, float] = {}
    absorbed: set[str] = set()
    for seq in raw_sequences:
        run: list[str] = []
        for tok in seq + [""]:  # sentinel flushes the last run
            if tok in candidates:
                run.append(tok)
                continue
            if len(run) >= 2:
                phrase = " ".join(run)
                phrases.setdefault(phrase, sum(scores[w] for w in run))
                absorbed.update(run)
            run = []

    pool: dict[str, float] = dict(phrases)
    for w in candidates - absorbed:
        pool[w] = scores[w]
    ordered = sorted(pool.items(), key=lambda kv: (-kv[1], kv[0]))[: params.top_k]
    return [
        QueryTerm(id=term_id(domain, phrase), phrase=phrase, domain=domain,
                  source="textrank")
        for phrase, _ in ordered
    ]


# ---------------------------------------------------------------------------
# Variant expansion

_MIN_ACRONYM_SOURCE_CHARS = 4


def load_aliases(path) -> dict[str, list[str]]:
    """Alias dictionary file: one `phrase<TAB>variant1|variant2` row per
    line. Keys are matched case-insensitively."""
    aliases: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected phrase<TAB>variants")
            phrase, _, variants = line.partition("\t")
            aliases[phrase.strip().lower()] = [
                v.strip() for v in variants.split("|") if v.strip()
            ]
    return aliases


def expand_variants(
    term: QueryTerm, aliases: dict[str, list[str]] | None = None
) -> QueryTerm:
    """Populate variants: the uppercase-initials acronym for multiword
    phrases, plus alias-dictionary entries. Idempotent; never duplicates
    the phrase itself (case-insensitive)."""
    candidates: list[str] = []
    words = [w for w in term.phrase.split() if is_alphabetic_token(w.lower())]
    if len(words) >= 2 and len(term.phrase) >= _MIN_ACRONYM_SOURCE_CHARS:
        acronym = "".join(w[0] for w in words).upper()
        if len(acronym) >= 2:
            candidates.append(acronym)
    if aliases:
        candidates.extend(aliases.get(term.phrase.lower(), []))

    seen = {term.phrase.lower()} | {v.lower() for v in term.variants}
    merged = list(term.variants)
    for cand in candidates:
        if cand.lower() not in seen:
            merged.append(cand)
            seen.add(cand.lower())
    return replace(term, variants=merged)


# ---------------------------------------------------------------------------
# Rendering and parsing

def default_pairs(sites, filetypes) -> list[tuple[str | None, str]]:
    """Applicable (site, filetype) pairs: TLD patterns (leading dot)
    carry document types (pdf/pptx), named hosts carry html, and a None
    site carries every filetype."""
    pairs: list[tuple[str | None, str]] = []
    for site in sites:
        site = site or None
        for ft in filetypes:
            if site is None:
                pairs.append((site, ft))
            elif site.startswith("."):
                if ft in ("pdf", "pptx"):
                    pairs.append((site, ft))
            elif ft == "html":
                pairs.append((site, ft))
    return pairs


def render_phrase(term: QueryTerm) -> str:
    return " OR ".join([term.phrase] + term.variants)


def render_queries(
    terms,
    sites,
    filetypes,
    pairs: list[tuple[str | None, str]] | None = None,
) -> list[SearchQuery]:
    """Cartesian product of terms and applicable (site, filetype)
    pairs, ordered by term, then site, then filetype. The phrase (with
    any variant disjunction) is double-quoted; site and filetype
    clauses follow."""
    terms = list(terms)
    if not terms:
        raise ValueError("terms is empty")
    for ft in filetypes:
        if ft not in FILETYPES:
            raise ValueError(f"unknown filetype {ft!r}")
    if pairs is None:
        pairs = default_pairs(sites, filetypes)

    queries: list[SearchQuery] = []
    for term in terms:
        phrase = render_phrase(term)
        for site, ft in pairs:
            rendered = f'"{phrase}"'
            if site:
                rendered += f" site:{site}"
            rendered += f" filetype:.{ft}"
            queries.append(
                SearchQuery(term_id=term.id, site=site, filetype=ft, rendered=rendered)
            )
    return queries


_QUERY_RE = re.compile(
    r'^"(?P<phrase>[^"]+)"(?: site:(?P<site>\S+))?(?: filetype:\.(?P<ft>[a-z0-9]+))?$'
)


def parse_query(rendered: str) -> tuple[list[str], str | None, str | None]:
    """Inverse of rendering: (phrases, site, filetype). The phrase
    disjunction splits on OR."""
    m = _QUERY_RE.match(rendered)
    if not m:
        raise ValueError(f"unparseable query string: {rendered!r}")
    phrases = [p.strip() for p in m.group("phrase").split(" OR ")]
    return phrases, m.group("site"), m.group("ft")
