"""Parsed-document model: tokenization, sentence segmentation, HTML
extraction and ingestion of external extractor bundles.

A ParsedDocument is the normalized view every later stage works from.
Its free_text is the visible text of the resource; sentences and
paragraphs are character spans into free_text, so concatenating span
texts reproduces free_text up to whitespace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from urllib.parse import urljoin, urlsplit


class ParseError(Exception):
    """Raised when a resource body cannot be turned into a document."""


class BundleFormatError(ParseError):
    """Raised when an extractor bundle violates the bundle schema."""


@dataclass
class Heading:
    level: int
    text: str


@dataclass
class ParsedDocument:
    free_text: str
    sentences: list[tuple[int, int]] = field(default_factory=list)
    paragraphs: list[tuple[int, int]] = field(default_factory=list)
    headings: list[Heading] = field(default_factory=list)
    links: list[str] = field(default_factory=list)
    authors: list[str] = field(default_factory=list)
    bibliography: list[str] = field(default_factory=list)
    num_figures: int = 0
    num_equations: int = 0

    def sentence_texts(self) -> list[str]:
        return [self.free_text[a:b] for a, b in self.sentences]

    def paragraph_texts(self) -> list[str]:
        return [self.free_text[a:b] for a, b in self.paragraphs]

    def to_dict(self) -> dict:
        return {
            "free_text": self.free_text,
            "sentences": [list(s) for s in self.sentences],
            "paragraphs": [list(s) for s in self.paragraphs],
            "headings": [{"level": h.level, "text": h.text} for h in self.headings],
            "links": list(self.links),
            "authors": list(self.authors),
            "bibliography": list(self.bibliography),
            "num_figures": self.num_figures,
            "num_equations": self.num_equations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedDocument":
        return cls(
            free_text=d["free_text"],
            sentences=[tuple(s) for s in d["sentences"]],
            paragraphs=[tuple(s) for s in d["paragraphs"]],
            headings=[Heading(h["level"], h["text"]) for h in d["headings"]],
            links=list(d["links"]),
            authors=list(d["authors"]),
            bibliography=list(d["bibliography"]),
            num_figures=d["num_figures"],
            num_equations=d["num_equations"],
        )


# ---------------------------------------------------------------------------
# Tokenization

# A word token is an alphanumeric run, optionally joined by hyphens or
# apostrophes ("state-of-the-art", "don't", "word2vec"). Anything else
# that is not whitespace becomes a symbol token, one per maximal run.
_TOKEN_RE = re.compile(r"[^\W_]+(?:[-'’][^\W_]+)*|[^\w\s]+")
_ALPHA_RE = re.compile(r"[^\W\d_]+(?:[-'’][^\W\d_]+)*")


def tokenize(text: str) -> list[str]:
    """Lowercased word and symbol tokens in order of appearance."""
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


def tokenize_raw(text: str) -> list[str]:
    """Like tokenize but preserving the original case."""
    return [m.group(0) for m in _TOKEN_RE.finditer(text)]


def is_word_token(tok: str) -> bool:
    return bool(tok) and tok[0].isalnum()


def is_alphabetic_token(tok: str) -> bool:
    """True for letter-only tokens; digits disqualify ("word2vec")."""
    return bool(_ALPHA_RE.fullmatch(tok))


# ---------------------------------------------------------------------------
# Sentence segmentation

# Tokens that end with a period without ending a sentence. Compared
# lowercased, dots kept ("e.g", "u.s").
_ABBREVIATIONS = {
    "al", "approx", "ca", "cf", "ch", "dept", "dr", "e.g", "ed", "eds",
    "eq", "eqs", "et", "etc", "fig", "figs", "i.e", "inc", "jr", "ltd",
    "mr", "mrs", "ms", "no", "p", "pp", "ph.d", "prof", "resp", "sec",
    "sr", "st", "tab", "univ", "u.s", "vol", "vols", "vs",
}

_OPENERS = "([{"
_CLOSERS = ")]}"
# An unclosed bracket stops suppressing splits after this many chars, so
# stray parentheses cannot swallow the rest of a document.
_BRACKET_SPAN_LIMIT = 400

_END_RUN_RE = re.compile(r"[.!?]+")
_PRECEDING_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z.]*$")


def _bracket_suppressed(text: str) -> list[bool]:
    suppressed = [False] * len(text)
    stack: list[int] = []
    for i, ch in enumerate(text):
        if ch in _OPENERS:
            stack.append(i)
        elif ch in _CLOSERS and stack:
            stack.pop()
        if stack and i - stack[0] < _BRACKET_SPAN_LIMIT:
            suppressed[i] = True
    return suppressed


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, trimmed of leading and trailing
    whitespace. Spans partition the non-whitespace characters of text.

    A sentence ends at a run of .!? followed by whitespace and then an
    uppercase letter or digit, unless the period closes a known
    abbreviation, a single capital initial, or sits inside brackets.
    """
    if not text.strip():
        return []
    suppressed = _bracket_suppressed(text)
    breaks: list[int] = []
    for m in _END_RUN_RE.finditer(text):
        end = m.end()
        if end >= len(text):
            continue
        if suppressed[m.start()]:
            continue
        j = end
        while j < len(text) and text[j].isspace():
            j += 1
        if j == end or j >= len(text):
            continue
        nxt = text[j]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if m.group(0).endswith(".") and "!" not in m.group(0) and "?" not in m.group(0):
            tok = _PRECEDING_TOKEN_RE.search(text, 0, m.end())
            if tok:
                word = tok.group(0).rstrip(".").lower()
                if word in _ABBREVIATIONS:
                    continue
                if len(word) == 1 and tok.group(0)[0].isupper():
                    continue
        breaks.append(end)
    spans: list[tuple[int, int]] = []
    start = 0
    for brk in breaks + [len(text)]:
        chunk = text[start:brk]
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        a, b = start + lead, brk - trail
        if a < b:
            spans.append((a, b))
        start = brk
    return spans


# ---------------------------------------------------------------------------
# HTML extraction

_SKIP_TAGS = {"script", "style", "nav", "noscript", "template", "title", "svg"}
_HEADING_TAGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}
# Elements whose text forms a paragraph block. Loose text directly in a
# structural container is flushed as its own block and counts too.
_PARAGRAPH_TAGS = {"p", "li", "blockquote", "pre", "figcaption", "dt", "dd", "td", "th"}
_BLOCK_TAGS = _PARAGRAPH_TAGS | set(_HEADING_TAGS) | {
    "div", "section", "article", "main", "aside", "header", "footer",
    "body", "ul", "ol", "dl", "table", "tr", "thead", "tbody", "figure",
    "form", "br", "hr",
}
_AUTHOR_META_NAMES = {"author", "citation_author", "dc.creator", "parsely-author"}
_AUTHOR_META_PROPS = {"article:author", "og:article:author"}
_BIB_HEADING_RE = re.compile(r"references|bibliography", re.IGNORECASE)
_BYLINE_RE = re.compile(r"^by\s+(.{2,120})$", re.IGNORECASE)
_TEX_BLOCK_RE = re.compile(r"\$\$[^$]+\$\$")
_TEX_INLINE_RE = re.compile(r"\$[^$\n]+\$")

_MAX_AUTHORS = 20


@dataclass
class _Block:
    text: str
    kind: str  # "heading" | "paragraph"
    level: int = 0
    in_bib: bool = False


class _HtmlExtractor(HTMLParser):
    def __init__(self, base_url: str):
        super().__init__(convert_charrefs=True)
        self.base_url = base_url
        self.blocks: list[_Block] = []
        self.links: list[str] = []
        self.meta_authors: list[str] = []
        self.num_figures = 0
        self.num_math = 0
        self._skip = 0
        self._figure = 0
        self._buf: list[str] = []
        self._heading: int = 0
        self._para = 0
        self._li = 0
        self._bib_until: int | None = None  # heading level that ends the region

    # -- text buffering ---------------------------------------------------
    def _flush(self) -> None:
        text = re.sub(r"\s+", " ", "".join(self._buf)).strip()
        self._buf = []
        if not text:
            return
        if self._heading:
            in_bib = False
            if _BIB_HEADING_RE.search(text):
                self._bib_until = self._heading
            elif self._bib_until is not None and self._heading <= self._bib_until:
                self._bib_until = None
            self.blocks.append(_Block(text, "heading", self._heading, in_bib))
        else:
            self.blocks.append(
                _Block(text, "paragraph", 0, self._bib_until is not None and self._li > 0)
            )

    # -- parser events -----------------------------------------------------
    def handle_starttag(self, tag, attrs):
        amap = dict(attrs)
        if tag == "meta":
            name = (amap.get("name") or "").lower()
            prop = (amap.get("property") or "").lower()
            content = (amap.get("content") or "").strip()
            if content and (name in _AUTHOR_META_NAMES or prop in _AUTHOR_META_PROPS):
                self.meta_authors.append(content)
            return
        if tag in _SKIP_TAGS:
            self._skip += 1
            return
        if self._skip:
            return
        if tag == "a":
            href = (amap.get("href") or "").strip()
            if href:
                resolved = urljoin(self.base_url, href)
                if urlsplit(resolved).scheme in ("http", "https"):
                    self.links.append(resolved)
        if tag == "img" and self._figure == 0:
            self.num_figures += 1
        if tag == "figure":
            self.num_figures += 1
            self._figure += 1
        if tag == "math":
            self.num_math += 1
        if tag in _BLOCK_TAGS:
            self._flush()
            if tag in _HEADING_TAGS:
                self._heading = _HEADING_TAGS[tag]
            if tag in _PARAGRAPH_TAGS:
                self._para += 1
            if tag == "li":
                self._li += 1

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip = max(0, self._skip - 1)
            return
        if self._skip:
            return
        if tag in _BLOCK_TAGS:
            self._flush()
            if tag in _HEADING_TAGS:
                self._heading = 0
            if tag in _PARAGRAPH_TAGS:
                self._para = max(0, self._para - 1)
            if tag == "li":
                self._li = max(0, self._li - 1)
        if tag == "figure":
            self._figure = max(0, self._figure - 1)

    def handle_data(self, data):
        if not self._skip and data:
            self._buf.append(data)

    def close(self):
        super().close()
        self._flush()


def _split_author_names(raw: str) -> list[str]:
    parts = re.split(r",|;|\band\b|&", raw)
    return [p.strip() for p in parts if p.strip()]


def parse_html(body: bytes | str, base_url: str = "") -> ParsedDocument:
    """Extract a ParsedDocument from raw HTML.

    Script, style and nav content never reaches free_text. Figures count
    one per <figure> element or bare <img> outside any figure. Equations
    count <math> elements plus TeX spans ($...$ and $$...$$) found in
    the text. Raises ParseError when no visible text remains.
    """
    if isinstance(body, bytes):
        html = body.decode("utf-8", errors="replace")
    else:
        html = body
    extractor = _HtmlExtractor(base_url)
    try:
        extractor.feed(html)
        extractor.close()
    except Exception as exc:  # html.parser rarely raises, but be explicit
        raise ParseError(f"html extraction failed: {exc}") from exc

    blocks = extractor.blocks
    if not blocks:
        raise ParseError("no visible text in document")

    free_text = "\n\n".join(b.text for b in blocks)
    doc = ParsedDocument(free_text=free_text)
    doc.links = extractor.links
    doc.num_figures = extractor.num_figures

    offset = 0
    bylines: list[str] = []
    for b in blocks:
        span = (offset, offset + len(b.text))
        if b.kind == "heading":
            doc.headings.append(Heading(b.level, b.text))
        else:
            doc.paragraphs.append(span)
            if b.in_bib:
                doc.bibliography.append(b.text)
            m = _BYLINE_RE.match(b.text)
            if m:
                bylines.extend(_split_author_names(m.group(1)))
        for a, z in segment_sentences(b.text):
            doc.sentences.append((offset + a, offset + z))
        offset += len(b.text) + 2

    authors: list[str] = []
    for name in extractor.meta_authors + bylines:
        for part in _split_author_names(name) or [name]:
            if part not in authors:
                authors.append(part)
    doc.authors = authors[:_MAX_AUTHORS]

    tex_blocks = _TEX_BLOCK_RE.findall(free_text)
    remainder = _TEX_BLOCK_RE.sub(" ", free_text)
    doc.num_equations = extractor.num_math + len(tex_blocks) + len(
        _TEX_INLINE_RE.findall(remainder)
    )
    return doc


# ---------------------------------------------------------------------------
# External extractor bundles (PDF / slide decks)

# Characters that mark a line as mathematical when dense enough.
_MATH_CHARS = set("=+-*/^_\\{}()[]<>|~$%" "∑∏∫√≤≥≠≈∂∇·×÷±∞∈∉∀∃αβγδεθλμπσφψωΔΣΩ")
_MATH_DENSITY = 0.30


def _looks_like_equation(line: str) -> bool:
    chars = [c for c in line if not c.isspace()]
    if len(chars) < 3:
        return False
    mathy = sum(1 for c in chars if c in _MATH_CHARS)
    return mathy / len(chars) >= _MATH_DENSITY


def ingest_extracted(bundle: dict | str | bytes) -> ParsedDocument:
    """Build a ParsedDocument from an external extractor bundle.

    The bundle is a JSON object with a required "text" field and
    optional "headings" ([{level, text}]), "authors", "references" and
    "separators" (character offsets into text marking paragraph
    boundaries). Violations raise BundleFormatError naming the field.
    """
    if isinstance(bundle, (str, bytes)):
        try:
            bundle = json.loads(bundle)
        except json.JSONDecodeError as exc:
            raise BundleFormatError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(bundle, dict):
        raise BundleFormatError("bundle must be a JSON object")

    text = bundle.get("text")
    if not isinstance(text, str) or not text.strip():
        raise BundleFormatError("field 'text' must be a non-empty string")

    doc = ParsedDocument(free_text=text)

    for i, h in enumerate(bundle.get("headings") or []):
        if not isinstance(h, dict) or "level" not in h or "text" not in h:
            raise BundleFormatError(f"field 'headings[{i}]' must have level and text")
        level, htext = h["level"], h["text"]
        if not isinstance(level, int) or not 1 <= level <= 6:
            raise BundleFormatError(f"field 'headings[{i}].level' must be an int in 1..6")
        if not isinstance(htext, str):
            raise BundleFormatError(f"field 'headings[{i}].text' must be a string")
        doc.headings.append(Heading(level, htext))

    for key in ("authors", "references"):
        vals = bundle.get(key) or []
        if not isinstance(vals, list) or any(not isinstance(v, str) for v in vals):
            raise BundleFormatError(f"field '{key}' must be a list of strings")
    doc.authors = list(bundle.get("authors") or [])[:_MAX_AUTHORS]
    doc.bibliography = list(bundle.get("references") or [])

    seps = bundle.get("separators") or []
    if not isinstance(seps, list) or any(
        not isinstance(s, int) or s < 0 or s > len(text) for s in seps
    ):
        raise BundleFormatError("field 'separators' must be char offsets into text")

    cuts = sorted(set([0] + list(seps) + [len(text)]))
    for a, b in zip(cuts, cuts[1:]):
        chunk = text[a:b]
        # blank lines inside a segment split it further
        pos = a
        for piece in re.split(r"\n\s*\n", chunk):
            idx = text.index(piece, pos) if piece else pos
            lead = len(piece) - len(piece.lstrip())
            trail = len(piece) - len(piece.rstrip())
            pa, pb = idx + lead, idx + len(piece) - trail
            if pa < pb:
                doc.paragraphs.append((pa, pb))
            pos = idx + len(piece)

    for pa, pb in doc.paragraphs:
        for a, b in segment_sentences(text[pa:pb]):
            doc.sentences.append((pa + a, pa + b))

    doc.num_equations = sum(
        1 for line in text.splitlines() if _looks_like_equation(line)
    )
    return doc
