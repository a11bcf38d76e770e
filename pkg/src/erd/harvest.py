"""Search execution, URL registration and polite fetching.

Search providers sit behind a small interface: live engine adapters
parse result-page anchors, while the fixture provider replays recorded
result pages and is the tested reference. Discovered URLs dedup into a
record collection keyed by normalized URL; fetching respects a per-host
politeness interval and stores raw bytes in a content-addressed cache.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from urllib.parse import parse_qs, quote_plus, urljoin, urlsplit, urlunsplit

import requests
from importlib import resources as importlib_resources

from erd.ioutil import atomic_write_text

DEFAULT_POLITENESS_S = 1.0
DEFAULT_MAX_BODY_BYTES = 50 * 1024 * 1024
DEFAULT_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 3
DEFAULT_USER_AGENT = "erd-harvester/0.1"

QUOTA_MIN, QUOTA_MAX = 20, 100
SITE_CLASSES = ("edu", "curated-host", "open")
DEFAULT_QUOTAS = {
    ("edu", "pdf"): 100,
    ("edu", "pptx"): 50,
    ("curated-host", "html"): 20,
}


class ProviderError(Exception):
    """Search provider failure; retryable carries backoff guidance."""

    def __init__(self, message, retryable: bool = False, retry_after: float | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.retry_after = retry_after


class ThrottleSignal(ProviderError):
    """Engine asked us to slow down (rate-limit response)."""

    def __init__(self, message, retry_after: float | None = None):
        super().__init__(message, retryable=True, retry_after=retry_after)


class FetchError(Exception):
    """Transport-level fetch failure with a category label."""

    def __init__(self, category: str, message: str, retryable: bool = False):
        super().__init__(message)
        self.category = category
        self.retryable = retryable


# ---------------------------------------------------------------------------
# Quotas

@dataclass
class FetchQuota:
    domain: str
    filetype: str
    site_class: str
    n: int

    def __post_init__(self):
        if self.site_class not in SITE_CLASSES:
            raise ValueError(f"unknown site class {self.site_class!r}")
        if not QUOTA_MIN <= self.n <= QUOTA_MAX:
            raise ValueError(f"quota n={self.n} outside [{QUOTA_MIN}, {QUOTA_MAX}]")


def load_curated_hosts(path=None) -> frozenset[str]:
    """Hostnames treated as curated blog/course sources. Without a path
    the built-in list ships with the package."""
    if path is None:
        text = (
            importlib_resources.files("erd.data")
            .joinpath("curated_hosts.txt")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return frozenset(
        line.strip().lower()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


def site_class(site: str | None, curated_hosts) -> str:
    if site is None or site == "":
        return "open"
    if site == ".edu" or site.endswith(".edu"):
        return "edu"
    if site.lstrip(".").lower() in curated_hosts:
        return "curated-host"
    return "open"


def quota_for(
    domain: str,
    site: str | None,
    filetype: str,
    curated_hosts=frozenset(),
    overrides: dict | None = None,
) -> FetchQuota:
    """Quota for one (domain, site, filetype) stratum. Overrides are
    keyed "site_class:filetype" or "domain:site_class:filetype"."""
    cls = site_class(site, curated_hosts)
    n = DEFAULT_QUOTAS.get((cls, filetype), QUOTA_MIN)
    if overrides:
        n = overrides.get(f"{cls}:{filetype}", n)
        n = overrides.get(f"{domain}:{cls}:{filetype}", n)
    return FetchQuota(domain=domain, filetype=filetype, site_class=cls, n=n)


# ---------------------------------------------------------------------------
# URL normalization and records

_LABEL_NAMES = {1: "positive", 0: "negative"}
_LABEL_VALUES = {v: k for k, v in _LABEL_NAMES.items()}


def normalize_url(url: str) -> str:
    """Lowercase scheme and host, strip the fragment; path and query
    are preserved byte for byte."""
    parts = urlsplit(url)
    netloc = parts.netloc.lower()
    return urlunsplit((parts.scheme.lower(), netloc, parts.path, parts.query, ""))


def valid_url(url: str) -> bool:
    if not url or any(c.isspace() for c in url):
        return False
    parts = urlsplit(url)
    return parts.scheme in ("http", "https") and bool(parts.hostname)


def record_id(normalized_url: str) -> str:
    return hashlib.sha256(normalized_url.encode("utf-8")).hexdigest()[:16]


@dataclass
class ResourceRecord:
    id: str
    url: str
    domain: str
    filetype: str
    query_ids: set[str] = field(default_factory=set)
    status: str = "pending"
    content_hash: str = ""
    text_path: str = ""
    label: int | None = None
    annotators: list[str] = field(default_factory=list)
    status_detail: str = ""

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "url": self.url,
            "domain": self.domain,
            "filetype": self.filetype,
            "query_ids": sorted(self.query_ids),
            "status": self.status,
            "content_hash": self.content_hash,
            "text_path": self.text_path,
        }
        if self.label is not None:
            d["label"] = _LABEL_NAMES[self.label]
        if self.annotators:
            d["annotators"] = list(self.annotators)
        if self.status_detail:
            d["status_detail"] = self.status_detail
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceRecord":
        return cls(
            id=d["id"],
            url=d["url"],
            domain=d["domain"],
            filetype=d["filetype"],
            query_ids=set(d["query_ids"]),
            status=d["status"],
            content_hash=d.get("content_hash", ""),
            text_path=d.get("text_path", ""),
            label=_LABEL_VALUES.get(d.get("label")),
            annotators=list(d.get("annotators", [])),
            status_detail=d.get("status_detail", ""),
        )


@dataclass
class Rejection:
    url: str
    reason: str
    query_id: str

    def to_dict(self) -> dict:
        return {"url": self.url, "reason": self.reason, "query_id": self.query_id}


class ResourceCollection:
    """URL-deduplicated record set; registration order is preserved.

    Single writer, many readers: register() takes an internal lock, so
    concurrent query executions may share one collection.
    """

    def __init__(self):
        self._by_url: dict[str, ResourceRecord] = {}
        self.rejections: list[Rejection] = []
        self._lock = threading.Lock()

    @property
    def records(self) -> list[ResourceRecord]:
        return list(self._by_url.values())

    def __len__(self) -> int:
        return len(self._by_url)

    def register(
        self, url: str, query_id: str, domain: str, filetype: str
    ) -> ResourceRecord | None:
        """New pending record for an unseen URL, or the existing record
        with the query id merged in. Malformed URLs become rejection
        entries and return None."""
        with self._lock:
            if not valid_url(url):
                self.rejections.append(Rejection(url, "malformed-url", query_id))
                return None
            normalized = normalize_url(url)
            rec = self._by_url.get(normalized)
            if rec is None:
                rec = ResourceRecord(
                    id=record_id(normalized),
                    url=normalized,
                    domain=domain,
                    filetype=filetype,
                    query_ids={query_id},
                )
                self._by_url[normalized] = rec
            else:
                rec.query_ids.add(query_id)
            return rec

    def save_jsonl(self, path) -> None:
        write_records_jsonl(path, self.records)

    @classmethod
    def load_jsonl(cls, path) -> "ResourceCollection":
        coll = cls()
        for rec in read_records_jsonl(path):
            coll._by_url[rec.url] = rec
        return coll


def write_records_jsonl(path, records) -> None:
    payload = "".join(
        json.dumps(rec.to_dict(), sort_keys=True) + "\n" for rec in records
    )
    atomic_write_text(path, payload)


def read_records_jsonl(path) -> list[ResourceRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(ResourceRecord.from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Search providers

class _AnchorCollector(HTMLParser):
    def __init__(self, base_url: str):
        super().__init__(convert_charrefs=True)
        self.base_url = base_url
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag != "a":
            return
        href = dict(attrs).get("href")
        if href:
            self.hrefs.append(urljoin(self.base_url, href.strip()))


def extract_result_links(html: str, base_url: str = "") -> list[str]:
    """Anchor targets of a search result page, in page order."""
    collector = _AnchorCollector(base_url)
    collector.feed(html)
    collector.close()
    return [u for u in collector.hrefs if urlsplit(u).scheme in ("http", "https")]


def _host_of(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


def _under_hosts(url: str, hosts) -> bool:
    host = _host_of(url)
    return any(host == h or host.endswith("." + h) for h in hosts)


class SearchProvider(ABC):
    name: str = "provider"
    engine_hosts: frozenset[str] = frozenset()

    @abstractmethod
    def search(self, query, n: int) -> list[str]:
        """At most n result URLs in engine rank order."""


class FixtureSearchProvider(SearchProvider):
    """Replays recorded result pages from a directory.

    A query's page lives at <root>/<sha256(rendered)[:16]>.html (parsed
    like a live result page) or .txt (one URL per line). A missing
    recording is a provider error, not an empty result.
    """

    name = "fixture"

    def __init__(self, root):
        self.root = str(root)

    def _fixture_stem(self, rendered: str) -> str:
        return hashlib.sha256(rendered.encode("utf-8")).hexdigest()[:16]

    def search(self, query, n: int) -> list[str]:
        stem = os.path.join(self.root, self._fixture_stem(query.rendered))
        if os.path.exists(stem + ".html"):
            with open(stem + ".html", encoding="utf-8") as f:
                urls = extract_result_links(f.read())
        elif os.path.exists(stem + ".txt"):
            with open(stem + ".txt", encoding="utf-8") as f:
                urls = [line.strip() for line in f if line.strip()]
        else:
            raise ProviderError(
                f"no recorded result page for query {query.rendered!r} "
                f"(expected {stem}.html)",
                retryable=False,
            )
        return urls[:n]


class HtmlEngineProvider(SearchProvider):
    """Live engine adapter: GET the result page, collect anchors.

    Engine markup churns, so anything page-structure-specific stays in
    the per-engine rewrite hook; the fixture provider exercises the
    shared anchor extraction.
    """

    def __init__(
        self,
        name: str,
        url_template: str,
        engine_hosts,
        session: requests.Session | None = None,
        timeout: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        user_agent: str = DEFAULT_USER_AGENT,
        backoff_base: float = 1.0,
    ):
        self.name = name
        self.url_template = url_template
        self.engine_hosts = frozenset(h.lower() for h in engine_hosts)
        self.session = session or requests.Session()
        self.timeout = timeout
        self.retries = retries
        self.user_agent = user_agent
        self.backoff_base = backoff_base

    def rewrite(self, url: str) -> str | None:
        """Hook: unwrap engine redirect URLs; None drops the link."""
        return url

    def search(self, query, n: int) -> list[str]:
        page_url = self.url_template.format(query=quote_plus(query.rendered))
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.get(
                    page_url,
                    timeout=self.timeout,
                    headers={"User-Agent": self.user_agent},
                )
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff_base * (2 ** attempt))
                    continue
                raise ProviderError(
                    f"{self.name}: transport failure: {exc}",
                    retryable=True,
                    retry_after=self.backoff_base * (2 ** attempt),
                ) from exc
            if resp.status_code in (429, 503):
                retry_after = _parse_retry_after(resp.headers.get("Retry-After"))
                raise ThrottleSignal(
                    f"{self.name}: rate limited ({resp.status_code})",
                    retry_after=retry_after,
                )
            if resp.status_code != 200:
                raise ProviderError(
                    f"{self.name}: HTTP {resp.status_code} on result page",
                    retryable=resp.status_code >= 500,
                )
            urls = []
            for link in extract_result_links(resp.text, base_url=page_url):
                link = self.rewrite(link)
                if link:
                    urls.append(link)
            return urls[:n]
        raise ProviderError(f"{self.name}: {last_exc}", retryable=True)


def _parse_retry_after(value) -> float | None:
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        return None


class DuckDuckGoProvider(HtmlEngineProvider):
    def __init__(self, **kwargs):
        super().__init__(
            name="duckduckgo",
            url_template="https://html.duckduckgo.com/html/?q={query}",
            engine_hosts={"duckduckgo.com"},
            **kwargs,
        )

    def rewrite(self, url: str) -> str | None:
        parts = urlsplit(url)
        host = (parts.hostname or "").lower()
        if host.endswith("duckduckgo.com") and parts.path.startswith("/l/"):
            target = parse_qs(parts.query).get("uddg")
            return target[0] if target else None
        return url


class BingProvider(HtmlEngineProvider):
    def __init__(self, **kwargs):
        super().__init__(
            name="bing",
            url_template="https://www.bing.com/search?q={query}",
            engine_hosts={"bing.com", "microsoft.com", "msn.com"},
            **kwargs,
        )


def search(provider: SearchProvider, query, quota: FetchQuota) -> list[str]:
    """Execute one query: provider results with engine self-links
    dropped, deduplicated in rank order, truncated to the quota."""
    urls = provider.search(query, quota.n)
    seen: set[str] = set()
    out: list[str] = []
    for url in urls:
        if _under_hosts(url, provider.engine_hosts):
            continue
        key = normalize_url(url) if valid_url(url) else url
        if key not in seen:
            seen.add(key)
            out.append(url)
        if len(out) >= quota.n:
            break
    return out


# ---------------------------------------------------------------------------
# Transports

@dataclass
class TransportResponse:
    status_code: int
    body: bytes


class Transport(ABC):
    @abstractmethod
    def get(self, url: str, timeout: float, max_bytes: int) -> TransportResponse:
        """GET a URL; raises FetchError for transport-level failures."""


class HttpTransport(Transport):
    def __init__(self, user_agent: str = DEFAULT_USER_AGENT,
                 session: requests.Session | None = None):
        self.user_agent = user_agent
        self.session = session or requests.Session()

    def get(self, url: str, timeout: float, max_bytes: int) -> TransportResponse:
        try:
            resp = self.session.get(
                url,
                timeout=timeout,
                stream=True,
                headers={"User-Agent": self.user_agent},
            )
        except requests.Timeout as exc:
            raise FetchError("timeout", str(exc), retryable=True) from exc
        except requests.exceptions.SSLError as exc:
            raise FetchError("tls", str(exc)) from exc
        except requests.TooManyRedirects as exc:
            raise FetchError("redirect-loop", str(exc)) from exc
        except requests.RequestException as exc:
            raise FetchError("connection", str(exc), retryable=True) from exc
        with resp:
            chunks = []
            size = 0
            for chunk in resp.iter_content(chunk_size=65536):
                size += len(chunk)
                if size > max_bytes:
                    raise FetchError(
                        "oversize", f"body exceeds {max_bytes} bytes"
                    )
                chunks.append(chunk)
            return TransportResponse(resp.status_code, b"".join(chunks))


class DirectoryTransport(Transport):
    """Serves URLs from a directory tree: <root>/<host>/<path>, with
    index.html for directory paths. Missing files return 404. Used for
    fully offline pipeline runs."""

    def __init__(self, root):
        self.root = str(root)

    def path_for(self, url: str) -> str:
        parts = urlsplit(url)
        host = (parts.hostname or "").lower()
        path = parts.path
        if not path or path.endswith("/"):
            path += "index.html"
        return os.path.join(self.root, host, path.lstrip("/"))

    def get(self, url: str, timeout: float, max_bytes: int) -> TransportResponse:
        path = self.path_for(url)
        if not os.path.isfile(path):
            return TransportResponse(404, b"")
        with open(path, "rb") as f:
            body = f.read(max_bytes + 1)
        if len(body) > max_bytes:
            raise FetchError("oversize", f"body exceeds {max_bytes} bytes")
        return TransportResponse(200, body)


# ---------------------------------------------------------------------------
# Content-addressed cache

class ContentCache:
    """Append-only blob store keyed by sha256 of the raw bytes, laid
    out as <root>/<first two hex chars>/<full hash>."""

    def __init__(self, root):
        self.root = str(root)

    def path(self, content_hash: str) -> str:
        return os.path.join(self.root, content_hash[:2], content_hash)

    def put(self, body: bytes) -> str:
        digest = hashlib.sha256(body).hexdigest()
        path = self.path(digest)
        if not os.path.exists(path):
            os.makedirs(os.path.dirname(path), exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
            with os.fdopen(fd, "wb") as f:
                f.write(body)
            os.replace(tmp, path)
        return digest

    def get(self, content_hash: str) -> bytes:
        with open(self.path(content_hash), "rb") as f:
            return f.read()

    def has(self, content_hash: str) -> bool:
        return os.path.exists(self.path(content_hash))


# ---------------------------------------------------------------------------
# Polite fetcher

class Fetcher:
    """Fetches pending records with per-host politeness.

    Requests to one host are serialized and spaced at least
    politeness_s apart; distinct hosts fetch concurrently. Every issued
    request lands in request_log as (host, monotonic timestamp), which
    makes the spacing contract assertable in tests.
    """

    def __init__(
        self,
        transport: Transport,
        cache: ContentCache,
        politeness_s: float = DEFAULT_POLITENESS_S,
        max_body_bytes: int = DEFAULT_MAX_BODY_BYTES,
        timeout: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        backoff_base: float = 0.5,
    ):
        self.transport = transport
        self.cache = cache
        self.politeness_s = politeness_s
        self.max_body_bytes = max_body_bytes
        self.timeout = timeout
        self.retries = retries
        self.backoff_base = backoff_base
        self.request_log: list[tuple[str, float]] = []
        self._log_lock = threading.Lock()
        self._host_locks: dict[str, threading.Lock] = {}
        self._last_request: dict[str, float] = {}
        self._master = threading.Lock()

    def _host_lock(self, host: str) -> threading.Lock:
        with self._master:
            lock = self._host_locks.get(host)
            if lock is None:
                lock = threading.Lock()
                self._host_locks[host] = lock
            return lock

    def _polite_get(self, url: str) -> TransportResponse:
        host = _host_of(url)
        with self._host_lock(host):
            last = self._last_request.get(host)
            now = time.monotonic()
            if last is not None:
                wait = self.politeness_s - (now - last)
                if wait > 0:
                    time.sleep(wait)
            stamp = time.monotonic()
            self._last_request[host] = stamp
            with self._log_lock:
                self.request_log.append((host, stamp))
        return self.transport.get(url, self.timeout, self.max_body_bytes)

    def fetch(self, record: ResourceRecord) -> ResourceRecord:
        """Fetch one pending record; non-pending records are left
        untouched. 2xx stores bytes in the cache and marks the record
        fetched; anything else records http-error with a reason."""
        if record.status != "pending":
            return record
        attempt = 0
        while True:
            try:
                resp = self._polite_get(record.url)
                break
            except FetchError as exc:
                if exc.retryable and attempt < self.retries:
                    time.sleep(self.backoff_base * (2 ** attempt))
                    attempt += 1
                    continue
                record.status = "http-error"
                record.status_detail = exc.category
                return record
        if 200 <= resp.status_code < 300:
            record.content_hash = self.cache.put(resp.body)
            record.status = "fetched"
            record.status_detail = ""
        else:
            record.status = "http-error"
            record.status_detail = str(resp.status_code)
        return record

    def fetch_all(self, records, concurrency: int = 8) -> list[ResourceRecord]:
        records = list(records)
        if concurrency <= 1 or len(records) <= 1:
            for rec in records:
                self.fetch(rec)
            return records
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(self.fetch, records))
        return records
