"""Quotas, URL records, search replay, transports and the polite
fetcher."""

import hashlib
import time

import pytest

from erd.harvest import (
    ContentCache,
    DirectoryTransport,
    FetchError,
    FetchQuota,
    Fetcher,
    FixtureSearchProvider,
    ProviderError,
    ResourceCollection,
    ResourceRecord,
    SearchProvider,
    extract_result_links,
    load_curated_hosts,
    normalize_url,
    quota_for,
    record_id,
    search,
    site_class,
    valid_url,
)
from erd.querygen import SearchQuery

CURATED = frozenset({"blog.example.com", "courses.sample.org"})


def _query(rendered):
    return SearchQuery(term_id="t" * 12, site=None, filetype="html", rendered=rendered)


# ---------------------------------------------------------------------------
# site classes and quotas

@pytest.mark.parametrize(
    "site,expected",
    [
        (None, "open"),
        ("", "open"),
        (".edu", "edu"),
        ("cs.stanford.edu", "edu"),
        ("blog.example.com", "curated-host"),
        (".blog.example.com", "curated-host"),
        ("Blog.Example.Com", "curated-host"),
        ("random.net", "open"),
    ],
)
def test_site_class(site, expected):
    assert site_class(site, CURATED) == expected


@pytest.mark.parametrize(
    "site,filetype,n",
    [
        (".edu", "pdf", 100),
        (".edu", "pptx", 50),
        (".edu", "html", 20),
        ("blog.example.com", "html", 20),
        ("blog.example.com", "pdf", 20),
        (None, "pdf", 20),
        (None, "html", 20),
    ],
)
def test_default_quotas(site, filetype, n):
    q = quota_for("nlp", site, filetype, curated_hosts=CURATED)
    assert q.n == n
    assert q.domain == "nlp" and q.filetype == filetype


def test_quota_overrides_narrowest_key_wins():
    overrides = {"edu:pdf": 60, "nlp:edu:pdf": 40}
    assert quota_for("nlp", ".edu", "pdf", overrides=overrides).n == 40
    assert quota_for("cv", ".edu", "pdf", overrides=overrides).n == 60
    assert quota_for("cv", ".edu", "pptx", overrides=overrides).n == 50


def test_quota_bounds_enforced():
    with pytest.raises(ValueError, match="outside"):
        quota_for("nlp", ".edu", "pdf", overrides={"edu:pdf": 150})
    with pytest.raises(ValueError, match="outside"):
        quota_for("nlp", None, "html", overrides={"open:html": 5})
    with pytest.raises(ValueError, match="site class"):
        FetchQuota(domain="d", filetype="pdf", site_class="bogus", n=50)


def test_curated_hosts_file(tmp_path):
    path = tmp_path / "hosts.txt"
    path.write_text("# comment\nBlog.Example.COM\n\ncourses.sample.org\n")
    hosts = load_curated_hosts(path)
    assert hosts == CURATED
    packaged = load_curated_hosts()
    assert packaged and all(h == h.lower() for h in packaged)


# ---------------------------------------------------------------------------
# URLs and records

def test_normalize_url_cases_host_only():
    url = "HTTPS://WwW.Example.COM/Path/File.PDF?Q=Mixed#frag"
    assert normalize_url(url) == "https://www.example.com/Path/File.PDF?Q=Mixed"


@pytest.mark.parametrize(
    "url,ok",
    [
        ("https://example.com/x", True),
        ("http://example.com", True),
        ("htp:/broken-link", False),
        ("https://", False),
        ("https://exa mple.com/x", False),
        ("mailto:a@b.c", False),
        ("", False),
    ],
)
def test_valid_url(url, ok):
    assert valid_url(url) is ok


def test_record_id_is_hash_prefix():
    url = "https://example.com/a"
    rid = record_id(url)
    assert rid == hashlib.sha256(url.encode()).hexdigest()[:16]
    assert len(rid) == 16


def test_collection_dedups_and_merges_query_ids():
    coll = ResourceCollection()
    a = coll.register("https://Example.com/x", "q1", "nlp", "html")
    b = coll.register("https://example.com/x#sec", "q2", "nlp", "html")
    assert a is b
    assert a.query_ids == {"q1", "q2"}
    assert len(coll) == 1
    assert a.status == "pending"


def test_collection_rejects_malformed():
    coll = ResourceCollection()
    assert coll.register("htp:/broken-link", "q7", "nlp", "pdf") is None
    assert len(coll) == 0
    [rej] = coll.rejections
    assert (rej.url, rej.reason, rej.query_id) == (
        "htp:/broken-link", "malformed-url", "q7",
    )


def test_collection_preserves_registration_order():
    coll = ResourceCollection()
    urls = [f"https://h{i}.org/p" for i in range(5)]
    for u in urls:
        coll.register(u, "q", "d", "html")
    assert [r.url for r in coll.records] == urls


def test_records_jsonl_round_trip(tmp_path):
    coll = ResourceCollection()
    rec = coll.register("https://a.org/one", "q1", "nlp", "pdf")
    rec.status = "fetched"
    rec.content_hash = "ff" * 32
    rec.label = 1
    other = coll.register("https://a.org/two", "q1", "nlp", "pdf")
    other.status = "http-error"
    other.status_detail = "404"
    other.label = 0

    path = tmp_path / "records.jsonl"
    coll.save_jsonl(path)
    assert '"label": "positive"' in path.read_text()
    back = ResourceCollection.load_jsonl(path)
    assert [r.to_dict() for r in back.records] == [r.to_dict() for r in coll.records]
    assert back.records[0].label == 1 and back.records[1].label == 0


def test_record_from_dict_defaults():
    rec = ResourceRecord.from_dict(
        {"id": "x", "url": "https://a.org/", "domain": "d",
         "filetype": "html", "query_ids": ["q"], "status": "pending"}
    )
    assert rec.label is None
    assert rec.content_hash == "" and rec.status_detail == ""


# ---------------------------------------------------------------------------
# result-page parsing and providers

def test_extract_result_links_order_base_and_schemes():
    html = (
        '<div><a href="https://a.org/1">one</a>'
        '<a href="/rel">two</a>'
        '<a href="mailto:x@y.z">no</a>'
        '<a href="javascript:void(0)">no</a>'
        '<a href=" https://b.org/2 ">three</a></div>'
    )
    links = extract_result_links(html, base_url="https://engine.test/serp")
    assert links == [
        "https://a.org/1", "https://engine.test/rel", "https://b.org/2",
    ]


def test_fixture_provider_replays_txt_and_html(tmp_path):
    q = _query('"alpha" filetype:.html')
    stem = hashlib.sha256(q.rendered.encode()).hexdigest()[:16]
    (tmp_path / f"{stem}.txt").write_text(
        "https://a.org/1\n\nhttps://a.org/2\n"
    )
    provider = FixtureSearchProvider(tmp_path)
    assert provider.search(q, 10) == ["https://a.org/1", "https://a.org/2"]
    assert provider.search(q, 1) == ["https://a.org/1"]

    q2 = _query('"beta" filetype:.html')
    stem2 = hashlib.sha256(q2.rendered.encode()).hexdigest()[:16]
    (tmp_path / f"{stem2}.html").write_text(
        '<a href="https://c.org/x">r</a><a href="https://c.org/y">r</a>'
    )
    assert provider.search(q2, 10) == ["https://c.org/x", "https://c.org/y"]


def test_fixture_provider_missing_page_is_an_error(tmp_path):
    provider = FixtureSearchProvider(tmp_path)
    q = _query('"gamma" filetype:.pdf')
    with pytest.raises(ProviderError, match="gamma"):
        provider.search(q, 5)
    try:
        provider.search(q, 5)
    except ProviderError as exc:
        assert not exc.retryable


class _ListProvider(SearchProvider):
    name = "listed"
    engine_hosts = frozenset({"engine.test"})

    def __init__(self, urls):
        self.urls = urls

    def search(self, query, n):
        return self.urls[:n]


def test_search_filters_engine_links_dedups_and_truncates():
    urls = [
        "https://engine.test/settings",
        "https://maps.engine.test/place",
        "https://a.org/1",
        "https://A.org/1",
        "https://b.org/2",
        "https://c.org/3",
    ]
    quota = FetchQuota(domain="d", filetype="html", site_class="open", n=20)
    got = search(_ListProvider(urls), _query("q"), quota)
    assert got == ["https://a.org/1", "https://b.org/2", "https://c.org/3"]

    tight = FetchQuota(domain="d", filetype="html", site_class="open", n=20)
    many = [f"https://h.org/{i}" for i in range(40)]
    got = search(_ListProvider(many), _query("q"), tight)
    assert len(got) == 20


# ---------------------------------------------------------------------------
# transports and cache

def test_directory_transport_paths(tmp_path):
    t = DirectoryTransport(tmp_path)
    assert t.path_for("https://Host.org/a/b.html") == str(
        tmp_path / "host.org" / "a" / "b.html"
    )
    assert t.path_for("https://host.org/dir/") == str(
        tmp_path / "host.org" / "dir" / "index.html"
    )
    assert t.path_for("https://host.org") == str(
        tmp_path / "host.org" / "index.html"
    )


def test_directory_transport_get(tmp_path):
    target = tmp_path / "host.org" / "doc.pdf"
    target.parent.mkdir(parents=True)
    target.write_bytes(b"%PDF-1.4 body")
    t = DirectoryTransport(tmp_path)
    resp = t.get("https://host.org/doc.pdf", timeout=1, max_bytes=1024)
    assert (resp.status_code, resp.body) == (200, b"%PDF-1.4 body")
    missing = t.get("https://host.org/gone.pdf", timeout=1, max_bytes=1024)
    assert (missing.status_code, missing.body) == (404, b"")
    with pytest.raises(FetchError) as err:
        t.get("https://host.org/doc.pdf", timeout=1, max_bytes=4)
    assert err.value.category == "oversize"


def test_content_cache_layout_and_idempotence(tmp_path):
    cache = ContentCache(tmp_path)
    body = b"some bytes"
    digest = cache.put(body)
    assert digest == hashlib.sha256(body).hexdigest()
    blob = tmp_path / digest[:2] / digest
    assert blob.read_bytes() == body
    assert cache.put(body) == digest
    assert cache.has(digest) and cache.get(digest) == body
    assert not cache.has("0" * 64)


# ---------------------------------------------------------------------------
# fetcher

def _workspace(tmp_path, files):
    web = tmp_path / "web"
    for host_path, body in files.items():
        p = web / host_path
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(body)
    return Fetcher(
        DirectoryTransport(web),
        ContentCache(tmp_path / "cache"),
        politeness_s=0.0,
    )


def _pending(url):
    return ResourceRecord(
        id=record_id(normalize_url(url)), url=normalize_url(url),
        domain="d", filetype="html", query_ids={"q"},
    )


def test_fetch_success_stores_and_marks(tmp_path):
    fetcher = _workspace(tmp_path, {"a.org/x.html": b"<p>hi</p>"})
    rec = fetcher.fetch(_pending("https://a.org/x.html"))
    assert rec.status == "fetched"
    assert rec.content_hash == hashlib.sha256(b"<p>hi</p>").hexdigest()
    assert fetcher.cache.get(rec.content_hash) == b"<p>hi</p>"


def test_fetch_http_error_records_status_code(tmp_path):
    fetcher = _workspace(tmp_path, {})
    rec = fetcher.fetch(_pending("https://a.org/gone.html"))
    assert rec.status == "http-error"
    assert rec.status_detail == "404"
    assert rec.content_hash == ""


def test_fetch_skips_non_pending(tmp_path):
    fetcher = _workspace(tmp_path, {"a.org/x.html": b"x"})
    rec = _pending("https://a.org/x.html")
    rec.status = "fetched"
    rec.content_hash = "deadbeef"
    fetcher.fetch(rec)
    assert rec.content_hash == "deadbeef"
    assert fetcher.request_log == []


def test_fetch_oversize_is_not_retried(tmp_path):
    fetcher = _workspace(tmp_path, {"a.org/big.bin": b"x" * 100})
    fetcher.max_body_bytes = 10
    rec = fetcher.fetch(_pending("https://a.org/big.bin"))
    assert rec.status == "http-error"
    assert rec.status_detail == "oversize"
    assert len(fetcher.request_log) == 1


class _FlakyTransport(DirectoryTransport):
    def __init__(self, root):
        super().__init__(root)
        self.calls = 0

    def get(self, url, timeout, max_bytes):
        self.calls += 1
        if self.calls == 1:
            raise FetchError("connection", "reset", retryable=True)
        return super().get(url, timeout, max_bytes)


def test_fetch_retries_transient_failures(tmp_path):
    web = tmp_path / "web"
    (web / "a.org").mkdir(parents=True)
    (web / "a.org" / "x.html").write_bytes(b"ok")
    transport = _FlakyTransport(web)
    fetcher = Fetcher(
        transport, ContentCache(tmp_path / "cache"),
        politeness_s=0.0, retries=2, backoff_base=0.0,
    )
    rec = fetcher.fetch(_pending("https://a.org/x.html"))
    assert rec.status == "fetched"
    assert transport.calls == 2


def test_same_host_requests_are_spaced(tmp_path):
    fetcher = _workspace(
        tmp_path, {f"a.org/{i}.html": b"x" for i in range(3)}
    )
    fetcher.politeness_s = 0.05
    records = [_pending(f"https://a.org/{i}.html") for i in range(3)]
    fetcher.fetch_all(records, concurrency=4)
    stamps = sorted(t for host, t in fetcher.request_log if host == "a.org")
    assert len(stamps) == 3
    gaps = [b - a for a, b in zip(stamps, stamps[1:])]
    assert all(gap >= 0.05 - 1e-3 for gap in gaps)


def test_distinct_hosts_fetch_concurrently(tmp_path):
    files = {}
    for host in ("a.org", "b.org", "c.org"):
        for i in range(2):
            files[f"{host}/{i}.html"] = b"x"
    fetcher = _workspace(tmp_path, files)
    fetcher.politeness_s = 0.2
    records = [
        _pending(f"https://{host}/{i}.html")
        for host in ("a.org", "b.org", "c.org")
        for i in range(2)
    ]
    start = time.monotonic()
    fetcher.fetch_all(records, concurrency=6)
    elapsed = time.monotonic() - start
    # serial would need >= 3 hosts x 0.2s of spacing; concurrent only one
    assert elapsed < 0.45
    assert all(r.status == "fetched" for r in records)
    by_host = {}
    for host, stamp in fetcher.request_log:
        by_host.setdefault(host, []).append(stamp)
    for stamps in by_host.values():
        stamps.sort()
        assert stamps[1] - stamps[0] >= 0.2 - 1e-3


def test_fetch_all_preserves_input_order(tmp_path):
    fetcher = _workspace(
        tmp_path, {f"h{i}.org/p.html": b"x" for i in range(6)}
    )
    records = [_pending(f"https://h{i}.org/p.html") for i in range(6)]
    out = fetcher.fetch_all(records, concurrency=3)
    assert [r.url for r in out] == [r.url for r in records]
    assert all(r.status == "fetched" for r in out)
