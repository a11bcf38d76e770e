"""Pipeline stages and the manifest-driven runner.

Stages communicate only through files under the workspace, so every
stage is resumable and can be re-run (or reimplemented) in isolation.
Each completed stage writes manifests/<stage>.json with the config
hash, input file hashes, flags, and timestamps; re-running with the
same config, flags, and inputs is a no-op. A config-hash mismatch
against an existing manifest is refused without force=True.
"""

from __future__ import annotations

import glob
import json
import os
import time
from dataclasses import dataclass, field

from erd import docmodel, evalanalysis, harvest, querygen, relevance
from erd.classifier import (
    DesignMatrix,
    ForestParams,
    fit_binning,
    load_model,
    save_model,
    train_forest,
)
from erd.config import ConfigError, WorkspaceConfig
from erd.evalanalysis import EvalReport, LabeledDataset
from erd.features import (
    FeatureVector,
    extract_features,
    load_dictionary,
    read_features_jsonl,
    write_features_jsonl,
)
from erd.ioutil import atomic_write_json, atomic_write_text, file_sha256

STAGES = (
    "queries",
    "search",
    "fetch",
    "parse",
    "featurize",
    "score",
    "train",
    "evaluate",
    "analyze",
)

VALID_GROUPS = ("g1", "g2", "g3")


class MissingArtifact(Exception):
    """A required input artifact from a prior stage is absent."""


class ProviderFailure(Exception):
    """A search provider or network dependency failed."""


@dataclass
class StageFlags:
    domain: str | None = None
    groups: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "groups": list(self.groups) if self.groups is not None else None,
        }


@dataclass
class StageResult:
    stage: str
    ran: bool
    outputs: list[str] = field(default_factory=list)
    manifest_path: str = ""


# ---------------------------------------------------------------------------
# Shared artifact-path helpers

def _domains(cfg: WorkspaceConfig, flags: StageFlags) -> list[str]:
    if flags.domain is None:
        return list(cfg.domains)
    if flags.domain not in cfg.domains:
        raise ConfigError(f"domain {flags.domain!r} is not configured")
    return [flags.domain]


def _terms_path(cfg, domain):
    return cfg.path("queries", f"{domain}.terms.jsonl")


def _queries_path(cfg, domain):
    return cfg.path("queries", f"{domain}.txt")


def _registered_path(cfg, domain):
    return cfg.path("resources", f"{domain}.registered.jsonl")


def _rejected_path(cfg, domain):
    return cfg.path("resources", f"{domain}.rejected.jsonl")


def _fetched_path(cfg, domain):
    return cfg.path("resources", f"{domain}.fetched.jsonl")


def _parsed_index_path(cfg, domain):
    return cfg.path("resources", f"{domain}.parsed.jsonl")


def _base_features_path(cfg, domain):
    return cfg.path("features", f"{domain}.base.jsonl")


def _features_path(cfg, domain):
    return cfg.path("features", f"{domain}.jsonl")


def groups_tag(groups) -> str:
    return "-".join(sorted(frozenset(groups)))


def _model_path(cfg, source, groups):
    return cfg.path("models", f"forest_{source}_{groups_tag(groups)}.json")


def _load_terms(path) -> list[querygen.QueryTerm]:
    terms = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            terms.append(
                querygen.QueryTerm(
                    id=d["id"],
                    phrase=d["phrase"],
                    variants=list(d.get("variants", [])),
                    domain=d.get("domain", ""),
                    source=d.get("source", "external-list"),
                )
            )
    return terms


def _load_parsed_doc(cfg, record) -> docmodel.ParsedDocument:
    path = cfg.path(record.text_path)
    if not os.path.isfile(path):
        raise MissingArtifact(f"parsed document missing: {path}")
    with open(path, encoding="utf-8") as f:
        return docmodel.ParsedDocument.from_dict(json.load(f))


def _parsed_records(cfg, domain, parsed_only: bool = True):
    records = harvest.read_records_jsonl(_parsed_index_path(cfg, domain))
    if parsed_only:
        records = [r for r in records if r.status == "fetched" and r.text_path]
    return records


def _load_labels(cfg) -> dict[str, int]:
    """URL -> {1,0} from the labels file (url<TAB>positive|negative)."""
    if not cfg.labels:
        raise ConfigError("config does not set a labels file")
    path = cfg.path(cfg.labels)
    if not os.path.isfile(path):
        raise MissingArtifact(f"labels file missing: {path}")
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("positive", "negative"):
                raise ConfigError(f"{path}:{i}: expected 'url<TAB>positive|negative'")
            labels[harvest.normalize_url(parts[0])] = 1 if parts[1] == "positive" else 0
    return labels


def _labeled_dataset(cfg, domain, labels: dict[str, int]) -> LabeledDataset:
    """Join the domain's feature vectors to labels via record URLs.
    Unlabeled resources are dropped; a domain with no labeled rows is a
    configuration problem."""
    records = {r.id: r for r in _parsed_records(cfg, domain)}
    vectors, y = [], []
    for fv in read_features_jsonl(_features_path(cfg, domain)):
        rec = records.get(fv.resource_id)
        if rec is None:
            continue
        label = labels.get(rec.url)
        if label is None:
            continue
        vectors.append(fv)
        y.append(label)
    if not vectors:
        raise ConfigError(f"no labeled feature rows for domain {domain!r}")
    return LabeledDataset(vectors=vectors, labels=y)


def _labeled_records(cfg, domains, labels: dict[str, int]):
    """Parsed records with label fields filled in where known."""
    out = []
    for domain in domains:
        for rec in _parsed_records(cfg, domain):
            if rec.url in labels:
                rec.label = labels[rec.url]
            out.append(rec)
    return out


# ---------------------------------------------------------------------------
# Stage: queries

def _queries_inputs(cfg, flags):
    paths = []
    for d in _domains(cfg, flags):
        dc = cfg.domains[d]
        if dc.terms_file:
            paths.append(cfg.path(dc.terms_file))
        paths.extend(cfg.path(p) for p in dc.seed_docs)
    if cfg.aliases:
        paths.append(cfg.path(cfg.aliases))
    return paths


def _stage_queries(cfg, flags):
    stopwords = querygen.load_stopwords()
    aliases = querygen.load_aliases(cfg.path(cfg.aliases)) if cfg.aliases else {}
    outputs = []
    for d in _domains(cfg, flags):
        dc = cfg.domains[d]
        if dc.terms_file:
            with open(cfg.path(dc.terms_file), encoding="utf-8") as f:
                phrases = [
                    line.strip()
                    for line in f
                    if line.strip() and not line.startswith("#")
                ]
            terms = [
                querygen.QueryTerm(
                    id=querygen.term_id(d, p),
                    phrase=p,
                    domain=d,
                    source="external-list",
                )
                for p in phrases
            ]
        else:
            texts = []
            for doc_path in dc.seed_docs:
                with open(cfg.path(doc_path), encoding="utf-8") as f:
                    texts.append(f.read())
            params = querygen.TextRankParams(top_k=dc.top_k, **cfg.textrank)
            terms = querygen.extract_keywords(
                texts, params=params, domain=d, stopwords=stopwords
            )
        terms = [querygen.expand_variants(t, aliases) for t in terms]

        terms_path = _terms_path(cfg, d)
        atomic_write_text(
            terms_path,
            "".join(
                json.dumps(
                    {
                        "id": t.id,
                        "phrase": t.phrase,
                        "variants": t.variants,
                        "domain": t.domain,
                        "source": t.source,
                    },
                    sort_keys=True,
                )
                + "\n"
                for t in terms
            ),
        )
        queries = querygen.render_queries(terms, cfg.sites, cfg.filetypes)
        qpath = _queries_path(cfg, d)
        atomic_write_text(qpath, "".join(q.rendered + "\n" for q in queries))
        outputs.extend([terms_path, qpath])
    return outputs


# ---------------------------------------------------------------------------
# Stage: search

def _build_providers(cfg) -> list[harvest.SearchProvider]:
    providers = []
    for p in cfg.providers:
        if p["kind"] == "fixture":
            providers.append(harvest.FixtureSearchProvider(cfg.path(p["root"])))
        elif p["kind"] == "duckduckgo":
            providers.append(harvest.DuckDuckGoProvider())
        else:
            providers.append(harvest.BingProvider())
    return providers


def _curated_hosts(cfg) -> frozenset[str]:
    path = cfg.path(cfg.curated_hosts_file) if cfg.curated_hosts_file else None
    return harvest.load_curated_hosts(path)


def _search_inputs(cfg, flags):
    paths = []
    for d in _domains(cfg, flags):
        paths.extend([_terms_path(cfg, d), _queries_path(cfg, d)])
    return paths


def _stage_search(cfg, flags):
    providers = _build_providers(cfg)
    curated = _curated_hosts(cfg)
    outputs = []
    for d in _domains(cfg, flags):
        terms = _load_terms(_terms_path(cfg, d))
        queries = querygen.render_queries(terms, cfg.sites, cfg.filetypes)
        # The .txt artifact must agree with the re-rendered queries;
        # disagreement means the stages were run against different configs.
        with open(_queries_path(cfg, d), encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
        if lines != [q.rendered for q in queries]:
            raise ConfigError(
                f"{_queries_path(cfg, d)} does not match the rendered "
                "query set; re-run the queries stage"
            )

        collection = harvest.ResourceCollection()
        try:
            for q in queries:
                quota = harvest.quota_for(
                    d, q.site, q.filetype, curated, cfg.quota_overrides
                )
                for provider in providers:
                    for url in harvest.search(provider, q, quota):
                        collection.register(url, q.query_id, d, q.filetype)
        except harvest.ProviderError as exc:
            raise ProviderFailure(f"search failed for domain {d!r}: {exc}")

        reg_path = _registered_path(cfg, d)
        collection.save_jsonl(reg_path)
        rej_path = _rejected_path(cfg, d)
        atomic_write_text(
            rej_path,
            "".join(
                json.dumps(r.to_dict(), sort_keys=True) + "\n"
                for r in collection.rejections
            ),
        )
        outputs.extend([reg_path, rej_path])
    return outputs


# ---------------------------------------------------------------------------
# Stage: fetch

def _fetch_inputs(cfg, flags):
    return [_registered_path(cfg, d) for d in _domains(cfg, flags)]


def _build_transport(cfg) -> harvest.Transport:
    if cfg.fetch.transport == "directory":
        return harvest.DirectoryTransport(cfg.path(cfg.fetch.web_root))
    return harvest.HttpTransport(user_agent=cfg.fetch.user_agent)


def _stage_fetch(cfg, flags):
    transport = _build_transport(cfg)
    cache = harvest.ContentCache(cfg.path("cache"))
    fetcher = harvest.Fetcher(
        transport,
        cache,
        politeness_s=cfg.fetch.politeness_ms / 1000.0,
        max_body_bytes=cfg.fetch.max_body_bytes,
        timeout=cfg.fetch.timeout_s,
    )
    outputs = []
    for d in _domains(cfg, flags):
        records = harvest.read_records_jsonl(_registered_path(cfg, d))
        done = fetcher.fetch_all(records, concurrency=cfg.fetch.concurrency)
        path = _fetched_path(cfg, d)
        harvest.write_records_jsonl(path, done)
        outputs.append(path)
    return outputs


# ---------------------------------------------------------------------------
# Stage: parse

def _parse_inputs(cfg, flags):
    return [_fetched_path(cfg, d) for d in _domains(cfg, flags)]


def _stage_parse(cfg, flags):
    cache = harvest.ContentCache(cfg.path("cache"))
    outputs = []
    for d in _domains(cfg, flags):
        records = harvest.read_records_jsonl(_fetched_path(cfg, d))
        for rec in records:
            if rec.status != "fetched":
                continue
            blob = cache.path(rec.content_hash)
            if not os.path.isfile(blob):
                raise MissingArtifact(f"cache object missing: {blob}")
            body = cache.get(rec.content_hash)
            try:
                if rec.filetype == "html":
                    doc = docmodel.parse_html(body, base_url=rec.url)
                else:
                    rel = os.path.join(
                        cfg.extracted_dir, f"{rec.content_hash}.extract.json"
                    )
                    bundle = cfg.path(rel)
                    if not os.path.isfile(bundle):
                        rec.status = "parse-error"
                        # relative path: artifacts must not leak the
                        # workspace location or runs stop comparing equal
                        rec.status_detail = f"missing extract bundle: {rel}"
                        continue
                    with open(bundle, "rb") as f:
                        doc = docmodel.ingest_extracted(f.read())
            except docmodel.ParseError as exc:
                rec.status = "parse-error"
                rec.status_detail = str(exc)
                continue
            text_rel = os.path.join("parsed", f"{rec.id}.json")
            atomic_write_json(cfg.path(text_rel), doc.to_dict())
            rec.text_path = text_rel
            outputs.append(cfg.path(text_rel))
        index = _parsed_index_path(cfg, d)
        harvest.write_records_jsonl(index, records)
        outputs.append(index)
    return outputs


# ---------------------------------------------------------------------------
# Stage: featurize

def _featurize_inputs(cfg, flags):
    return [_parsed_index_path(cfg, d) for d in _domains(cfg, flags)]


def _stage_featurize(cfg, flags):
    dictionary = load_dictionary(
        cfg.path(cfg.dictionary) if cfg.dictionary else None
    )
    outputs = []
    for d in _domains(cfg, flags):
        vectors = []
        for rec in _parsed_records(cfg, d):
            doc = _load_parsed_doc(cfg, rec)
            vectors.append(extract_features(rec.id, doc, rec.url, dictionary))
        path = _base_features_path(cfg, d)
        write_features_jsonl(path, vectors)
        outputs.append(path)
    return outputs


# ---------------------------------------------------------------------------
# Stage: score

def _score_inputs(cfg, flags):
    # Baseline IDF statistics are fit on the whole corpus, so every
    # domain must be featurized before any domain is scored.
    paths = []
    for d in cfg.domains:
        paths.extend(
            [
                _base_features_path(cfg, d),
                _parsed_index_path(cfg, d),
                _terms_path(cfg, d),
            ]
        )
    return paths


def _stage_score(cfg, flags):
    per_domain: dict[str, tuple[list[FeatureVector], dict[str, str], list[str]]] = {}
    corpus_texts: list[str] = []
    for d in cfg.domains:
        vectors = read_features_jsonl(_base_features_path(cfg, d))
        texts = {}
        for rec in _parsed_records(cfg, d):
            texts[rec.id] = _load_parsed_doc(cfg, rec).free_text
        phrases = [t.phrase for t in _load_terms(_terms_path(cfg, d))]
        per_domain[d] = (vectors, texts, phrases)
        corpus_texts.extend(texts[fv.resource_id] for fv in vectors)

    outputs = []
    encoders = []
    for spec in cfg.encoders:
        enc = relevance.encoder_for_spec(spec)
        if isinstance(enc, relevance.BaselineEncoder):
            enc.fit(corpus_texts)
            model_path = cfg.path("models", f"encoder_{spec.name}.json")
            enc.save(model_path)
            outputs.append(model_path)
        encoders.append(enc)

    skipped: set[str] = set()
    for d in cfg.domains:
        vectors, texts, phrases = per_domain[d]
        result = relevance.compute_group3(vectors, texts, phrases, encoders)
        skipped.update(result.skipped_encoders)
    # an encoder that failed for any domain is dropped for all of them
    if skipped:
        for vectors, _, _ in per_domain.values():
            for fv in vectors:
                for name in skipped:
                    fv.scores.pop(name, None)

    for d in _domains(cfg, flags):
        path = _features_path(cfg, d)
        write_features_jsonl(path, per_domain[d][0])
        outputs.append(path)
    return outputs


# ---------------------------------------------------------------------------
# Stage: train

def _train_groups(cfg, flags) -> list[tuple[str, ...]]:
    if flags.groups is not None:
        return [tuple(sorted(frozenset(flags.groups)))]
    return [tuple(sorted(frozenset(g))) for g in cfg.ladder]


def _train_inputs(cfg, flags):
    d = cfg.train_source
    paths = [_features_path(cfg, d), _parsed_index_path(cfg, d)]
    if cfg.labels:
        paths.append(cfg.path(cfg.labels))
    return paths


def _forest_params(cfg) -> ForestParams:
    return ForestParams(
        n_trees=cfg.classifier.n_trees,
        max_depth=cfg.classifier.max_depth,
        min_samples_leaf=cfg.classifier.min_samples_leaf,
        seed=cfg.seed,
    )


def _stage_train(cfg, flags):
    labels = _load_labels(cfg)
    source = _labeled_dataset(cfg, cfg.train_source, labels)
    params = _forest_params(cfg)
    outputs = []
    for groups in _train_groups(cfg, flags):
        scheme = fit_binning(
            source.vectors, n_bins=cfg.classifier.n_bins, groups=list(groups)
        )
        train = DesignMatrix.from_vectors(source.vectors, scheme, labels=source.labels)
        model = train_forest(train, params, binning=scheme)
        path = _model_path(cfg, cfg.train_source, groups)
        save_model(model, path)
        outputs.append(path)
    return outputs


# ---------------------------------------------------------------------------
# Stage: evaluate

def _eval_targets(cfg, flags):
    targets = cfg.eval_targets or [d for d in cfg.domains if d != cfg.train_source]
    if flags.domain is not None:
        if flags.domain not in cfg.domains:
            raise ConfigError(f"domain {flags.domain!r} is not configured")
        targets = [flags.domain]
    return targets


def _evaluate_inputs(cfg, flags):
    paths = []
    for groups in _train_groups(cfg, flags):
        paths.append(_model_path(cfg, cfg.train_source, groups))
    for t in _eval_targets(cfg, flags):
        paths.extend([_features_path(cfg, t), _parsed_index_path(cfg, t)])
    if cfg.labels:
        paths.append(cfg.path(cfg.labels))
    return paths


def _stage_evaluate(cfg, flags):
    labels = _load_labels(cfg)
    reports: list[EvalReport] = []
    for t in _eval_targets(cfg, flags):
        target = _labeled_dataset(cfg, t, labels)
        for groups in _train_groups(cfg, flags):
            model = load_model(_model_path(cfg, cfg.train_source, groups))
            reports.append(
                evalanalysis.evaluate_model(
                    model, target, setting=f"{cfg.train_source}->{t}"
                )
            )
    payload = {
        "source": cfg.train_source,
        "reports": [r.to_dict() for r in reports],
    }
    json_path = cfg.path("reports", "eval_report.json")
    atomic_write_json(json_path, payload)
    txt_path = cfg.path("reports", "eval_report.txt")
    atomic_write_text(txt_path, _format_eval_table(reports))
    return [json_path, txt_path]


def _format_eval_table(reports) -> str:
    header = f"{'setting':<24} {'groups':<12} {'P':>8} {'R':>8} {'F1':>8}  counts"
    lines = [header, "-" * len(header)]
    for r in reports:
        tag = "+".join(r.feature_groups)
        flag = " (degenerate)" if r.degenerate else ""
        lines.append(
            f"{r.setting:<24} {tag:<12} {r.precision:>8.4f} {r.recall:>8.4f} "
            f"{r.f1:>8.4f}  tp={r.tp} fp={r.fp} fn={r.fn} tn={r.tn}{flag}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Stage: analyze

def _analyze_inputs(cfg, flags):
    paths = []
    for d in cfg.domains:
        paths.append(_parsed_index_path(cfg, d))
    if cfg.labels:
        paths.append(cfg.path(cfg.labels))
    if cfg.annotations:
        paths.append(cfg.path(cfg.annotations))
    return paths


def _stage_analyze(cfg, flags):
    labels = _load_labels(cfg) if cfg.labels else {}
    records = _labeled_records(cfg, list(cfg.domains), labels)
    docs = {rec.id: _load_parsed_doc(cfg, rec) for rec in records}

    report: dict = {"corpus": evalanalysis.corpus_stats(records, docs)}
    report["top_sites"] = [
        {"host": h, "count": c}
        for h, c in evalanalysis.top_sites(
            records, cfg.top_sites_k, positives_only=bool(labels)
        )
    ]

    # sentence-token corpora per domain, for cross-domain overlap
    corpora = {}
    for d in cfg.domains:
        sentences = []
        for rec in _parsed_records(cfg, d):
            sentences.extend(evalanalysis.doc_sentences_tokens(docs[rec.id]))
        corpora[d] = sentences
    overlaps = []
    source = cfg.train_source
    for t in _eval_targets(cfg, flags):
        for n in cfg.ngram_ns:
            overlaps.append(
                {
                    "source": source,
                    "target": t,
                    "n": n,
                    "overlap_pct": evalanalysis.ngram_overlap(
                        corpora[source], corpora[t], n
                    ),
                }
            )
    report["ngram_overlap"] = overlaps

    importances = {}
    for path in sorted(glob.glob(cfg.path("models", "forest_*.json"))):
        model = load_model(path)
        importances[os.path.basename(path)] = [
            {"column": name, "importance": weight}
            for name, weight in model.top_columns(20)
        ]
    report["importances"] = importances

    if cfg.annotations:
        table = evalanalysis.AnnotationTable.from_csv(cfg.path(cfg.annotations))
        alpha = evalanalysis.krippendorff_alpha(table)
        report["agreement"] = {
            "alpha": alpha.value,
            "degenerate": alpha.degenerate,
        }

    json_path = cfg.path("reports", "analysis_report.json")
    atomic_write_json(json_path, report)
    txt_path = cfg.path("reports", "analysis_report.txt")
    atomic_write_text(txt_path, _format_analysis(report))
    return [json_path, txt_path]


def _format_analysis(report: dict) -> str:
    lines = ["corpus statistics"]
    for domain, stats in report["corpus"].items():
        lines.append(f"  {domain}")
        for key, value in stats.items():
            lines.append(f"    {key}: {value}")
    lines.append("top sites")
    for entry in report["top_sites"]:
        lines.append(f"  {entry['host']:<40} {entry['count']}")
    lines.append("n-gram overlap (source -> target, % of target grams)")
    for o in report["ngram_overlap"]:
        lines.append(
            f"  {o['source']}->{o['target']} n={o['n']}: {o['overlap_pct']:.2f}"
        )
    if report.get("importances"):
        lines.append("feature importances (top columns)")
        for model_name, cols in report["importances"].items():
            lines.append(f"  {model_name}")
            for c in cols[:10]:
                lines.append(f"    {c['column']:<44} {c['importance']:.4f}")
    if "agreement" in report:
        a = report["agreement"]
        flag = " (degenerate)" if a["degenerate"] else ""
        lines.append(f"annotator agreement alpha: {a['alpha']:.4f}{flag}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Manifest runner

_STAGE_IMPLS = {
    "queries": (_queries_inputs, _stage_queries),
    "search": (_search_inputs, _stage_search),
    "fetch": (_fetch_inputs, _stage_fetch),
    "parse": (_parse_inputs, _stage_parse),
    "featurize": (_featurize_inputs, _stage_featurize),
    "score": (_score_inputs, _stage_score),
    "train": (_train_inputs, _stage_train),
    "evaluate": (_evaluate_inputs, _stage_evaluate),
    "analyze": (_analyze_inputs, _stage_analyze),
}


def _manifest_path(cfg, stage):
    return cfg.path("manifests", f"{stage}.json")


def _relpath(cfg, path):
    return os.path.relpath(path, cfg.workspace)


def run_stage(
    stage: str,
    cfg: WorkspaceConfig,
    domain: str | None = None,
    groups=None,
    force: bool = False,
) -> StageResult:
    """Run one pipeline stage with manifest bookkeeping.

    Raises MissingArtifact when a declared input is absent, ConfigError
    when the stage manifest was written under a different config hash
    (unless force), and ProviderFailure on search provider errors.
    Unchanged config + flags + inputs with outputs still on disk make
    the call a no-op.
    """
    if stage not in _STAGE_IMPLS:
        raise ConfigError(f"unknown stage {stage!r}")
    if groups is not None:
        groups = tuple(groups)
        for g in groups:
            if g not in VALID_GROUPS:
                raise ConfigError(f"unknown feature group {g!r}")
    flags = StageFlags(domain=domain, groups=groups)
    inputs_fn, run_fn = _STAGE_IMPLS[stage]

    input_paths = inputs_fn(cfg, flags)
    for path in input_paths:
        if not os.path.isfile(path):
            raise MissingArtifact(f"stage {stage!r} requires {path}")
    input_hashes = {_relpath(cfg, p): file_sha256(p) for p in input_paths}

    manifest_path = _manifest_path(cfg, stage)
    config_hash = cfg.config_hash()
    if os.path.isfile(manifest_path):
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
        if manifest.get("config_hash") != config_hash and not force:
            raise ConfigError(
                f"stage {stage!r} was last run under a different config "
                f"(manifest {manifest_path}); pass --force to overwrite"
            )
        if (
            manifest.get("config_hash") == config_hash
            and manifest.get("flags") == flags.to_dict()
            and manifest.get("inputs") == input_hashes
            and all(
                os.path.isfile(cfg.path(out)) for out in manifest.get("outputs", [])
            )
        ):
            return StageResult(
                stage=stage,
                ran=False,
                outputs=[cfg.path(out) for out in manifest["outputs"]],
                manifest_path=manifest_path,
            )

    started = time.time()
    outputs = run_fn(cfg, flags)
    finished = time.time()

    atomic_write_json(
        manifest_path,
        {
            "stage": stage,
            "config_hash": config_hash,
            "flags": flags.to_dict(),
            "inputs": input_hashes,
            "outputs": sorted(_relpath(cfg, p) for p in outputs),
            "started_at": started,
            "finished_at": finished,
        },
    )
    return StageResult(
        stage=stage, ran=True, outputs=outputs, manifest_path=manifest_path
    )
