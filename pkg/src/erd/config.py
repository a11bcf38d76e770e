"""Workspace configuration: one YAML file drives every pipeline stage.

Paths in the file are resolved against the workspace directory, which
defaults to the directory containing the config file. The canonical
JSON form of the (override-applied) configuration is hashed into stage
manifests, so any config change is visible to the resumption logic.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from erd.relevance import EncoderSpec


class ConfigError(Exception):
    """Invalid or inconsistent configuration."""


@dataclass
class DomainConfig:
    name: str
    terms_file: str | None = None
    seed_docs: list[str] = field(default_factory=list)
    top_k: int = 20


@dataclass
class FetchConfig:
    transport: str = "http"  # or "directory"
    web_root: str = "web"
    politeness_ms: int = 1000
    max_body_bytes: int = 50 * 1024 * 1024
    user_agent: str = "erd-harvester/0.1"
    timeout_s: float = 30.0
    concurrency: int = 8


@dataclass
class ClassifierConfig:
    n_bins: int = 10
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1


@dataclass
class WorkspaceConfig:
    workspace: str
    seed: int
    domains: dict[str, DomainConfig]
    sites: list[str | None]
    filetypes: list[str]
    providers: list[dict]
    fetch: FetchConfig
    classifier: ClassifierConfig
    encoders: list[EncoderSpec]
    train_source: str
    eval_targets: list[str]
    ladder: list[list[str]]
    textrank: dict = field(default_factory=dict)
    quota_overrides: dict[str, int] = field(default_factory=dict)
    dictionary: str | None = None
    aliases: str | None = None
    curated_hosts_file: str | None = None
    labels: str | None = None
    annotations: str | None = None
    extracted_dir: str = "extracted"
    top_sites_k: int = 10
    ngram_ns: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    raw: dict = field(default_factory=dict, repr=False)

    def path(self, *parts) -> str:
        return os.path.join(self.workspace, *parts)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_DEFAULT_LADDER = [["g1"], ["g1", "g2"], ["g1", "g2", "g3"]]


def load_config(path: str, overrides: dict | None = None) -> WorkspaceConfig:
    """Parse and validate a workspace config file. overrides (e.g. the
    --seed flag) replace top-level keys before validation and hashing."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    base_dir = os.path.dirname(os.path.abspath(path))
    workspace = os.path.normpath(
        os.path.join(base_dir, str(raw.get("workspace", ".")))
    )
    if not os.path.isdir(workspace):
        raise ConfigError(f"workspace directory does not exist: {workspace}")
    if not os.access(workspace, os.W_OK):
        raise ConfigError(f"workspace directory is not writable: {workspace}")

    if "seed" not in raw:
        raise ConfigError("config must set a seed (reproducibility contract)")
    try:
        seed = int(raw["seed"])
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {raw['seed']!r}")

    domains: dict[str, DomainConfig] = {}
    raw_domains = raw.get("domains")
    if not isinstance(raw_domains, dict) or not raw_domains:
        raise ConfigError("config must define at least one domain")
    for name, spec in raw_domains.items():
        spec = spec or {}
        terms_file = spec.get("terms_file")
        seed_docs = spec.get("seed_docs") or []
        if bool(terms_file) == bool(seed_docs):
            raise ConfigError(
                f"domain {name!r} needs exactly one query source "
                "(terms_file or seed_docs)"
            )
        domains[name] = DomainConfig(
            name=name,
            terms_file=terms_file,
            seed_docs=list(seed_docs),
            top_k=int(spec.get("top_k", 20)),
        )

    filetypes = list(raw.get("filetypes") or ["pdf", "pptx", "html"])
    for ft in filetypes:
        if ft not in ("pdf", "pptx", "html"):
            raise ConfigError(f"unknown filetype {ft!r}")
    sites = [s if s else None for s in (raw.get("sites") or [None])]

    providers = list(raw.get("providers") or [])
    if not providers:
        raise ConfigError("config must define at least one search provider")
    for p in providers:
        if not isinstance(p, dict) or "kind" not in p:
            raise ConfigError(f"provider entries need a kind: {p!r}")
        if p["kind"] not in ("fixture", "duckduckgo", "bing"):
            raise ConfigError(f"unknown provider kind {p['kind']!r}")
        if p["kind"] == "fixture" and not p.get("root"):
            raise ConfigError("fixture provider needs a root directory")

    fetch_raw = raw.get("fetch") or {}
    fetch = FetchConfig(
        transport=fetch_raw.get("transport", "http"),
        web_root=fetch_raw.get("web_root", "web"),
        politeness_ms=int(fetch_raw.get("politeness_ms", 1000)),
        max_body_bytes=int(fetch_raw.get("max_body_bytes", 50 * 1024 * 1024)),
        user_agent=fetch_raw.get("user_agent", "erd-harvester/0.1"),
        timeout_s=float(fetch_raw.get("timeout_s", 30.0)),
        concurrency=int(fetch_raw.get("concurrency", 8)),
    )
    if fetch.transport not in ("http", "directory"):
        raise ConfigError(f"unknown fetch transport {fetch.transport!r}")

    cls_raw = raw.get("classifier") or {}
    classifier = ClassifierConfig(
        n_bins=int(cls_raw.get("n_bins", 10)),
        n_trees=int(cls_raw.get("n_trees", 100)),
        max_depth=cls_raw.get("max_depth"),
        min_samples_leaf=int(cls_raw.get("min_samples_leaf", 1)),
    )

    encoders = []
    for e in raw.get("encoders") or [
        {"name": "baseline", "kind": "hashed-baseline", "dim": 1024}
    ]:
        try:
            encoders.append(
                EncoderSpec(
                    name=e["name"],
                    kind=e["kind"],
                    dim=int(e["dim"]),
                    endpoint=e.get("endpoint"),
                    truncation=e.get("truncation"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad encoder spec {e!r}: {exc}")
    names = [e.name for e in encoders]
    if len(names) != len(set(names)):
        raise ConfigError("encoder names must be unique")

    train_raw = raw.get("train") or {}
    train_source = train_raw.get("source")
    eval_raw = raw.get("evaluate") or {}
    eval_targets = list(eval_raw.get("targets") or [])
    if train_source is None and len(domains) == 1:
        train_source = next(iter(domains))
    if train_source not in domains:
        raise ConfigError(f"train source {train_source!r} is not a configured domain")
    for t in eval_targets:
        if t not in domains:
            raise ConfigError(f"evaluate target {t!r} is not a configured domain")
    ladder = [list(g) for g in (eval_raw.get("ladder") or _DEFAULT_LADDER)]

    analyze_raw = raw.get("analyze") or {}

    return WorkspaceConfig(
        workspace=workspace,
        seed=seed,
        domains=domains,
        sites=sites,
        filetypes=filetypes,
        providers=providers,
        fetch=fetch,
        classifier=classifier,
        encoders=encoders,
        train_source=train_source,
        eval_targets=eval_targets,
        ladder=ladder,
        textrank=dict(raw.get("textrank") or {}),
        quota_overrides={
            str(k): int(v) for k, v in (raw.get("quotas") or {}).items()
        },
        dictionary=raw.get("dictionary"),
        aliases=raw.get("aliases"),
        curated_hosts_file=raw.get("curated_hosts"),
        labels=raw.get("labels"),
        annotations=raw.get("annotations"),
        extracted_dir=raw.get("extracted_dir", "extracted"),
        top_sites_k=int(analyze_raw.get("top_sites_k", 10)),
        ngram_ns=[int(n) for n in (analyze_raw.get("ngram_ns") or [1, 2, 3, 4])],
        raw=raw,
    )
