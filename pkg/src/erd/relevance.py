"""Pluggable text embedding and the Group 3 relevance score.

A resource's score under one encoder is the sum of cosine similarities
between the resource embedding and every query embedding in the
domain's query set. The shipped baseline encoder hashes tf-idf weights
over word unigrams and character trigrams into a fixed number of
buckets, so it is deterministic and needs no model downloads; a
remote-service encoder speaks the /embed wire protocol instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import requests

from erd.docmodel import is_word_token, tokenize
from erd.ioutil import atomic_write_json

DEFAULT_HASH_SEED = 17
DEFAULT_REMOTE_TRUNCATION = 512


class EncoderUnavailable(Exception):
    """A remote encoder timed out, failed, or replied malformed."""


@dataclass
class EmbeddingVector:
    encoder_name: str
    dim: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} values, got {self.values.shape}")


@dataclass
class EncoderSpec:
    name: str
    kind: str  # "hashed-baseline" | "remote-service"
    dim: int
    endpoint: str | None = None
    truncation: int | None = None  # max whitespace tokens sent; None = full text

    def __post_init__(self):
        if self.kind not in ("hashed-baseline", "remote-service"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.kind == "remote-service":
            if not self.endpoint:
                raise ValueError("remote-service encoder needs an endpoint")
            if self.truncation is None:
                self.truncation = DEFAULT_REMOTE_TRUNCATION


def _truncate(text: str, max_tokens: int | None) -> str:
    if max_tokens is None:
        return text
    parts = text.split()
    if len(parts) <= max_tokens:
        return text
    return " ".join(parts[:max_tokens])


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity; by convention 0 when either vector is zero."""
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


def score_resource(
    resource_vec: EmbeddingVector, query_vecs: list[EmbeddingVector]
) -> float:
    """Sum of cosine(V_q, V_r) over the query set."""
    total = 0.0
    for q in query_vecs:
        if q.encoder_name != resource_vec.encoder_name:
            raise ValueError(
                f"encoder mismatch: {q.encoder_name!r} vs {resource_vec.encoder_name!r}"
            )
        if q.dim != resource_vec.dim:
            raise ValueError(f"dimension mismatch: {q.dim} vs {resource_vec.dim}")
        total += cosine(q, resource_vec)
    return total


# ---------------------------------------------------------------------------
# Hashed tf-idf baseline

class BaselineEncoder:
    """Deterministic encoder hashing tf-idf weights into dim buckets.

    Terms are word unigrams plus character trigrams of the
    space-rejoined words. IDF uses add-one smoothing,
    ln((1+N)/(1+df)) + 1, and defaults to 1 for every term until fit()
    has seen a corpus. All weights are non-negative, so cosines between
    baseline embeddings live in [0, 1].
    """

    kind = "hashed-baseline"

    def __init__(self, spec: EncoderSpec, seed: int = DEFAULT_HASH_SEED):
        if spec.kind != self.kind:
            raise ValueError(f"spec kind {spec.kind!r} is not {self.kind}")
        self.spec = spec
        self.seed = seed
        self.n_docs = 0
        self.df: dict[str, int] = {}
        self._key = seed.to_bytes(8, "little", signed=False)

    @staticmethod
    def _terms(text: str) -> list[str]:
        words = [t for t in tokenize(text) if is_word_token(t)]
        terms = ["w:" + w for w in words]
        joined = " ".join(words)
        terms.extend("c:" + joined[i : i + 3] for i in range(len(joined) - 2))
        return terms

    def _bucket(self, term: str) -> int:
        digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8, key=self._key)
        return int.from_bytes(digest.digest(), "little") % self.spec.dim

    def _idf(self, term: str) -> float:
        if self.n_docs == 0:
            return 1.0
        return math.log((1 + self.n_docs) / (1 + self.df.get(term, 0))) + 1.0

    def fit(self, corpus_texts) -> "BaselineEncoder":
        for text in corpus_texts:
            self.n_docs += 1
            for term in set(self._terms(text)):
                self.df[term] = self.df.get(term, 0) + 1
        return self

    def embed(self, text: str) -> EmbeddingVector:
        values = np.zeros(self.spec.dim, dtype=np.float64)
        tf: dict[str, int] = {}
        for term in self._terms(_truncate(text, self.spec.truncation)):
            tf[term] = tf.get(term, 0) + 1
        for term, count in tf.items():
            values[self._bucket(term)] += count * self._idf(term)
        norm = float(np.linalg.norm(values))
        if norm > 0.0:
            values /= norm
        return EmbeddingVector(self.spec.name, self.spec.dim, values)

    def embed_many(self, texts) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]

    # -- persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "erd-encoder",
            "version": 1,
            "kind": self.kind,
            "name": self.spec.name,
            "dim": self.spec.dim,
            "seed": self.seed,
            "n_docs": self.n_docs,
            "df": self.df,
        }

    def save(self, path) -> None:
        atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "BaselineEncoder":
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        if d.get("format") != "erd-encoder" or d.get("kind") != cls.kind:
            raise ValueError(f"{path} is not a baseline encoder file")
        spec = EncoderSpec(name=d["name"], kind=cls.kind, dim=d["dim"])
        enc = cls(spec, seed=d["seed"])
        enc.n_docs = d["n_docs"]
        enc.df = dict(d["df"])
        return enc


# ---------------------------------------------------------------------------
# Remote /embed client

class RemoteEncoder:
    """Client for the /embed wire protocol.

    POST {"texts": [...]} to the endpoint; the reply carries "dim" and
    "vectors" in request order. Replies are L2-normalized locally.
    Shareable across threads; batches run with bounded concurrency.
    """

    kind = "remote-service"

    def __init__(self, spec: EncoderSpec, timeout: float = 30.0, concurrency: int = 4,
                 batch_size: int = 16):
        if spec.kind != self.kind:
            raise ValueError(f"spec kind {spec.kind!r} is not {self.kind}")
        self.spec = spec
        self.timeout = timeout
        self.batch_size = batch_size
        self._sem = threading.Semaphore(concurrency)
        self._session = requests.Session()

    def _post(self, texts: list[str]) -> list[np.ndarray]:
        try:
            with self._sem:
                resp = self._session.post(
                    self.spec.endpoint,
                    json={"texts": texts},
                    timeout=self.timeout,
                )
        except requests.RequestException as exc:
            raise EncoderUnavailable(f"{self.spec.name}: {exc}") from exc
        if resp.status_code != 200:
            raise EncoderUnavailable(
                f"{self.spec.name}: HTTP {resp.status_code}"
            )
        try:
            payload = resp.json()
            dim = int(payload["dim"])
            vectors = payload["vectors"]
            if dim != self.spec.dim:
                raise EncoderUnavailable(
                    f"{self.spec.name}: service dim {dim} != configured {self.spec.dim}"
                )
            if len(vectors) != len(texts):
                raise ValueError("vector count mismatch")
            return [np.asarray(v, dtype=np.float64).reshape(dim) for v in vectors]
        except EncoderUnavailable:
            raise
        except Exception as exc:
            raise EncoderUnavailable(f"{self.spec.name}: malformed reply: {exc}") from exc

    def embed_many(self, texts) -> list[EmbeddingVector]:
        texts = [_truncate(t, self.spec.truncation) for t in texts]
        out: list[EmbeddingVector] = []
        for i in range(0, len(texts), self.batch_size):
            for raw in self._post(texts[i : i + self.batch_size]):
                norm = float(np.linalg.norm(raw))
                if norm > 0.0:
                    raw = raw / norm
                out.append(EmbeddingVector(self.spec.name, self.spec.dim, raw))
        return out

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]


def encoder_for_spec(spec: EncoderSpec, seed: int = DEFAULT_HASH_SEED):
    if spec.kind == "hashed-baseline":
        return BaselineEncoder(spec, seed=seed)
    return RemoteEncoder(spec)


def embed(spec: EncoderSpec, text: str) -> EmbeddingVector:
    """One-shot embedding under a spec (unfitted baseline or remote)."""
    return encoder_for_spec(spec).embed(text)


# ---------------------------------------------------------------------------
# Group 3 computation

@dataclass
class Group3Result:
    skipped_encoders: list[str] = field(default_factory=list)


def compute_group3(
    feature_vectors,
    free_texts: dict[str, str],
    query_phrases: list[str],
    encoders,
) -> Group3Result:
    """Fill scores[encoder] on every feature vector.

    free_texts maps resource_id to the document text; query_phrases is
    the domain's full query set Q. Query embeddings are computed once
    per encoder. An encoder that turns out unavailable is skipped for
    every resource and reported in the result, leaving no partial score
    columns behind.
    """
    result = Group3Result()
    for enc in encoders:
        name = enc.spec.name
        try:
            query_vecs = enc.embed_many(list(query_phrases))
            ids = [fv.resource_id for fv in feature_vectors]
            doc_vecs = enc.embed_many([free_texts[rid] for rid in ids])
        except EncoderUnavailable:
            result.skipped_encoders.append(name)
            for fv in feature_vectors:
                fv.scores.pop(name, None)
            continue
        for fv, vec in zip(feature_vectors, doc_vecs):
            fv.scores[name] = score_resource(vec, query_vecs)
    return result
