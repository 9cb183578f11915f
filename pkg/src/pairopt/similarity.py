"""Embedding/AST mixture similarity used for pairing and deduplication.

The structural component is a bag-of-node-types vector over the parsed
program after stripping docstrings and top-level asserts (comments vanish in
parsing), L2-normalized.  The semantic component comes from a pluggable
embedding provider; a deterministic offline provider based on hashed token
uni+bigrams ships for hermetic tests.
"""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .errors import DimensionMismatch, MissingFeatures, ParseError, ProviderUnavailable


@dataclass
class AstFeatureVector:
    """L2-normalized node-type counts; zero mapping for a zero-node program."""

    weights: dict[str, float]

    @property
    def is_zero(self) -> bool:
        return not self.weights


@dataclass
class EmbeddingVector:
    values: np.ndarray
    provider_id: str


@dataclass
class SimilarityConfig:
    alpha: float = 0.8
    tau: float = 0.85

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")


def _is_docstring_stmt(stmt: ast.stmt) -> bool:
    return (
        isinstance(stmt, ast.Expr)
        and isinstance(stmt.value, ast.Constant)
        and isinstance(stmt.value.value, str)
    )


def _preprocess(tree: ast.Module) -> ast.Module:
    """Drop docstrings everywhere and asserts at module depth 0 only."""
    tree = copy.deepcopy(tree)
    tree.body = [s for s in tree.body if not isinstance(s, ast.Assert)]
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            body = node.body
            if body and _is_docstring_stmt(body[0]):
                node.body = body[1:]
    return tree


def ast_features(source: str) -> AstFeatureVector:
    """Bag-of-node-types vector of the preprocessed source, L2-normalized."""
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise ParseError(str(exc)) from exc
    counts = Counter(type(node).__name__ for node in ast.walk(_preprocess(tree)))
    norm = math.sqrt(sum(c * c for c in counts.values()))
    if norm == 0.0:
        return AstFeatureVector(weights={})
    return AstFeatureVector(weights={k: v / norm for k, v in counts.items()})


def ast_cosine(a: AstFeatureVector, b: AstFeatureVector) -> float:
    """Cosine over the union of observed node types; zero vectors give 0."""
    if a.is_zero or b.is_zero:
        return 0.0
    # summation over sorted keys keeps the cosine exactly symmetric
    return sum(a.weights[k] * b.weights.get(k, 0.0) for k in sorted(a.weights))


def embedding_cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed_source(self, source: str) -> np.ndarray: ...


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[^\sA-Za-z0-9_]")


class HashedNgramEmbedder:
    """Deterministic offline embedder: hashed token uni+bigrams, fixed dim.

    Same source yields the same vector across processes and machines, which
    is what replayed acceptance runs require.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.provider_id = f"hashed-ngram-{dim}"

    def embed_source(self, source: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(source)
        grams = list(tokens)
        grams += ["\x00".join(tokens[i : i + 2]) for i in range(len(tokens) - 1)]
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in grams:
            digest = hashlib.sha256(gram.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dim
            vec[idx] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class FileEmbeddingCache:
    """Content-hash -> vector replay cache backed by one JSON file per entry.

    Reads are lock-free; writes are serialized.  With no inner provider the
    cache acts as a pure replay store and misses raise ProviderUnavailable.
    """

    def __init__(self, cache_dir: str | Path, inner: Optional[EmbeddingProvider] = None):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.inner = inner
        self.provider_id = inner.provider_id if inner else "replay-cache"
        self._write_lock = threading.Lock()

    def _path_for(self, source: str) -> Path:
        digest = hashlib.sha256(source.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def embed_source(self, source: str) -> np.ndarray:
        path = self._path_for(source)
        if path.exists():
            return np.asarray(json.loads(path.read_text("utf-8")), dtype=np.float64)
        if self.inner is None:
            raise ProviderUnavailable(f"no cached embedding for {path.name}")
        vec = self.inner.embed_source(source)
        with self._write_lock:
            path.write_text(json.dumps([float(x) for x in vec]), "utf-8")
        return vec


def embed(source: str, provider: EmbeddingProvider, expected_dim: Optional[int] = None) -> EmbeddingVector:
    """Embed one source; rejects vectors of unexpected length."""
    values = np.asarray(provider.embed_source(source), dtype=np.float64)
    if values.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {values.shape}")
    if expected_dim is not None and values.shape[0] != expected_dim:
        raise DimensionMismatch(f"expected dim {expected_dim}, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise DimensionMismatch("embedding contains non-finite entries")
    return EmbeddingVector(values=values, provider_id=provider.provider_id)


def mixture_similarity(
    emb_a: EmbeddingVector,
    ast_a: AstFeatureVector,
    emb_b: EmbeddingVector,
    ast_b: AstFeatureVector,
    cfg: SimilarityConfig,
) -> float:
    """alpha * max(0, cosE) + (1 - alpha) * max(0, cosA).

    Negative embedding cosines clamp to 0 so the mixture stays in [0, 1].
    """
    cos_e = max(0.0, embedding_cosine(emb_a, emb_b))
    cos_a = max(0.0, ast_cosine(ast_a, ast_b))
    return cfg.alpha * cos_e + (1.0 - cfg.alpha) * cos_a


def similarity(p, q, cfg: SimilarityConfig) -> float:
    """Mixture similarity between two featurized candidates."""
    if p.ast_vector is None or p.embedding is None or q.ast_vector is None or q.embedding is None:
        raise MissingFeatures("both candidates must carry AST and embedding vectors")
    return mixture_similarity(p.embedding, p.ast_vector, q.embedding, q.ast_vector, cfg)


def is_duplicate(p, q) -> bool:
    """True iff the AST component alone reads as similarity 1.00."""
    if p.ast_vector is None or q.ast_vector is None:
        raise MissingFeatures("both candidates must carry AST vectors")
    return ast_cosine(p.ast_vector, q.ast_vector) >= 1.0 - 1e-9
