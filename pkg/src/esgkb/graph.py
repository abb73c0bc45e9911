"""Cosine-similarity graph over concept embeddings."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .taxonomy import Concept

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.80
# candidate pairs are screened with blocked matrix products, then every
# surviving pair is recomputed pairwise; the margin absorbs BLAS rounding
_SCREEN_MARGIN = 1e-6


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity ``dot(u, v) / (|u| |v|)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"vectors must be 1-d with equal length, got {u.shape} and {v.shape}")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    sim = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, sim))


@dataclass
class EmbeddingTable:
    concepts: list[Concept]
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d matrix")
        if len(self.concepts) != vectors.shape[0]:
            raise ValueError(f"{len(self.concepts)} concepts but {vectors.shape[0]} vectors")
        if vectors.shape[0] and vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("duplicate concepts in embedding table")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding table contains non-finite values")
        zero = np.flatnonzero(~vectors.any(axis=1))
        if zero.size:
            raise ValueError(f"zero vector for concept {self.concepts[zero[0]].text!r}")
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.concepts)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def index(self) -> dict[Concept, int]:
        return {c: i for i, c in enumerate(self.concepts)}

    def subset(self, concepts: Iterable[Concept]) -> "EmbeddingTable":
        idx = self.index()
        keep = [c for c in concepts if c in idx]
        rows = [idx[c] for c in keep]
        return EmbeddingTable(keep, self.vectors[rows] if rows else np.empty((0, self.dim)))


def load_embeddings(path: Union[str, Path]) -> EmbeddingTable:
    """Read ``{"concept": ..., "vector": [...]}`` JSON lines as float64."""
    concepts, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                concept = Concept(rec["concept"])
                vec = [float(x) for x in rec["vector"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad embedding record ({exc})") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: dimension {len(vec)} != {dim}")
            concepts.append(concept)
            rows.append(vec)
    vectors = np.array(rows, dtype=np.float64) if rows else np.empty((0, 1))
    return EmbeddingTable(concepts, vectors)


def write_embeddings(table: EmbeddingTable, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c, v in zip(table.concepts, table.vectors):
            fh.write(json.dumps({"concept": c.text, "vector": [float(x) for x in v]}) + "\n")


class SemanticGraph:
    """Undirected weighted graph; edges stored once with ``i < j``."""

    def __init__(self, n_nodes: int, rows: np.ndarray, cols: np.ndarray, weights: np.ndarray):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(rows == cols):
            raise ValueError("self-loops are not allowed")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        order = np.lexsort((hi, lo))
        self.n_nodes = int(n_nodes)
        self.rows, self.cols, self.weights = lo[order], hi[order], weights[order]
        if self.rows.size and (self.rows.min() < 0 or self.cols.max() >= self.n_nodes):
            raise ValueError("edge endpoint out of range")
        if self.rows.size > 1:
            dup = (np.diff(self.rows) == 0) & (np.diff(self.cols) == 0)
            if dup.any():
                raise ValueError("duplicate edge")
        self._adj: Optional[sp.csr_matrix] = None
        self._neighbors: Optional[list[np.ndarray]] = None

    @property
    def n_edges(self) -> int:
        return int(self.rows.size)

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.weights)]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(self.rows, self.cols)}

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency matrix in CSR form."""
        if self._adj is None:
            r = np.concatenate([self.rows, self.cols])
            c = np.concatenate([self.cols, self.rows])
            w = np.concatenate([self.weights, self.weights])
            adj = sp.csr_matrix((w, (r, c)), shape=(self.n_nodes, self.n_nodes))
            adj.sort_indices()
            self._adj = adj
        return self._adj

    def neighbors(self, node: int) -> np.ndarray:
        if self._neighbors is None:
            adj = self.adjacency()
            self._neighbors = [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(self.n_nodes)]
        return self._neighbors[node]

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency().indptr)

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int, float]]) -> "SemanticGraph":
        edges = list(edges)
        if not edges:
            return cls(n_nodes, np.empty(0), np.empty(0), np.empty(0))
        r, c, w = zip(*edges)
        return cls(n_nodes, np.array(r), np.array(c), np.array(w))


def _pair_cosines(X: np.ndarray, norms: np.ndarray, rows: np.ndarray, cols: np.ndarray, chunk: int = 65536) -> np.ndarray:
    out = np.empty(rows.size, dtype=np.float64)
    for s in range(0, rows.size, chunk):
        r, c = rows[s:s + chunk], cols[s:s + chunk]
        dots = np.einsum("ij,ij->i", X[r], X[c])
        out[s:s + chunk] = dots / (norms[r] * norms[c])
    return np.clip(out, -1.0, 1.0)


def _screen_block(Xn: np.ndarray, start: int, stop: int, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    sims = Xn[start:stop] @ Xn.T
    r, c = np.nonzero(sims > threshold - _SCREEN_MARGIN)
    r = r + start
    keep = c > r
    return r[keep], c[keep]


def build_graph(
    table: Union[EmbeddingTable, np.ndarray],
    threshold: float = DEFAULT_THRESHOLD,
    block_size: Optional[int] = None,
    n_jobs: int = 1,
) -> SemanticGraph:
    """Connect every pair whose cosine similarity is strictly above ``threshold``.

    Work is split into row blocks (``block_size`` rows, default 1024) that
    may run on ``n_jobs`` threads. Blocks only screen candidate pairs; the
    candidates are merged in block order (which is row-major order for any
    block size) and all weights are then computed in one pass, so the output
    does not depend on ``block_size`` or ``n_jobs``.
    """
    X = table.vectors if isinstance(table, EmbeddingTable) else check_array(table, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        return SemanticGraph(n, np.empty(0), np.empty(0), np.empty(0))
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    if np.any(norms == 0):
        raise ValueError("zero vector in embedding matrix")
    Xn = X / norms[:, None]
    block = block_size or 1024
    starts = range(0, n, block)
    if n_jobs == 1:
        parts = [_screen_block(Xn, s, min(s + block, n), threshold) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda s: _screen_block(Xn, s, min(s + block, n), threshold), starts))
    rows = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, dtype=np.int64)
    sims = _pair_cosines(X, norms, rows, cols)
    keep = sims > threshold
    return SemanticGraph(n, rows[keep], cols[keep], sims[keep])


def write_graph(graph: SemanticGraph, concepts: Sequence[Concept], edges_path, nodes_path) -> None:
    """Write ``i<TAB>j<TAB>weight`` edges and an ``i<TAB>concept`` node index."""
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        for i, c in enumerate(concepts):
            fh.write(f"{i}\t{c.text}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j, w in graph.edges():
            fh.write(f"{i}\t{j}\t{w!r}\n")


def read_graph(edges_path, nodes_path) -> tuple[SemanticGraph, list[Concept]]:
    concepts = []
    with open(nodes_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            idx, text = line.rstrip("\n").split("\t")
            if int(idx) != len(concepts):
                raise ValueError(f"{nodes_path}: node indices must be 0..n-1 in order")
            concepts.append(Concept(text))
    edges = []
    with open(edges_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                i, j, w = line.rstrip("\n").split("\t")
                edges.append((int(i), int(j), float(w)))
    return SemanticGraph.from_edges(len(concepts), edges), concepts


class SimilarityGraph(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`build_graph`.

    ``fit`` stores the graph in ``graph_``; ``transform`` returns its sparse
    weighted adjacency matrix, so the estimator can sit in a pipeline ahead
    of anything that accepts a precomputed affinity.
    """

    def __init__(self, threshold: float = DEFAULT_THRESHOLD, block_size: Optional[int] = None, n_jobs: int = 1):
        self.threshold = threshold
        self.block_size = block_size
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.graph_ = build_graph(X, self.threshold, self.block_size, self.n_jobs)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X=None) -> sp.csr_matrix:
        check_is_fitted(self, "graph_")
        return self.graph_.adjacency()
