"""Clustering providers, cluster confidence quality, and diversity-aware seed selection."""

from __future__ import annotations

import heapq
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .graph import DEFAULT_THRESHOLD, EmbeddingTable, SemanticGraph, build_graph

logger = logging.getLogger(__name__)

NOISE = -1


@dataclass
class Clustering:
    """Cluster id (``-1`` for noise) and confidence in [0, 1] per node."""

    labels: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.labels.shape != self.confidence.shape or self.labels.ndim != 1:
            raise ValueError("labels and confidence must be 1-d arrays of equal length")
        if self.confidence.size and (self.confidence.min() < 0 or self.confidence.max() > 1):
            raise ValueError("confidences must lie in [0, 1]")
        if self.labels.size and self.labels.min() < NOISE:
            raise ValueError("cluster ids must be >= -1")

    def __len__(self) -> int:
        return int(self.labels.size)

    def clusters(self) -> dict[int, list[int]]:
        """Members per cluster id, sorted; noise nodes form the ``-1`` pseudo-cluster."""
        out: dict[int, list[int]] = defaultdict(list)
        for node, label in enumerate(self.labels):
            out[int(label)].append(node)
        return dict(sorted(out.items()))


def write_clustering(clustering: Clustering, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, (label, conf) in enumerate(zip(clustering.labels, clustering.confidence)):
            fh.write(f"{i}\t{int(label)}\t{float(conf)!r}\n")


def read_clustering(path: Union[str, Path], n_nodes: Optional[int] = None) -> Clustering:
    """Read ``node_index<TAB>cluster_id<TAB>confidence`` rows.

    With ``n_nodes`` given, every index must be in range and every node must
    be assigned.
    """
    entries: dict[int, tuple[int, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns")
            node, label, conf = int(cols[0]), int(cols[1]), float(cols[2])
            if node < 0 or (n_nodes is not None and node >= n_nodes):
                raise ValueError(f"{path}:{lineno}: unknown node {node}")
            if node in entries:
                raise ValueError(f"{path}:{lineno}: node {node} assigned twice")
            entries[node] = (label, conf)
    n = n_nodes if n_nodes is not None else (max(entries) + 1 if entries else 0)
    missing = [i for i in range(n) if i not in entries]
    if missing:
        raise ValueError(f"{path}: nodes without assignment: {missing[:10]}")
    labels = [entries[i][0] for i in range(n)]
    conf = [entries[i][1] for i in range(n)]
    return Clustering(np.array(labels, dtype=np.int64), np.array(conf, dtype=np.float64))


class ComponentClustering(ClusterMixin, BaseEstimator):
    """Deterministic baseline: connected components of the thresholded cosine graph.

    Each node's confidence is its cosine similarity to the centroid of its
    component, clipped to [0, 1]. Singleton components get confidence 0.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Component id per sample, numbered by first appearance.
    probabilities_ : ndarray of shape (n_samples,)
        Confidence per sample.
    """

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        self.threshold = threshold

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        n = X.shape[0]
        graph = build_graph(X, self.threshold)
        _, comp = connected_components(graph.adjacency(), directed=False)
        # renumber by first appearance so ids do not depend on scipy internals
        remap: dict[int, int] = {}
        labels = np.array([remap.setdefault(int(c), len(remap)) for c in comp], dtype=np.int64)
        conf = np.zeros(n, dtype=np.float64)
        norms = np.linalg.norm(X, axis=1)
        for cid in range(len(remap)):
            members = np.flatnonzero(labels == cid)
            if members.size < 2:
                continue
            unit = X[members] / norms[members, None]
            centroid = unit.mean(axis=0)
            cnorm = np.linalg.norm(centroid)
            if cnorm == 0:
                continue
            conf[members] = np.clip(unit @ centroid / cnorm, 0.0, 1.0)
        self.labels_ = labels
        self.probabilities_ = conf
        self.n_features_in_ = X.shape[1]
        return self

    def clustering(self) -> Clustering:
        check_is_fitted(self, "labels_")
        return Clustering(self.labels_, self.probabilities_)


def cluster(
    table: EmbeddingTable,
    provider: str = "builtin",
    path: Union[str, Path, None] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> Clustering:
    """Cluster embeddings with the ``builtin`` provider or ``import`` one from ``path``."""
    if provider == "import":
        if path is None:
            raise ValueError("the import provider needs a clustering file path")
        return read_clustering(path, n_nodes=len(table))
    if provider != "builtin":
        raise ValueError(f"unknown clustering provider {provider!r}")
    if len(table) == 0:
        return Clustering(np.empty(0, dtype=np.int64), np.empty(0))
    return ComponentClustering(threshold).fit(table.vectors).clustering()


def cqi(clustering: Clustering, tau: float = 0.60) -> float:
    """Fraction of nodes whose clustering confidence is strictly above ``tau``."""
    n = len(clustering)
    if n == 0:
        raise ValueError("CQI is undefined for an empty clustering")
    return int(np.count_nonzero(clustering.confidence > tau)) / n


def consequential_score(
    node: int,
    graph: SemanticGraph,
    selected_in_cluster: Iterable[int],
    clustering: Optional[Clustering] = None,
) -> int:
    """Number of ``node``'s neighbours not adjacent to any already-selected seed.

    Neighbours are counted across the whole graph; only the seeds are
    restricted to the node's cluster.
    """
    selected = set(selected_in_cluster)
    if clustering is not None and selected:
        own = clustering.labels[node]
        foreign = [s for s in selected if clustering.labels[s] != own]
        if foreign:
            raise ValueError(f"seeds {foreign} are not in the cluster of node {node}")
    covered = set()
    for s in selected:
        covered.update(graph.neighbors(s).tolist())
    return sum(1 for j in graph.neighbors(node).tolist() if j not in covered)


@dataclass
class SeedSet:
    """Selected seeds per cluster, each list in selection order."""

    per_cluster: dict[int, list[int]] = field(default_factory=dict)
    proportion: float = 0.0
    target: int = 0

    @property
    def total(self) -> list[int]:
        return sorted(n for seeds in self.per_cluster.values() for n in seeds)

    def __len__(self) -> int:
        return sum(len(s) for s in self.per_cluster.values())

    def ranked(self) -> list[tuple[int, int, int]]:
        """``(node, cluster_id, selection_rank)`` rows, rank starting at 1."""
        return [
            (node, cid, rank)
            for cid, seeds in sorted(self.per_cluster.items())
            for rank, node in enumerate(seeds, start=1)
        ]


def _cluster_sizes_to_count(sizes: Sequence[int], p: float) -> int:
    return sum(max(1, math.floor(p * s)) for s in sizes)


def seed_proportion(sizes: Sequence[int], target: int, beta: float = 0.01) -> float:
    """Adjust the per-cluster seed proportion in steps of ``beta`` toward ``target`` seeds.

    The loop stops once the gap to the target stops shrinking; the returned
    proportion is the one that achieved the smallest gap.
    """
    n = sum(sizes)
    if n == 0:
        return 0.0
    p = target / n
    best_p = p
    prev_gap = math.inf
    while True:
        n_s = _cluster_sizes_to_count(sizes, p)
        gap = abs(n_s - target)
        if gap >= prev_gap:
            break
        prev_gap, best_p = gap, p
        p = p + beta if n_s < target else p - beta
    return best_p


def _greedy_cluster(graph: SemanticGraph, members: Sequence[int], n_select: int) -> list[int]:
    """Lazy greedy selection of the max-Q member, ties to the lowest index.

    Q can only fall as seeds are added, so stale heap entries are upper
    bounds; an entry is accepted once it has been recomputed at the current
    step and still sits on top.
    """
    covered: set[int] = set()
    heap = [(-len(graph.neighbors(m)), m, 0) for m in members]
    heapq.heapify(heap)
    chosen: list[int] = []
    step = 0
    while heap and len(chosen) < n_select:
        neg_q, node, stamp = heapq.heappop(heap)
        if stamp == step:
            chosen.append(node)
            covered.update(graph.neighbors(node).tolist())
            step += 1
            continue
        q = sum(1 for j in graph.neighbors(node).tolist() if j not in covered)
        heapq.heappush(heap, (-q, node, step))
    return chosen


def select_seeds(
    graph: SemanticGraph,
    clustering: Clustering,
    target: int,
    beta: float = 0.01,
) -> SeedSet:
    """Select about ``target`` seeds, at least one per cluster, by maximum consequential score."""
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    if len(clustering) != graph.n_nodes:
        raise ValueError(f"clustering covers {len(clustering)} nodes, graph has {graph.n_nodes}")
    if graph.n_nodes == 0:
        return SeedSet(target=target)
    clusters = clustering.clusters()
    sizes = [len(m) for m in clusters.values()]
    p = seed_proportion(sizes, target, beta)
    per_cluster = {}
    for cid, members in clusters.items():
        n_ck = max(1, math.floor(p * len(members)))
        if n_ck > len(members):
            logger.info("cluster %d: %d seeds requested but only %d members", cid, n_ck, len(members))
            n_ck = len(members)
        per_cluster[cid] = _greedy_cluster(graph, members, n_ck)
    return SeedSet(per_cluster=per_cluster, proportion=p, target=target)


def write_seeds(seeds: SeedSet, concepts: Sequence, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node, cid, rank in seeds.ranked():
            fh.write(f"{concepts[node]}\t{cid}\t{rank}\n")


def read_seeds(path: Union[str, Path]) -> list[tuple[str, int, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                concept, cid, rank = line.rstrip("\n").split("\t")
                out.append((concept, int(cid), int(rank)))
    return out


class SeedSelector(BaseEstimator):
    """Estimator form of :func:`select_seeds`.

    ``fit(graph, clustering)`` accepts a :class:`SemanticGraph` (or a square
    sparse/dense affinity matrix) and a :class:`Clustering` (or an array of
    cluster labels).
    """

    def __init__(self, n_seeds: int = 1, beta: float = 0.01):
        self.n_seeds = n_seeds
        self.beta = beta

    def fit(self, graph, clustering):
        if not isinstance(graph, SemanticGraph):
            adj = sp.triu(sp.csr_matrix(graph), k=1).tocoo()
            graph = SemanticGraph(adj.shape[0], adj.row, adj.col, adj.data)
        if not isinstance(clustering, Clustering):
            labels = np.asarray(clustering, dtype=np.int64)
            clustering = Clustering(labels, np.zeros(labels.size))
        self.seed_set_ = select_seeds(graph, clustering, self.n_seeds, self.beta)
        self.seeds_ = np.array(self.seed_set_.total, dtype=np.int64)
        self.proportion_ = self.seed_set_.proportion
        return self
