"""Seed-clamped label propagation over the semantic graph."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Hashable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .graph import SemanticGraph
from .kb import Provenance, Relation, Triple
from .taxonomy import Concept

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-9


@dataclass
class LabelMatrix:
    """Per-node label scores; seed rows start one-hot, the rest at zero."""

    values: np.ndarray
    seed_mask: np.ndarray
    classes: list
    n_iter: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.seed_mask = np.asarray(self.seed_mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape[0] != self.seed_mask.size:
            raise ValueError("values must be (n_nodes, n_classes) with one mask entry per node")
        if self.values.shape[1] != len(self.classes):
            raise ValueError("one column per class is required")

    @classmethod
    def from_seeds(cls, n_nodes: int, seeds: dict[int, Hashable], classes: Optional[Sequence] = None) -> "LabelMatrix":
        """One-hot rows for ``{node: class}`` seeds; classes sorted by first use unless given."""
        if classes is None:
            classes = []
            for label in seeds.values():
                if label not in classes:
                    classes.append(label)
        col = {c: k for k, c in enumerate(classes)}
        values = np.zeros((n_nodes, len(classes)))
        mask = np.zeros(n_nodes, dtype=bool)
        for node, label in seeds.items():
            values[node, col[label]] = 1.0
            mask[node] = True
        return cls(values, mask, list(classes))

    def copy(self) -> "LabelMatrix":
        return LabelMatrix(self.values.copy(), self.seed_mask.copy(), list(self.classes), self.n_iter)


def normalized_adjacency(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """``D^-1/2 A D^-1/2`` with zero rows/columns for isolated nodes."""
    A = sp.csr_matrix(adjacency, dtype=np.float64)
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    D = sp.diags(inv_sqrt)
    S = (D @ A @ D).tocsr()
    S.sort_indices()
    return S


def propagate(
    graph: Union[SemanticGraph, sp.spmatrix],
    seeds: LabelMatrix,
    n_layers: int = 50,
    alpha: float = 0.5,
    tol: float = CONVERGENCE_TOL,
    n_jobs: int = 1,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> LabelMatrix:
    """Iterate ``L <- alpha * S @ L + (1 - alpha) * L0`` with seed rows clamped.

    Stops after ``n_layers`` iterations or once no entry moves by ``tol`` or
    more. Columns are independent, so with ``n_jobs > 1`` they are spread over
    threads without changing a single bit of the result. ``callback(k, L)``
    is called after each clamped iteration.
    """
    adj = graph.adjacency() if isinstance(graph, SemanticGraph) else sp.csr_matrix(graph)
    n, k = seeds.values.shape
    if adj.shape != (n, n):
        raise ValueError(f"graph has {adj.shape[0]} nodes but label matrix has {n} rows")
    if not seeds.seed_mask.any():
        raise ValueError("at least one seed row is required")
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    L0 = seeds.values.copy()
    L0[~seeds.seed_mask] = 0.0
    if seeds.seed_mask.all() or k == 0:
        out = seeds.copy()
        out.values = L0
        return out

    S = normalized_adjacency(adj)
    mask = seeds.seed_mask
    base = (1.0 - alpha) * L0

    def step(L: np.ndarray, cols: slice) -> np.ndarray:
        nxt = alpha * (S @ L[:, cols]) + base[:, cols]
        nxt[mask] = L0[mask, cols]
        return nxt

    chunks = _column_chunks(k, n_jobs)
    L = L0.copy()
    it = 0
    pool = ThreadPoolExecutor(max_workers=n_jobs) if len(chunks) > 1 else None
    try:
        for it in range(1, n_layers + 1):
            if pool is None:
                nxt = step(L, slice(0, k))
            else:
                nxt = np.hstack(list(pool.map(lambda c: step(L, c), chunks)))
            delta = float(np.max(np.abs(nxt - L))) if nxt.size else 0.0
            L = nxt
            if callback is not None:
                callback(it, L)
            if delta < tol:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return LabelMatrix(L, mask.copy(), list(seeds.classes), n_iter=it)


def _column_chunks(k: int, n_jobs: int) -> list[slice]:
    n_jobs = max(1, min(n_jobs, k))
    bounds = np.linspace(0, k, n_jobs + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def assign_rows(result: LabelMatrix, tau_assign: float = 0.0) -> dict[int, tuple[Hashable, float]]:
    """Argmax class and normalized confidence for each labelled non-seed row.

    Rows whose maximum does not exceed ``tau_assign`` get nothing; rows with a
    tied maximum are skipped and logged.
    """
    out = {}
    for i in np.flatnonzero(~result.seed_mask):
        row = result.values[i]
        if row.size == 0:
            continue
        top = row.max()
        if not top > tau_assign:
            continue
        winners = np.flatnonzero(row == top)
        if winners.size > 1:
            logger.info("node %d: tie between classes %s, no label assigned",
                        i, [result.classes[w] for w in winners])
            continue
        out[int(i)] = (result.classes[int(winners[0])], float(top / row.sum()))
    return out


def assign_labels(
    result: LabelMatrix,
    concepts: Sequence[Concept],
    tau_assign: float = 0.0,
) -> list[Triple]:
    """Propagated triples for non-seed rows.

    Classes are ``(relation, topic)`` pairs; a ``None`` class stands for an
    explicit "no label" outcome and produces no triple.
    """
    triples = []
    for node, (label, conf) in sorted(assign_rows(result, tau_assign).items()):
        if label is None:
            continue
        relation, topic = label
        triples.append(
            Triple(
                concept=concepts[node],
                relation=Relation(relation),
                topic=topic,
                provenance=Provenance.PROPAGATED,
                confidence=min(1.0, conf),
            )
        )
    return triples


def count_new_labels(result: LabelMatrix, tau_assign: float = 0.0) -> int:
    """Number of non-seed nodes that receive a label."""
    return len(assign_rows(result, tau_assign))


class GraphLabelPropagation(ClassifierMixin, BaseEstimator):
    """Transductive label propagation on a precomputed affinity graph.

    Follows the scikit-learn semi-supervised convention: ``y`` holds a class
    label per node and ``-1`` for unlabelled nodes.

    Parameters
    ----------
    n_layers : int, default=50
        Maximum number of propagation iterations.
    alpha : float, default=0.5
        Weight of the propagated term against the initial labels.
    tol : float, default=1e-9
        Convergence threshold on the largest entry change.
    n_jobs : int, default=1
        Threads over label columns; results are identical for any value.

    Attributes
    ----------
    classes_ : ndarray
    label_distributions_ : ndarray of shape (n_nodes, n_classes)
        Propagated scores, rows normalized to sum 1 where non-zero.
    transduction_ : ndarray of shape (n_nodes,)
        Argmax label per node, ``-1`` where nothing arrived.
    n_iter_ : int
    """

    def __init__(self, n_layers: int = 50, alpha: float = 0.5, tol: float = CONVERGENCE_TOL, n_jobs: int = 1):
        self.n_layers = n_layers
        self.alpha = alpha
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X, y):
        y = np.asarray(y)
        adj = X.adjacency() if isinstance(X, SemanticGraph) else sp.csr_matrix(X)
        if adj.shape[0] != adj.shape[1] or adj.shape[0] != y.size:
            raise ValueError("X must be a square affinity over the nodes in y")
        labelled = y != -1
        self.classes_ = np.unique(y[labelled])
        seeds = LabelMatrix.from_seeds(
            y.size, {int(i): y[i] for i in np.flatnonzero(labelled)}, list(self.classes_)
        )
        result = propagate(adj, seeds, self.n_layers, self.alpha, self.tol, self.n_jobs)
        self.raw_scores_ = result.values
        sums = result.values.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.label_distributions_ = np.where(sums > 0, result.values / sums, 0.0)
        trans = np.full(y.size, -1, dtype=self.classes_.dtype if self.classes_.size else np.int64)
        for node, (label, _) in assign_rows(result).items():
            trans[node] = label
        trans[labelled] = y[labelled]
        self.transduction_ = trans
        self.n_iter_ = result.n_iter
        return self

    def predict(self, X=None):
        check_is_fitted(self, "transduction_")
        return self.transduction_
