"""Turn annotated seeds into a full knowledge base by level-wise propagation."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from .graph import SemanticGraph
from .kb import KnowledgeBase, Provenance, Relation, Triple, sort_triples, validate_triples
from .propagation import LabelMatrix, assign_rows, propagate
from .taxonomy import Concept, Taxonomy, TopicType, pillar_code, topic_key

logger = logging.getLogger(__name__)

LEVELS = (TopicType.PILLAR, TopicType.BROAD, TopicType.CROSS_BROAD, TopicType.SUB, TopicType.CROSS_SUB)
ENVIRONMENTAL = "Environmental"


def seed_labels(triples: Iterable[Triple], taxonomy: Taxonomy) -> dict[Concept, dict[TopicType, tuple[str, str]]]:
    """Per seed concept, its ``(relation, topic)`` label at each topic level it holds."""
    out: dict[Concept, dict[TopicType, tuple[str, str]]] = defaultdict(dict)
    for t in triples:
        topic = taxonomy.get(t.topic)
        if topic is None:
            raise ValueError(f"seed triple {t.key} names unknown topic {t.topic!r}")
        level = out[t.concept]
        if topic.topic_type in level:
            raise ValueError(f"seed {t.concept.text!r} has two {topic.topic_type} labels")
        level[topic.topic_type] = (t.relation.value, topic.name)
    return dict(out)


def _allowed(level: TopicType, label: Optional[tuple[str, str]], assigned: dict[TopicType, tuple[str, str]],
             taxonomy: Taxonomy) -> bool:
    """Whether a non-seed holding ``assigned`` labels may take ``label`` at ``level``."""
    if label is None:
        return True
    topic = taxonomy[label[1]]
    pillar = assigned.get(TopicType.PILLAR)
    if level is TopicType.PILLAR:
        return True
    if pillar is None:
        return False
    if level is TopicType.BROAD:
        return pillar_code(pillar[1]) in topic.pillar_scope
    if level is TopicType.CROSS_BROAD:
        return pillar[1] == ENVIRONMENTAL
    parent = assigned.get(level.parent_type)
    return parent is not None and topic_key(parent[1]) == topic_key(topic.parent or "")


def propagate_levels(
    graph: SemanticGraph,
    concepts: Sequence[Concept],
    seeds: Iterable[Concept],
    seed_triples: Iterable[Triple],
    taxonomy: Taxonomy,
    n_layers: int = 50,
    alpha: float = 0.5,
    tol: float = 1e-9,
    tau_assign: float = 0.0,
    n_jobs: int = 1,
) -> list[Triple]:
    """Propagated triples for non-seed nodes, one propagation per topic level.

    Each level uses one class per ``(relation, topic)`` seen on seeds plus a
    ``None`` class for seeds without a label at that level. A non-seed only
    competes over classes consistent with what it already received: broad
    topics within its pillar's scope, cross topics only when Environmental,
    sub topics under its broad (cross-sub under its cross-broad) topic.
    """
    if graph.n_nodes != len(concepts):
        raise ValueError(f"graph has {graph.n_nodes} nodes but {len(concepts)} concepts were given")
    index = {c: i for i, c in enumerate(concepts)}
    labels = seed_labels(seed_triples, taxonomy)
    seed_nodes: dict[int, Concept] = {}
    for c in seeds:
        if c not in index:
            logger.warning("seed %r is not a graph node, ignored for propagation", c.text)
            continue
        seed_nodes[index[c]] = c
    for c in labels:
        if c not in index or index[c] not in seed_nodes:
            logger.warning("labels of %r ignored: not a seed node", c.text)
    if not seed_nodes:
        raise ValueError("no seed is a node of the graph")

    assigned: dict[int, dict[TopicType, tuple[str, str]]] = defaultdict(dict)
    confidence: dict[tuple[int, TopicType], float] = {}
    for level in LEVELS:
        node_class: dict[int, Hashable] = {
            i: labels.get(c, {}).get(level) for i, c in sorted(seed_nodes.items())
        }
        classes = sorted(set(node_class.values()), key=lambda k: (k is not None, k or ("", "")))
        if all(k is None for k in classes):
            continue
        result = propagate(graph, LabelMatrix.from_seeds(graph.n_nodes, node_class, classes),
                           n_layers=n_layers, alpha=alpha, tol=tol, n_jobs=n_jobs)
        values = result.values.copy()
        for i in np.flatnonzero(~result.seed_mask):
            for k, cls in enumerate(classes):
                if values[i, k] and not _allowed(level, cls, assigned.get(int(i), {}), taxonomy):
                    values[i, k] = 0.0
        masked = LabelMatrix(values, result.seed_mask, classes, result.n_iter)
        for node, (cls, conf) in assign_rows(masked, tau_assign).items():
            if cls is not None:
                assigned[node][level] = cls
                confidence[(node, level)] = conf

    out = []
    for node in sorted(assigned):
        for level, (relation, topic) in assigned[node].items():
            out.append(
                Triple(concepts[node], Relation(relation), topic, Provenance.PROPAGATED,
                       min(1.0, confidence[(node, level)]))
            )
    return sort_triples(out, taxonomy)


def build_kb(seed_triples: Iterable[Triple], propagated: Iterable[Triple], taxonomy: Taxonomy) -> KnowledgeBase:
    """Merge seed and propagated triples; seed labels win for any concept present in both."""
    seed_triples = list(seed_triples)
    seeded = {t.concept for t in seed_triples}
    merged = seed_triples + [t for t in propagated if t.concept not in seeded]
    kb = KnowledgeBase(sort_triples(merged, taxonomy), taxonomy)
    report = validate_triples(kb)
    if not report.ok:
        for v in report:
            logger.error("%s", v)
        raise ValueError(f"merged knowledge base violates {len(report)} rule(s): {', '.join(report.rules())}")
    return kb
