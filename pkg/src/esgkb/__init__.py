"""ESG concept knowledge base construction and lexicon-driven topic analysis."""

from .taxonomy import Concept, Taxonomy, Topic, TopicType, load_taxonomy
from .kb import KnowledgeBase, Relation, Triple, kb_stats, load_kb, validate_triples
from .parser import ConceptExtractor, count_and_filter, parse_concepts
from .graph import EmbeddingTable, SemanticGraph, SimilarityGraph, build_graph, cosine
from .seeds import Clustering, ComponentClustering, SeedSelector, cqi, select_seeds
from .propagation import GraphLabelPropagation, LabelMatrix, assign_labels, propagate
from .annotation import Annotator, MockBackend, RemoteBackend
from .matcher import LexiconMatcher, match_exact, match_flexible, tokenize_report
from .analytics import emit_report, top_concepts, topic_frequencies
from .metrics import Judgment, aggregate_metrics, agreement, collect_topic_terms

__version__ = "0.1.0"

__all__ = [
    "Concept",
    "Taxonomy",
    "Topic",
    "TopicType",
    "load_taxonomy",
    "KnowledgeBase",
    "Relation",
    "Triple",
    "kb_stats",
    "load_kb",
    "validate_triples",
    "ConceptExtractor",
    "count_and_filter",
    "parse_concepts",
    "EmbeddingTable",
    "SemanticGraph",
    "SimilarityGraph",
    "build_graph",
    "cosine",
    "Clustering",
    "ComponentClustering",
    "SeedSelector",
    "cqi",
    "select_seeds",
    "GraphLabelPropagation",
    "LabelMatrix",
    "assign_labels",
    "propagate",
    "Annotator",
    "MockBackend",
    "RemoteBackend",
    "LexiconMatcher",
    "match_exact",
    "match_flexible",
    "tokenize_report",
    "emit_report",
    "top_concepts",
    "topic_frequencies",
    "Judgment",
    "aggregate_metrics",
    "agreement",
    "collect_topic_terms",
]
