"""Triples, the knowledge base container, rule validation and statistics."""

from __future__ import annotations

import csv
import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .taxonomy import Concept, Taxonomy, Topic, TopicType, topic_key

logger = logging.getLogger(__name__)


class Relation(str, enum.Enum):
    ALIGNS_WITH = "aligns_with"
    SUPPORTS = "supports"
    UNDERMINES = "undermines"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Relation":
        return cls(text.strip().lower().replace(" ", "_"))

    def legal_for(self, topic_type: TopicType) -> bool:
        if self is Relation.ALIGNS_WITH:
            return topic_type is TopicType.PILLAR
        return topic_type is not TopicType.PILLAR


class Provenance(str, enum.Enum):
    SEED = "seed"
    PROPAGATED = "propagated"

    def __str__(self) -> str:
        return self.value


class Polarity(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Triple:
    concept: Concept
    relation: Relation
    topic: str
    provenance: Provenance = Provenance.SEED
    confidence: float = 1.0
    polarity: Optional[Polarity] = None

    def __post_init__(self):
        if isinstance(self.concept, str):
            object.__setattr__(self, "concept", Concept(self.concept))
        object.__setattr__(self, "relation", Relation(self.relation))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.polarity is not None:
            object.__setattr__(self, "polarity", Polarity(self.polarity))
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {conf}")
        if self.provenance is Provenance.SEED and conf != 1.0:
            raise ValueError("seed triples carry confidence 1.0")
        object.__setattr__(self, "confidence", conf)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.concept.text, self.relation.value, topic_key(self.topic))


class KnowledgeBase:
    """An immutable list of triples bound to a taxonomy."""

    def __init__(self, triples: Iterable[Triple], taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        self.triples: tuple[Triple, ...] = tuple(triples)
        self._by_concept: dict[Concept, list[Triple]] = defaultdict(list)
        for t in self.triples:
            self._by_concept[t.concept].append(t)

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    @property
    def concepts(self) -> list[Concept]:
        return sorted(self._by_concept)

    def triples_for(self, concept: Union[Concept, str]) -> list[Triple]:
        if isinstance(concept, str):
            concept = Concept(concept)
        return list(self._by_concept.get(concept, ()))

    def supported_topics(self, concept: Concept) -> list[str]:
        """Canonical names of topics the concept holds a ``supports`` relation with."""
        out = []
        for t in self._by_concept.get(concept, ()):
            if t.relation is Relation.SUPPORTS:
                topic = self.taxonomy.get(t.topic)
                out.append(topic.name if topic else t.topic)
        return out

    def pillar_of(self, concept: Concept) -> Optional[str]:
        pillars = [t.topic for t in self._by_concept.get(concept, ()) if t.relation is Relation.ALIGNS_WITH]
        return pillars[0] if len(pillars) == 1 else None


# --------------------------------------------------------------------------- I/O


def _fmt_conf(value: float) -> str:
    return f"{value:.6f}"


def parse_triple_line(line: str, lineno: int = 0, taxonomy: Optional[Taxonomy] = None) -> Triple:
    cols = [c.strip() for c in line.rstrip("\r\n").split("\t")]
    if len(cols) == 3:
        cols += ["seed", "1.0", "-"]
    if len(cols) != 6:
        raise ValueError(f"line {lineno}: expected 6 tab-separated columns, got {len(cols)}")
    concept, relation, topic, prov, conf, pol = cols
    if taxonomy is not None and topic in taxonomy:
        topic = taxonomy.canonical(topic)
    try:
        return Triple(
            concept=Concept(concept),
            relation=Relation.parse(relation),
            topic=topic,
            provenance=Provenance(prov.lower()),
            confidence=float(conf),
            polarity=None if pol in ("", "-") else Polarity(pol.lower()),
        )
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None


def _triple_lines(fh, is_csv: bool) -> Iterator[tuple[int, str]]:
    """Non-blank, non-comment lines as tab-joined text; CSV rows are converted
    and a leading header row (one naming a ``relation`` column) is skipped."""
    if not is_csv:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() and not line.startswith("#"):
                yield lineno, line
        return
    for lineno, row in enumerate(csv.reader(fh), start=1):
        if not row or not "".join(row).strip() or row[0].startswith("#"):
            continue
        if lineno == 1 and any(c.strip().lower() == "relation" for c in row):
            continue
        yield lineno, "\t".join(row)


def read_triples(path: Union[str, Path], taxonomy: Optional[Taxonomy] = None) -> list[Triple]:
    """Read a triple file, dropping exact duplicates with a warning.

    Files ending in ``.csv`` are read as comma-separated with an optional
    header row; anything else as tab-separated.

    Topic names matching the taxonomy case-insensitively are rewritten to their
    canonical casing; unknown topics are kept verbatim so validation can
    report them.
    """
    triples: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in _triple_lines(fh, Path(path).suffix.lower() == ".csv"):
            triple = parse_triple_line(line, lineno, taxonomy)
            ident = triple.key
            if ident in seen:
                logger.warning("%s:%d: duplicate triple %s dropped", path, lineno, triple.key)
                continue
            seen.add(ident)
            triples.append(triple)
    return triples


def load_kb(path: Union[str, Path], taxonomy: Taxonomy) -> KnowledgeBase:
    return KnowledgeBase(read_triples(path, taxonomy), taxonomy)


def format_triple(t: Triple) -> str:
    return "\t".join(
        [
            t.concept.text,
            t.relation.value,
            t.topic,
            t.provenance.value,
            _fmt_conf(t.confidence),
            t.polarity.value if t.polarity else "-",
        ]
    )


def write_triples(triples: Iterable[Triple], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in triples:
            fh.write(format_triple(t) + "\n")


def sort_triples(triples: Iterable[Triple], taxonomy: Taxonomy) -> list[Triple]:
    """Deterministic order: by concept, then taxonomy order of the topic."""
    order = {t.key: i for i, t in enumerate(taxonomy)}
    return sorted(
        triples,
        key=lambda t: (t.concept.text, order.get(topic_key(t.topic), len(order)), t.topic, t.relation.value),
    )


# -------------------------------------------------------------------- validation

PILLAR_ASSIGNMENT = "pillar-assignment"
SINGLE_LABEL = "single-label"
PARENT_CHILD = "parent-child"
CROSS_LABEL = "cross-label"
UNKNOWN_TOPIC = "unknown-topic"
RELATION_LEGALITY = "relation-legality"

RULE_NAMES = {
    PILLAR_ASSIGNMENT: "Pillar Assignment",
    SINGLE_LABEL: "Single Label within Topic Types",
    PARENT_CHILD: "Cross-Labels between Parent & Children",
    CROSS_LABEL: "Cross-Labels between Cross & Non-Cross",
    UNKNOWN_TOPIC: "Unknown Topic",
    RELATION_LEGALITY: "Relation Legality",
}


@dataclass(frozen=True)
class Violation:
    rule: str
    concept: Concept
    triples: tuple[Triple, ...]
    message: str = ""

    @property
    def rule_name(self) -> str:
        return RULE_NAMES[self.rule]

    def __str__(self) -> str:
        return f"[{self.rule}] {self.concept}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]


def validate_triples(kb: KnowledgeBase, require_pillar: bool = False) -> ValidationReport:
    """Check every concept's triples against the four relation rules.

    Triples naming a topic absent from the taxonomy, or using a relation that
    is illegal for the topic type, are reported under their own rule ids and
    excluded from the four structural checks. A missing pillar triple is only
    a violation with ``require_pillar=True``; by default the checks use what
    is present.
    """
    tax = kb.taxonomy
    report = ValidationReport()
    for concept in kb.concepts:
        known: list[tuple[Triple, Topic]] = []
        for t in kb.triples_for(concept):
            topic = tax.get(t.topic)
            if topic is None:
                report.violations.append(
                    Violation(UNKNOWN_TOPIC, concept, (t,), f"unknown topic {t.topic!r}")
                )
            elif not t.relation.legal_for(topic.topic_type):
                report.violations.append(
                    Violation(
                        RELATION_LEGALITY,
                        concept,
                        (t,),
                        f"{t.relation} is not allowed toward {topic.topic_type} topic {topic.name!r}",
                    )
                )
            else:
                known.append((t, topic))
        report.violations.extend(_check_concept(concept, known, require_pillar))
    return report


def _check_concept(concept: Concept, known: list[tuple[Triple, Topic]], require_pillar: bool) -> list[Violation]:
    out = []
    by_type: dict[TopicType, list[tuple[Triple, Topic]]] = defaultdict(list)
    for t, topic in known:
        by_type[topic.topic_type].append((t, topic))

    pillars = by_type.get(TopicType.PILLAR, [])
    if len(pillars) > 1 or (require_pillar and not pillars and known):
        out.append(
            Violation(
                PILLAR_ASSIGNMENT,
                concept,
                tuple(t for t, _ in pillars),
                f"expected exactly one aligns_with pillar, found {len(pillars)}",
            )
        )

    for tt in (TopicType.BROAD, TopicType.SUB, TopicType.CROSS_BROAD, TopicType.CROSS_SUB):
        entries = by_type.get(tt, [])
        if len(entries) > 1:
            out.append(
                Violation(
                    SINGLE_LABEL,
                    concept,
                    tuple(t for t, _ in entries),
                    f"{len(entries)} relations within topic type {tt}",
                )
            )

    for child_type, parent_type in ((TopicType.SUB, TopicType.BROAD), (TopicType.CROSS_SUB, TopicType.CROSS_BROAD)):
        parents = by_type.get(parent_type, [])
        if len(parents) != 1:
            continue
        parent_t, parent_topic = parents[0]
        for t, topic in by_type.get(child_type, []):
            if topic_key(topic.parent or "") != parent_topic.key:
                out.append(
                    Violation(
                        PARENT_CHILD,
                        concept,
                        (parent_t, t),
                        f"{child_type} topic {topic.name!r} is not under {parent_type} topic {parent_topic.name!r}",
                    )
                )

    cross = by_type.get(TopicType.CROSS_BROAD, []) + by_type.get(TopicType.CROSS_SUB, [])
    if cross and len(pillars) == 1:
        pillar_t, pillar_topic = pillars[0]
        if pillar_topic.key != topic_key("Environmental"):
            out.append(
                Violation(
                    CROSS_LABEL,
                    concept,
                    (pillar_t,) + tuple(t for t, _ in cross),
                    f"cross topics require the Environmental pillar, concept aligns with {pillar_topic.name!r}",
                )
            )
    return out


# ------------------------------------------------------------------------ stats

RELATION_ORDER = (Relation.SUPPORTS, Relation.UNDERMINES, Relation.ALIGNS_WITH)


@dataclass(frozen=True)
class StatsRow:
    topic: str
    topic_type: TopicType
    total: int
    counts: dict[Relation, int]


@dataclass
class StatsTable:
    rows: list[StatsRow]
    total_triples: int
    unique_concepts: int
    relation_totals: dict[Relation, int]
    unknown_topic_triples: int = 0

    def row(self, topic: str) -> StatsRow:
        key = topic_key(topic)
        for r in self.rows:
            if topic_key(r.topic) == key:
                return r
        raise KeyError(topic)

    def to_tsv(self) -> str:
        lines = ["topic\ttopic_type\ttotal\t" + "\t".join(r.value for r in RELATION_ORDER)]
        for r in self.rows:
            lines.append(
                "\t".join([r.topic, r.topic_type.value, str(r.total)] + [str(r.counts[rel]) for rel in RELATION_ORDER])
            )
        lines.append(
            "\t".join(["TOTAL", "-", str(self.total_triples)] + [str(self.relation_totals[rel]) for rel in RELATION_ORDER])
        )
        return "\n".join(lines) + "\n"


def kb_stats(kb: KnowledgeBase) -> StatsTable:
    """Per-topic triple counts by relation, in taxonomy order."""
    per_topic: dict[str, Counter] = {t.key: Counter() for t in kb.taxonomy}
    unknown = 0
    relation_totals: Counter = Counter()
    for t in kb.triples:
        relation_totals[t.relation] += 1
        key = topic_key(t.topic)
        if key in per_topic:
            per_topic[key][t.relation] += 1
        else:
            unknown += 1
    rows = [
        StatsRow(
            topic=topic.name,
            topic_type=topic.topic_type,
            total=sum(per_topic[topic.key].values()),
            counts={rel: per_topic[topic.key][rel] for rel in RELATION_ORDER},
        )
        for topic in kb.taxonomy
    ]
    return StatsTable(
        rows=rows,
        total_triples=len(kb.triples),
        unique_concepts=len({t.concept for t in kb.triples}),
        relation_totals={rel: relation_totals[rel] for rel in RELATION_ORDER},
        unknown_topic_triples=unknown,
    )


def triples_from_rows(rows: Sequence[Sequence[str]], taxonomy: Optional[Taxonomy] = None) -> list[Triple]:
    """Build seed triples from ``(concept, relation, topic)`` rows."""
    out = []
    for concept, relation, topic in rows:
        if taxonomy is not None and topic in taxonomy:
            topic = taxonomy.canonical(topic)
        out.append(Triple(Concept(concept), Relation.parse(relation), topic))
    return out
