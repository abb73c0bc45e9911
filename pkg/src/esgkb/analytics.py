"""Topic frequencies and top concepts from concept matches."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .kb import KnowledgeBase
from .matcher import MatchResult
from .taxonomy import Concept, TopicType

JSON = "json"
CSV = "csv"


@dataclass
class TopicCount:
    name: str
    topic_type: TopicType
    parent: Optional[str]
    count: int


@dataclass
class TopicFrequencies:
    """Per-topic counts in taxonomy order (pillars omitted) plus the unattributed tally."""

    rows: list[TopicCount] = field(default_factory=list)
    unattributed: int = 0

    def __getitem__(self, name: str) -> int:
        for r in self.rows:
            if r.name.casefold() == name.casefold():
                return r.count
        raise KeyError(name)

    def as_dict(self) -> dict[str, int]:
        return {r.name: r.count for r in self.rows}

    def children_of(self, name: str) -> list[TopicCount]:
        return [r for r in self.rows if r.parent == name]


def _match_counts(matches: Iterable[MatchResult], kb: KnowledgeBase) -> Counter:
    known = set(kb.concepts)
    counts: Counter = Counter()
    for m in matches:
        if m.concept not in known:
            raise ValueError(f"matched concept {m.concept.text!r} is not in the knowledge base")
        counts[m.concept] += 1
    return counts


def topic_frequencies(matches: Iterable[MatchResult], kb: KnowledgeBase) -> TopicFrequencies:
    """Count matches per topic through ``supports`` triples only.

    A match adds one to every topic its concept supports, so a concept
    supporting a broad topic and one of its sub topics raises both rows.
    Matches of concepts without any supported topic land in ``unattributed``.
    """
    topic_counts: Counter = Counter()
    unattributed = 0
    for concept, n in _match_counts(matches, kb).items():
        topics = {kb.taxonomy.canonical(t) if t in kb.taxonomy else t for t in kb.supported_topics(concept)}
        if not topics:
            unattributed += n
        for t in topics:
            topic_counts[t] += n
    rows = [
        TopicCount(t.name, t.topic_type, t.parent, topic_counts.get(t.name, 0))
        for t in kb.taxonomy
        if t.topic_type is not TopicType.PILLAR
    ]
    return TopicFrequencies(rows, unattributed)


def top_concepts(matches: Iterable[MatchResult], kb: KnowledgeBase, topic: str, n: int) -> list[tuple[Concept, int]]:
    """Matched concepts supporting ``topic``, most frequent first, ties by text."""
    if topic not in kb.taxonomy:
        raise KeyError(f"unknown topic {topic!r}")
    name = kb.taxonomy.canonical(topic)
    counts = _match_counts(matches, kb)
    ranked = [
        (c, k)
        for c, k in counts.items()
        if any(kb.taxonomy.get(t) is not None and kb.taxonomy.canonical(t) == name for t in kb.supported_topics(c))
    ]
    ranked.sort(key=lambda ck: (-ck[1], ck[0].text))
    return ranked[: max(0, n)]


def all_top_concepts(matches: Iterable[MatchResult], kb: KnowledgeBase, n: int) -> dict[str, list[tuple[Concept, int]]]:
    """:func:`top_concepts` for every non-pillar topic that has at least one match."""
    matches = list(matches)
    out = {}
    for t in kb.taxonomy:
        if t.topic_type is TopicType.PILLAR:
            continue
        ranked = top_concepts(matches, kb, t.name, n)
        if ranked:
            out[t.name] = ranked
    return out


def report_json(freqs: TopicFrequencies, top: dict[str, list[tuple[Concept, int]]]) -> str:
    doc = {
        "topics": [
            {"name": r.name, "type": r.topic_type.value, "parent": r.parent, "count": r.count} for r in freqs.rows
        ],
        "top_concepts": {
            topic: [{"concept": c.text, "count": k} for c, k in ranked] for topic, ranked in top.items()
        },
        "unattributed": freqs.unattributed,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def report_csv(freqs: TopicFrequencies) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["topic", "parent", "count"])
    for r in freqs.rows:
        writer.writerow([r.name, r.parent or "", r.count])
    return buf.getvalue()


def emit_report(
    freqs: TopicFrequencies,
    top: dict[str, list[tuple[Concept, int]]],
    path: Union[str, Path],
    fmt: str = JSON,
) -> Path:
    """Write the report; identical inputs give identical bytes."""
    if fmt == JSON:
        text = report_json(freqs, top)
    elif fmt == CSV:
        text = report_csv(freqs)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path
