"""Concepts, topic types and the hierarchical ESG taxonomy."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

logger = logging.getLogger(__name__)

PILLAR_CODES = {"E": "Environmental", "S": "Social", "G": "Governance"}


class TaxonomyError(ValueError):
    """Raised when a taxonomy file is malformed or inconsistent."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopicType(str, enum.Enum):
    PILLAR = "pillar"
    BROAD = "broad"
    SUB = "sub"
    CROSS_BROAD = "cross-broad"
    CROSS_SUB = "cross-sub"

    def __str__(self) -> str:
        return self.value

    @property
    def parent_type(self) -> Optional["TopicType"]:
        return _PARENT_TYPE[self]


_PARENT_TYPE = {
    TopicType.PILLAR: None,
    TopicType.BROAD: TopicType.PILLAR,
    TopicType.CROSS_BROAD: TopicType.PILLAR,
    TopicType.SUB: TopicType.BROAD,
    TopicType.CROSS_SUB: TopicType.CROSS_BROAD,
}


def normalize_phrase(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True, order=True)
class Concept:
    """A lowercase 2 or 3 word phrase; the first word is the verb slot.

    >>> Concept("Halve  carbon emission ").words
    ('halve', 'carbon', 'emission')
    """

    text: str

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise TypeError(f"concept text must be str, got {type(self.text).__name__}")
        norm = normalize_phrase(self.text)
        n = len(norm.split())
        if n not in (2, 3):
            raise ValueError(f"a concept has 2 or 3 words, got {n}: {self.text!r}")
        object.__setattr__(self, "text", norm)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Concept":
        return cls(" ".join(words))

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.text.split(" "))

    @property
    def arity(self) -> int:
        return len(self.words)

    @property
    def verb(self) -> str:
        return self.words[0]

    @property
    def noun_phrase(self) -> tuple[str, ...]:
        return self.words[1:]

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Topic:
    name: str
    topic_type: TopicType
    parent: Optional[str] = None
    pillar_scope: frozenset[str] = field(default_factory=frozenset)

    @property
    def key(self) -> str:
        return topic_key(self.name)


def topic_key(name: str) -> str:
    """Case-insensitive lookup key for a topic name."""
    return " ".join(name.split()).casefold()


class Taxonomy:
    """Ordered, validated collection of topics with parent edges.

    Lookups by name are case-insensitive; ``Topic.name`` keeps the canonical
    casing from the source file.
    """

    def __init__(self, topics: Iterable[Topic]):
        self._topics: dict[str, Topic] = {}
        for topic in topics:
            if topic.key in self._topics:
                raise TaxonomyError(f"duplicate topic name {topic.name!r}")
            self._topics[topic.key] = topic
        self._check_structure()

    def _check_structure(self) -> None:
        for topic in self._topics.values():
            expected = topic.topic_type.parent_type
            if topic.parent is None:
                if expected is None:
                    continue
                # multi-pillar broad topics (e.g. Communications) hang off no single pillar
                if expected is TopicType.PILLAR and len(topic.pillar_scope) > 1:
                    continue
                raise TaxonomyError(f"{topic.topic_type} topic {topic.name!r} needs a parent")
            parent = self._topics.get(topic_key(topic.parent))
            if parent is None:
                raise TaxonomyError(f"topic {topic.name!r} has unknown parent {topic.parent!r}")
            if parent.topic_type is not expected:
                raise TaxonomyError(
                    f"{topic.topic_type} topic {topic.name!r} has a {parent.topic_type} parent"
                )

    def __iter__(self) -> Iterator[Topic]:
        return iter(self._topics.values())

    def __len__(self) -> int:
        return len(self._topics)

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and topic_key(name) in self._topics

    def get(self, name: str) -> Optional[Topic]:
        return self._topics.get(topic_key(name))

    def __getitem__(self, name: str) -> Topic:
        topic = self.get(name)
        if topic is None:
            raise KeyError(name)
        return topic

    def canonical(self, name: str) -> str:
        return self[name].name

    def by_type(self, topic_type: Union[TopicType, str]) -> list[Topic]:
        topic_type = TopicType(topic_type)
        return [t for t in self if t.topic_type is topic_type]

    def children(self, name: str) -> list[Topic]:
        key = topic_key(name)
        return [t for t in self if t.parent is not None and topic_key(t.parent) == key]

    @property
    def pillars(self) -> list[Topic]:
        return self.by_type(TopicType.PILLAR)

    def broad_for_pillar(self, pillar: str) -> list[Topic]:
        """Broad topics a concept aligned with ``pillar`` may relate to."""
        code = pillar_code(self[pillar].name)
        return [t for t in self.by_type(TopicType.BROAD) if code in t.pillar_scope]

    def counts(self) -> dict[TopicType, int]:
        return {tt: len(self.by_type(tt)) for tt in TopicType}


def pillar_code(pillar_name: str) -> str:
    for code, name in PILLAR_CODES.items():
        if topic_key(name) == topic_key(pillar_name):
            return code
    raise KeyError(pillar_name)


def parse_taxonomy(text: str) -> Taxonomy:
    """Parse the tab-separated taxonomy format.

    Columns are ``name, topic_type, parent (or "-"), pillar_scope``; the scope
    is a comma list of pillar codes (E, S, G) or pillar names.
    """
    topics = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = [c.strip() for c in line.split("\t")]
        if len(cols) != 4:
            raise TaxonomyError(f"expected 4 tab-separated columns, got {len(cols)}", lineno)
        name, ttype, parent, scope = cols
        if not name:
            raise TaxonomyError("empty topic name", lineno)
        try:
            topic_type = TopicType(ttype.lower())
        except ValueError:
            raise TaxonomyError(f"unknown topic type {ttype!r}", lineno) from None
        key = topic_key(name)
        if key in seen:
            raise TaxonomyError(f"duplicate topic name {name!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        codes = set()
        for item in filter(None, (s.strip() for s in scope.split(","))):
            try:
                codes.add(item.upper() if item.upper() in PILLAR_CODES else pillar_code(item))
            except KeyError:
                raise TaxonomyError(f"unknown pillar {item!r} in pillar_scope", lineno) from None
        if not codes:
            raise TaxonomyError("pillar_scope is empty", lineno)
        topics.append(
            Topic(
                name=name,
                topic_type=topic_type,
                parent=None if parent in ("", "-") else parent,
                pillar_scope=frozenset(codes),
            )
        )
    if not topics:
        raise TaxonomyError("taxonomy file contains no topics")
    return Taxonomy(topics)


def load_taxonomy(source: Union[str, Path, None] = None) -> Taxonomy:
    """Load a taxonomy file; ``None`` loads the bundled ESG taxonomy."""
    if source is None:
        text = resources.files("esgkb.data").joinpath("taxonomy.tsv").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_taxonomy(text)
