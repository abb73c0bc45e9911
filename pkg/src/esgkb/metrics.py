"""ESG topic-term metrics from judge labels, and agreement between judges."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .matcher import MatchResult
from .taxonomy import Concept, normalize_phrase

_TRUE = {"true", "1", "yes", "t", "y"}
_FALSE = {"false", "0", "no", "f", "n"}


@dataclass(frozen=True)
class Judgment:
    term: str
    esg_related: bool
    action_oriented: bool
    judge: str = "judge"

    def __post_init__(self):
        object.__setattr__(self, "term", normalize_phrase(self.term))


@dataclass(frozen=True)
class Metrics:
    esg_unique: int
    esg_rel: float
    esg_act: float
    n_terms: int

    def as_tuple(self) -> tuple[int, float, float]:
        return self.esg_unique, self.esg_rel, self.esg_act


def _parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"{where}: expected a boolean, got {text!r}")


def read_judgments(path: Union[str, Path]) -> list[Judgment]:
    """Read ``term<TAB>esg_related<TAB>action_oriented<TAB>judge`` rows."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated columns")
            where = f"{path}:{lineno}"
            j = Judgment(cols[0], _parse_bool(cols[1], where), _parse_bool(cols[2], where), cols[3])
            if (j.term, j.judge) in seen:
                raise ValueError(f"{where}: second judgment of {j.term!r} by {j.judge!r}")
            seen.add((j.term, j.judge))
            out.append(j)
    return out


def write_judgments(judgments: Iterable[Judgment], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for j in sorted(judgments, key=lambda j: (j.judge, j.term)):
            fh.write(f"{j.term}\t{str(j.esg_related).lower()}\t{str(j.action_oriented).lower()}\t{j.judge}\n")


def collect_topic_terms(items: Iterable[Union[MatchResult, Concept, str]]) -> set[str]:
    """Unique normalized terms from matches, concepts or raw term strings."""
    out = set()
    for item in items:
        if isinstance(item, MatchResult):
            out.add(item.concept.text)
        elif isinstance(item, Concept):
            out.add(item.text)
        else:
            term = normalize_phrase(item)
            if term:
                out.add(term)
    return out


def _by_term(judgments: Iterable[Judgment], judge: Optional[str]) -> dict[str, Judgment]:
    table: dict[str, Judgment] = {}
    for j in judgments:
        if judge is not None and j.judge != judge:
            continue
        if j.term in table:
            raise ValueError(f"term {j.term!r} judged more than once; select one judge")
        table[j.term] = j
    return table


def aggregate_metrics(terms: Iterable[str], judgments: Iterable[Judgment], judge: Optional[str] = None) -> Metrics:
    """Number of ESG-related terms and the ESG-related and action-oriented shares."""
    terms = collect_topic_terms(terms)
    if not terms:
        raise ValueError("no topic terms: proportions are undefined")
    table = _by_term(judgments, judge)
    missing = sorted(terms - table.keys())
    if missing:
        raise ValueError(f"{len(missing)} term(s) without a judgment: {missing[:20]}")
    rel = sum(table[t].esg_related for t in terms)
    act = sum(table[t].action_oriented for t in terms)
    return Metrics(rel, rel / len(terms), act / len(terms), len(terms))


def agreement(judgments_a: Iterable[Judgment], judgments_b: Iterable[Judgment]) -> dict[str, float]:
    """Percentage of terms on which two judges give the same label, per task."""
    a = _by_term(judgments_a, None)
    b = _by_term(judgments_b, None)
    if a.keys() != b.keys():
        diff = sorted(a.keys() ^ b.keys())
        raise ValueError(f"judgment sets cover different terms: {diff[:20]}")
    if not a:
        raise ValueError("no judgments to compare")
    n = len(a)
    return {
        "esg_related": 100.0 * sum(a[t].esg_related == b[t].esg_related for t in a) / n,
        "action_oriented": 100.0 * sum(a[t].action_oriented == b[t].action_oriented for t in a) / n,
    }
