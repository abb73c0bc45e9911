"""Exact and flexible detection of knowledge-base concepts in report text."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, Union

import simplemma
from sklearn.base import BaseEstimator

from .kb import KnowledgeBase
from .taxonomy import Concept

EXACT = "exact"
FLEXIBLE = "flexible"
LEMMA = "lemma"
SURFACE = "surface"

_SENTENCE_END = re.compile(r"[.!?]+")
_WORD = re.compile(r"[^\W_]+(?:['’-][^\W_]+)*")


@lru_cache(maxsize=65536)
def lemmatize(word: str) -> str:
    """Lowercased dictionary lemma of a single word."""
    word = word.lower()
    return simplemma.lemmatize(word, lang="en").lower()


@dataclass(frozen=True)
class Sentence:
    lemmas: tuple[str, ...]
    surface: tuple[str, ...]
    offsets: tuple[tuple[int, int], ...]

    def tokens(self, level: str = LEMMA) -> tuple[str, ...]:
        return self.lemmas if level == LEMMA else self.surface


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...] = ()


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)


def tokenize_report(text: str, doc_id: str = "doc") -> Document:
    """Split on terminal punctuation, drop punctuation, lowercase and lemmatize.

    Offsets are character positions of each token in ``text``. Sentences that
    contain no word tokens are dropped before ids are assigned.
    """
    sentences = []
    start = 0
    bounds = [m.end() for m in _SENTENCE_END.finditer(text)]
    if not bounds or bounds[-1] != len(text):
        bounds.append(len(text))
    for end in bounds:
        words = [(m.group(0), m.start() + start, m.end() + start) for m in _WORD.finditer(text[start:end])]
        start = end
        if not words:
            continue
        surface = tuple(w.lower() for w, _, _ in words)
        sentences.append(
            Sentence(
                lemmas=tuple(lemmatize(w) for w, _, _ in words),
                surface=surface,
                offsets=tuple((s, e) for _, s, e in words),
            )
        )
    return Document(doc_id, tuple(sentences))


def read_corpus(paths: Union[str, Path, Iterable[Union[str, Path]]]) -> Corpus:
    """Load ``.txt`` files (id = file stem) and ``.jsonl`` streams of ``{doc_id, text}``.

    Directories are expanded to their ``.txt`` and ``.jsonl`` files in name order.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(q for q in p.iterdir() if q.suffix in (".txt", ".jsonl")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"corpus input not found: {p}")
    docs = []
    for f in files:
        if f.suffix == ".jsonl":
            with open(f, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        docs.append(tokenize_report(rec["text"], str(rec["doc_id"])))
                    except (ValueError, KeyError, TypeError) as exc:
                        raise ValueError(f"{f}:{lineno}: bad corpus record ({exc})") from None
        else:
            docs.append(tokenize_report(f.read_text(encoding="utf-8"), f.stem))
    seen = set()
    for d in docs:
        if d.doc_id in seen:
            raise ValueError(f"duplicate document id {d.doc_id!r}")
        seen.add(d.doc_id)
    return Corpus(docs)


Span = tuple[int, int]


@dataclass(frozen=True, order=True)
class MatchResult:
    """One concept occurrence. Spans are inclusive token positions.

    Exact matches carry one contiguous span; flexible matches of 3-word
    concepts carry the verb position ``(v, v)`` followed by the noun-phrase span.
    """

    doc_id: str
    sentence_id: int
    spans: tuple[Span, ...]
    concept: Concept
    mode: str

    @property
    def key(self) -> tuple[Concept, str, int]:
        return self.concept, self.doc_id, self.sentence_id

    def span_text(self) -> str:
        return ";".join(f"{a}-{b}" for a, b in self.spans)


def _concepts(kb: Union[KnowledgeBase, Iterable[Concept]]) -> list[Concept]:
    items = kb.concepts if isinstance(kb, KnowledgeBase) else kb
    return sorted(set(items))


def _window_index(concepts: Sequence[Concept], sizes=(2, 3)) -> dict[tuple[str, ...], Concept]:
    return {tuple(c.words): c for c in concepts if c.arity in sizes}


def _exact_doc(doc: Document, index: dict, lengths: Sequence[int], level: str, mode: str) -> list[MatchResult]:
    out = []
    for sid, sent in enumerate(doc.sentences):
        toks = sent.tokens(level)
        for start in range(len(toks)):
            for n in lengths:
                c = index.get(toks[start:start + n]) if start + n <= len(toks) else None
                if c is not None:
                    out.append(MatchResult(doc.doc_id, sid, ((start, start + n - 1),), c, mode))
    return out


def _flexible_doc(doc: Document, index2: dict, np_index: dict, level: str, ordered: bool) -> list[MatchResult]:
    out = _exact_doc(doc, index2, (2,), level, FLEXIBLE)
    for sid, sent in enumerate(doc.sentences):
        toks = sent.tokens(level)
        positions: dict[str, list[int]] = defaultdict(list)
        for i, t in enumerate(toks):
            positions[t].append(i)
        found: dict[Concept, tuple[Span, Span]] = {}
        for start in range(len(toks) - 1):
            for c in np_index.get(toks[start:start + 2], ()):
                if c in found:
                    continue  # earliest noun phrase already paired
                verbs = [v for v in positions.get(c.verb, ()) if v < start or (not ordered and v > start + 1)]
                if verbs:
                    found[c] = ((verbs[0], verbs[0]), (start, start + 1))
        for c, spans in found.items():
            out.append(MatchResult(doc.doc_id, sid, spans, c, FLEXIBLE))
    return out


def _run(corpus: Corpus, fn, n_jobs: int) -> list[MatchResult]:
    if n_jobs > 1 and len(corpus) > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(fn, corpus.documents))
    else:
        parts = [fn(d) for d in corpus.documents]
    order = {d.doc_id: k for k, d in enumerate(corpus.documents)}
    results = [m for part in parts for m in part]
    results.sort(key=lambda m: (order[m.doc_id], m.sentence_id, m.spans, m.concept.text))
    return results


def match_exact(kb, corpus: Corpus, level: str = LEMMA, n_jobs: int = 1) -> list[MatchResult]:
    """Every contiguous occurrence of every concept, in corpus order."""
    index = _window_index(_concepts(kb))
    return _run(corpus, lambda d: _exact_doc(d, index, (2, 3), level, EXACT), n_jobs)


def match_flexible(kb, corpus: Corpus, level: str = LEMMA, ordered: bool = True, n_jobs: int = 1) -> list[MatchResult]:
    """Verb and noun-phrase bigram matched separately within one sentence.

    For 3-word concepts at most one result is produced per sentence, pairing
    the earliest noun-phrase occurrence with the earliest verb before it
    (anywhere outside it when ``ordered`` is false). 2-word concepts are
    matched contiguously as in exact mode.
    """
    concepts = _concepts(kb)
    index2 = _window_index(concepts, (2,))
    np_index: dict[tuple[str, str], list[Concept]] = defaultdict(list)
    for c in concepts:
        if c.arity == 3:
            np_index[tuple(c.words[1:])].append(c)
    return _run(corpus, lambda d: _flexible_doc(d, index2, np_index, level, ordered), n_jobs)


def match(kb, corpus: Corpus, mode: str = EXACT, **kwargs) -> list[MatchResult]:
    if mode == EXACT:
        kwargs.pop("ordered", None)
        return match_exact(kb, corpus, **kwargs)
    if mode == FLEXIBLE:
        return match_flexible(kb, corpus, **kwargs)
    raise ValueError(f"unknown match mode {mode!r}")


def write_matches(matches: Iterable[MatchResult], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in matches:
            fh.write(f"{m.doc_id}\t{m.sentence_id}\t{m.concept.text}\t{m.mode}\t{m.span_text()}\n")


def read_matches(path: Union[str, Path]) -> list[MatchResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated columns")
            doc, sid, concept, mode, span = cols
            spans = tuple(tuple(int(x) for x in s.split("-")) for s in span.split(";"))
            out.append(MatchResult(doc, int(sid), spans, Concept(concept), mode))
    return out


class LexiconMatcher(BaseEstimator):
    """Estimator front end: ``fit`` on concepts (or a KB), ``transform`` a corpus to matches."""

    def __init__(self, mode: str = EXACT, level: str = LEMMA, ordered: bool = True, n_jobs: int = 1):
        self.mode = mode
        self.level = level
        self.ordered = ordered
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.mode not in (EXACT, FLEXIBLE):
            raise ValueError(f"unknown match mode {self.mode!r}")
        if self.level not in (LEMMA, SURFACE):
            raise ValueError(f"unknown match level {self.level!r}")
        self.concepts_ = _concepts(X)
        return self

    def transform(self, corpus: Corpus) -> list[MatchResult]:
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "concepts_")
        if self.mode == EXACT:
            return match_exact(self.concepts_, corpus, self.level, self.n_jobs)
        return match_flexible(self.concepts_, corpus, self.level, self.ordered, self.n_jobs)
