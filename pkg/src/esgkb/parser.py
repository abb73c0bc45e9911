"""Verb-led multiword concept extraction from dependency-parsed sentences."""

from __future__ import annotations

import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import conllu
from sklearn.base import BaseEstimator, TransformerMixin

from .taxonomy import Concept

logger = logging.getLogger(__name__)

VERB_NOUN_DEPS = frozenset({"nsubj", "obj", "obl"})
MODIFIER_DEPS = frozenset({"compound", "amod", "nn", "appos", "flat", "nmod"})
# older (Stanford/spaCy style) labels folded onto the universal ones above
DEP_ALIASES = {"dobj": "obj"}

VERB = "verb"
NOUN = "noun"
ADJ = "adj"

PATTERN_VN = "verb+noun"
PATTERN_VNN = "verb+noun+noun"
PATTERN_VAN = "verb+adj+noun"


@dataclass(frozen=True)
class PosClasses:
    """Mapping from universal (UPOS) or Penn (XPOS) tags to coarse classes.

    UPOS is consulted first; the XPOS prefix table is the fallback for parses
    that only carry Penn tags.
    """

    upos: dict = field(
        default_factory=lambda: {"VERB": VERB, "NOUN": NOUN, "PROPN": NOUN, "ADJ": ADJ}
    )
    xpos_prefixes: tuple = (("VB", VERB), ("NN", NOUN), ("JJ", ADJ))

    def classify(self, upos: Optional[str], xpos: Optional[str]) -> Optional[str]:
        if upos and upos in self.upos:
            return self.upos[upos]
        if xpos:
            for prefix, cls in self.xpos_prefixes:
                if xpos.startswith(prefix):
                    return cls
        return None


DEFAULT_POS = PosClasses()


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    lemma: str
    upos: Optional[str]
    xpos: Optional[str]
    head: Optional[int]
    deprel: Optional[str]

    @property
    def base_deprel(self) -> Optional[str]:
        if not self.deprel:
            return None
        base = self.deprel.split(":", 1)[0].lower()
        return DEP_ALIASES.get(base, base)

    @property
    def norm(self) -> str:
        text = self.lemma if self.lemma and self.lemma != "_" else self.form
        return text.lower()


@dataclass
class ParsedSentence:
    tokens: list[Token]
    sent_id: str = "0"
    doc_id: str = "doc"
    text: Optional[str] = None

    def __post_init__(self):
        n = len(self.tokens)
        roots = [t for t in self.tokens if t.head == 0]
        if n and len(roots) != 1:
            raise ValueError(f"sentence {self.sent_id}: expected exactly one root, found {len(roots)}")
        for t in self.tokens:
            if t.head is not None and not 0 <= t.head <= n:
                raise ValueError(f"sentence {self.sent_id}: head {t.head} of token {t.id} out of range")


@dataclass(frozen=True, order=True)
class CandidateConcept:
    concept: Concept
    pattern: str
    source: tuple[str, str]


def _is_malformed(tok: Token) -> bool:
    return (
        (not tok.upos or tok.upos == "_") and (not tok.xpos or tok.xpos == "_")
    ) or not tok.deprel or tok.deprel == "_" or tok.head is None


def parse_concepts(sentence: ParsedSentence, pos: PosClasses = DEFAULT_POS) -> set[CandidateConcept]:
    """Extract verb+noun, verb+noun+noun and verb+adj+noun concepts.

    Verb/noun pairs come from ``nsubj``, ``obj`` and ``obl`` arcs in either
    orientation; each pair is widened with a noun or adjective modifier of
    the noun, inserted between verb and noun.
    """
    by_id: dict[int, Token] = {}
    cls: dict[int, Optional[str]] = {}
    for tok in sentence.tokens:
        if _is_malformed(tok):
            logger.warning(
                "sentence %s/%s: token %d (%r) has malformed tags, skipped",
                sentence.doc_id, sentence.sent_id, tok.id, tok.form,
            )
            continue
        by_id[tok.id] = tok
        cls[tok.id] = pos.classify(tok.upos, tok.xpos)

    pairs: set[tuple[int, int]] = set()
    for tok in by_id.values():
        if tok.base_deprel not in VERB_NOUN_DEPS or tok.head not in by_id:
            continue
        head_cls, dep_cls = cls[tok.head], cls[tok.id]
        if head_cls == VERB and dep_cls == NOUN:
            pairs.add((tok.head, tok.id))
        elif head_cls == NOUN and dep_cls == VERB:
            pairs.add((tok.id, tok.head))

    source = (sentence.doc_id, sentence.sent_id)
    out: set[CandidateConcept] = set()

    def emit(ids: tuple[int, ...], pattern: str) -> None:
        words = [by_id[i].norm for i in ids]
        try:
            concept = Concept.from_words(words)
        except ValueError:
            logger.warning("sentence %s/%s: cannot form concept from %r", *source, words)
            return
        if concept.arity != len(ids):
            logger.warning("sentence %s/%s: lemma with whitespace in %r, skipped", *source, words)
            return
        out.add(CandidateConcept(concept, pattern, source))

    for verb_id, noun_id in sorted(pairs):
        emit((verb_id, noun_id), PATTERN_VN)
        for dep in by_id.values():
            if dep.head != noun_id or dep.base_deprel not in MODIFIER_DEPS:
                continue
            if cls[dep.id] == NOUN:
                emit((verb_id, dep.id, noun_id), PATTERN_VNN)
            elif cls[dep.id] == ADJ:
                emit((verb_id, dep.id, noun_id), PATTERN_VAN)
    return out


def count_and_filter(candidates: Iterable[Union[CandidateConcept, Concept]], k: int) -> list[tuple[Concept, int]]:
    """Top-``k`` concepts by frequency, ties broken by ascending text."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts: Counter = Counter()
    for c in candidates:
        counts[c.concept if isinstance(c, CandidateConcept) else c] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].text))
    return ranked[:k]


# ---------------------------------------------------------------------- CoNLL-U


def _opt(value) -> Optional[str]:
    if value is None or value == "_":
        return None
    return str(value)


def _to_sentence(tl: conllu.TokenList, doc_id: str, index: int) -> ParsedSentence:
    tokens = []
    for t in tl:
        if not isinstance(t["id"], int):
            continue  # multiword ranges and empty nodes
        head = t.get("head")
        tokens.append(
            Token(
                id=t["id"],
                form=t["form"] or "",
                lemma=t.get("lemma") or "_",
                upos=_opt(t.get("upos")),
                xpos=_opt(t.get("xpos")),
                head=head if isinstance(head, int) else None,
                deprel=_opt(t.get("deprel")),
            )
        )
    meta = tl.metadata
    return ParsedSentence(
        tokens=tokens,
        sent_id=meta.get("sent_id", str(index)),
        doc_id=doc_id,
        text=meta.get("text"),
    )


def iter_conllu(text: str, doc_id: str = "doc") -> Iterator[ParsedSentence]:
    """Yield sentences from CoNLL-U text; ``# newdoc id`` comments switch documents."""
    current = doc_id
    for index, tl in enumerate(conllu.parse_incr(io.StringIO(text))):
        newdoc = tl.metadata.get("newdoc id")
        if newdoc:
            current = newdoc
        yield _to_sentence(tl, current, index)


def read_conllu(paths: Union[str, Path, Iterable[Union[str, Path]]]) -> list[ParsedSentence]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        p = Path(p)
        out.extend(iter_conllu(p.read_text(encoding="utf-8"), doc_id=p.stem))
    return out


def write_ranked(ranked: Iterable[tuple[Concept, int]], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for concept, freq in ranked:
            fh.write(f"{concept.text}\t{freq}\n")


def read_ranked(path: Union[str, Path]) -> list[tuple[Concept, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'concept<TAB>frequency'")
            out.append((Concept(cols[0]), int(cols[1])))
    return out


def write_candidates(candidates: Iterable[CandidateConcept], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in candidates:
            fh.write(f"{c.source[0]}\t{c.source[1]}\t{c.concept.text}\t{c.pattern}\n")


def read_candidates(path: Union[str, Path]) -> list[CandidateConcept]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc, sent, text, pattern = line.rstrip("\n").split("\t")
            out.append(CandidateConcept(Concept(text), pattern, (doc, sent)))
    return out


class ConceptExtractor(TransformerMixin, BaseEstimator):
    """Learn a frequency-ranked concept vocabulary from parsed sentences.

    Parameters
    ----------
    top_k : int, default=110000
        Number of most frequent concepts kept in ``vocabulary_``.
    pos : PosClasses, optional
        Tag-to-class mapping.

    Attributes
    ----------
    vocabulary_ : list of Concept
        Retained concepts, most frequent first.
    frequencies_ : dict
        Concept to corpus frequency for retained concepts.
    """

    def __init__(self, top_k: int = 110000, pos: Optional[PosClasses] = None):
        self.top_k = top_k
        self.pos = pos

    def _extract(self, sentences: Iterable[ParsedSentence]) -> list[set[CandidateConcept]]:
        pos = self.pos or DEFAULT_POS
        return [parse_concepts(s, pos) for s in sentences]

    def fit(self, X: Iterable[ParsedSentence], y=None):
        per_sentence = self._extract(X)
        ranked = count_and_filter((c for s in per_sentence for c in s), self.top_k)
        self.vocabulary_ = [c for c, _ in ranked]
        self.frequencies_ = dict(ranked)
        return self

    def transform(self, X: Iterable[ParsedSentence]) -> list[list[Concept]]:
        """Per sentence, the sorted in-vocabulary concepts it yields."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "vocabulary_")
        vocab = set(self.vocabulary_)
        return [sorted({c.concept for c in s if c.concept in vocab}) for s in self._extract(X)]
