"""Annotator gateway: quality control, pillar and relation-topic labelling, term judging.

Backends return raw text in the fenced ``Input:`` / ``Output:`` (or
``Response:``) format requested by the prompt templates; the gateway parses
it, correlates answers to inputs by their echoed ``Input`` line, retries
once for missing or garbled items, and applies per-task fallbacks.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, Union

import httpx

from .kb import Relation, Triple
from .taxonomy import Concept, Taxonomy, Topic, TopicType, normalize_phrase, topic_key

logger = logging.getLogger(__name__)

REORDER = "reorder"
COHERENCE = "coherence"
PILLAR = "pillar"
RELATION = "relation"
ESG_RELATED = "esg_related"
ESG_ACTION = "esg_action"
TASKS = (REORDER, COHERENCE, PILLAR, RELATION, ESG_RELATED, ESG_ACTION)

OTHERS = "Others"
PILLAR_LABELS = ("Environmental", "Social", "Governance", OTHERS)
NOT_APPLICABLE = "not applicable"


class BackendError(RuntimeError):
    """The backend could not produce a response (network, HTTP status, retries)."""


class ResponseFormatError(ValueError):
    """A response did not follow the fenced Input/Output format."""


def load_template(task: str) -> str:
    return resources.files("esgkb.prompts").joinpath(f"{task}.txt").read_text(encoding="utf-8")


def render_prompt(task: str, phrases: Sequence[str], topics: Optional[Sequence[Topic]] = None,
                  definitions: Optional[dict[str, str]] = None, template: Optional[str] = None) -> str:
    template = template if template is not None else load_template(task)
    topic_lines = ""
    if topics:
        definitions = {topic_key(k): v for k, v in (definitions or {}).items()}
        lines = []
        for t in topics:
            desc = definitions.get(t.key)
            lines.append(f"{t.name}: {desc}" if desc else t.name)
        topic_lines = "\n".join(lines)
    return template.format(phrases="\n".join(phrases), topics=topic_lines)


# ------------------------------------------------------------------ parsing

_FENCE = re.compile(r"```[^\n`]*\n?(.*?)```", re.S)
_INPUT = re.compile(r"^\s*Input\s*:\s*(.*?)\s*$", re.I)
_ANSWER = re.compile(r"^\s*(?:Output|Response)\s*:\s*(.*?)\s*$", re.I)


def parse_fenced(text: str) -> dict[str, str]:
    """Map normalized input phrase to raw answer text from a fenced response."""
    if not text:
        raise ResponseFormatError("empty response")
    blocks = _FENCE.findall(text)
    if not blocks:
        raise ResponseFormatError("no triple-backtick block in response")
    out: dict[str, str] = {}
    current: Optional[str] = None
    for line in "\n".join(blocks).splitlines():
        m = _INPUT.match(line)
        if m:
            current = normalize_phrase(m.group(1))
            continue
        m = _ANSWER.match(line)
        if m and current is not None:
            out[current] = m.group(1)
            current = None
    if not out:
        raise ResponseFormatError("no Input/Output pairs in response")
    return out


_TUPLE = re.compile(r"^\(?\s*['\"]?([A-Za-z_ ]+?)['\"]?\s*,\s*['\"]?(.+?)['\"]?\s*\)?\.?$")


def parse_relation(answer: str) -> Optional[tuple[Relation, str]]:
    """``"(supports, Topic)"`` to ``(Relation.SUPPORTS, "Topic")``; ``None`` for not applicable."""
    text = answer.strip().strip("`").strip()
    if normalize_phrase(text.strip("'\".")) in ("not applicable", "not_applicable", "n/a"):
        return None
    m = _TUPLE.match(text)
    if not m:
        raise ResponseFormatError(f"unparseable relation answer {answer!r}")
    relation = Relation.parse(m.group(1))
    if relation is Relation.ALIGNS_WITH:
        raise ResponseFormatError("aligns_with is not a relation-topic answer")
    return relation, m.group(2).strip()


def _parse_bool(answer: str) -> bool:
    a = answer.strip().strip("'\"`.").lower()
    if a in ("true", "yes"):
        return True
    if a in ("false", "no"):
        return False
    raise ResponseFormatError(f"expected True/False, got {answer!r}")


# ------------------------------------------------------------------ backends


class AnnotatorBackend(Protocol):
    kind: str

    def respond(self, task: str, phrases: Sequence[str], topics: Optional[Sequence[Topic]] = None) -> str:
        """Raw response text for one batch."""


def _fence(pairs: Iterable[tuple[str, str]], key: str = "Output") -> str:
    body = "\n".join(f"Input: {p}\n{key}: {a}" for p, a in pairs)
    return f"```\n{body}\n```"


class MockBackend:
    """Deterministic fixture-table annotator.

    The table (JSON) has ``vocabulary``, ``reorder``, ``labels``, ``keywords``
    and ``judgments`` sections. A phrase's label is its entry in ``labels``,
    else the entry of its first word found in ``keywords``; phrases with
    neither are Others. A phrase is coherent when all its words are known.
    """

    kind = "mock"

    def __init__(self, fixture: Union[str, Path, dict, None] = None):
        if fixture is None:
            data = json.loads(resources.files("esgkb.data").joinpath("mock_annotator.json").read_text("utf-8"))
        elif isinstance(fixture, dict):
            data = fixture
        else:
            data = json.loads(Path(fixture).read_text(encoding="utf-8"))
        self.reorder_map = {normalize_phrase(k): normalize_phrase(v) for k, v in data.get("reorder", {}).items()}
        self.labels = {normalize_phrase(k): v for k, v in data.get("labels", {}).items()}
        self.keywords = {k.lower(): v for k, v in data.get("keywords", {}).items()}
        self.judgments = {normalize_phrase(k): v for k, v in data.get("judgments", {}).items()}
        vocab = {w.lower() for w in data.get("vocabulary", [])}
        vocab.update(self.keywords)
        for phrase in list(self.labels) + list(self.reorder_map.values()):
            vocab.update(phrase.split())
        self.vocabulary = frozenset(vocab)

    def label(self, phrase: str) -> Optional[dict]:
        phrase = normalize_phrase(phrase)
        if phrase in self.labels:
            return self.labels[phrase]
        for word in phrase.split():
            if word in self.keywords:
                return self.keywords[word]
        return None

    def _answer(self, task: str, phrase: str, topics: Optional[Sequence[Topic]]) -> str:
        label = self.label(phrase)
        if task == REORDER:
            return self.reorder_map.get(phrase, phrase)
        if task == COHERENCE:
            return str(all(w in self.vocabulary for w in phrase.split()))
        if task == PILLAR:
            return label["pillar"] if label else OTHERS
        if task == RELATION:
            if not label or not topics:
                return NOT_APPLICABLE
            entry = label.get(topics[0].topic_type.value)
            return f"({entry[0]}, {entry[1]})" if entry else NOT_APPLICABLE
        if task == ESG_RELATED:
            j = self.judgments.get(phrase)
            related = j["esg_related"] if j else bool(label and label.get("pillar") != OTHERS)
            return "ESG" if related else "non-ESG"
        if task == ESG_ACTION:
            j = self.judgments.get(phrase)
            if j:
                return str(bool(j["action_oriented"]))
            levels = ("broad", "sub", "cross-broad", "cross-sub")
            return str(bool(label) and any(label.get(lv, [None])[0] == "supports" for lv in levels))
        raise ValueError(f"unknown task {task!r}")

    def respond(self, task: str, phrases: Sequence[str], topics: Optional[Sequence[Topic]] = None) -> str:
        key = "Output" if task in (REORDER, COHERENCE) else "Response"
        return _fence(((p, self._answer(task, normalize_phrase(p), topics)) for p in phrases), key)


@dataclass
class RemoteConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    definitions: dict[str, str] = field(default_factory=dict)
    few_shot: dict[str, list[dict]] = field(default_factory=dict)


class RemoteBackend:
    """Chat-completion client speaking the common JSON-over-HTTPS protocol.

    Transport errors, timeouts, HTTP 429 and 5xx are retried with
    exponential backoff up to ``max_retries`` times, then raise
    :class:`BackendError`. ``few_shot`` maps a task to extra chat messages
    placed before the prompt.
    """

    kind = "remote"

    def __init__(self, config: Optional[RemoteConfig] = None, client: Optional[httpx.Client] = None,
                 templates: Optional[dict[str, str]] = None):
        self.config = config or RemoteConfig()
        self.client = client or httpx.Client(timeout=self.config.timeout)
        self.templates = {t: load_template(t) for t in TASKS}
        self.templates.update(templates or {})

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.config.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def respond(self, task: str, phrases: Sequence[str], topics: Optional[Sequence[Topic]] = None) -> str:
        prompt = render_prompt(task, phrases, topics, self.config.definitions, self.templates[task])
        messages = list(self.config.few_shot.get(task, [])) + [{"role": "user", "content": prompt}]
        payload = {"model": self.config.model, "messages": messages, "temperature": 0}
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = self._headers()
        last: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self.client.post(url, json=payload, headers=headers, timeout=self.config.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise BackendError(f"HTTP {resp.status_code}")
                if resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (httpx.TransportError, BackendError) as exc:
                last = exc
                if isinstance(exc, BackendError) and "HTTP 4" in str(exc) and "HTTP 429" not in str(exc):
                    break
                if attempt < self.config.max_retries:
                    time.sleep(self.config.backoff * (2 ** attempt))
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed completion payload: {exc}") from None
        raise BackendError(f"{task}: request failed after retries ({last})")


# ------------------------------------------------------------------ cache


class AnnotationCache:
    """Append-only JSON Lines store of parsed answers.

    Records are ``{concept, task, response, timestamp}``; ``task`` carries a
    hash of the prompt template and candidate topics so edited prompts do not
    reuse stale answers.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str], str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._data[(rec["concept"], rec["task"])] = rec["response"]

    def get(self, concept: str, task: str) -> Optional[str]:
        return self._data.get((concept, task))

    def put(self, concept: str, task: str, response: str) -> None:
        with self._lock:
            if self._data.get((concept, task)) == response:
                return
            self._data[(concept, task)] = response
            with open(self.path, "a", encoding="utf-8") as fh:
                rec = {"concept": concept, "task": task, "response": response, "timestamp": time.time()}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ------------------------------------------------------------------ gateway


@dataclass
class SeedAnnotation:
    """Labels for one seed. ``relations`` maps each topic level that was asked
    to its ``(relation, topic)`` answer, or ``None`` for not applicable."""

    concept: Concept
    pillar: str
    relations: dict[TopicType, Optional[tuple[Relation, str]]] = field(default_factory=dict)

    def triples(self) -> list[Triple]:
        if self.pillar == OTHERS:
            return []
        out = [Triple(self.concept, Relation.ALIGNS_WITH, self.pillar)]
        for level in (TopicType.BROAD, TopicType.SUB, TopicType.CROSS_BROAD, TopicType.CROSS_SUB):
            answer = self.relations.get(level)
            if answer is not None:
                out.append(Triple(self.concept, answer[0], answer[1]))
        return out


class Annotator:
    """Batched, cached, concurrent front end over an :class:`AnnotatorBackend`."""

    def __init__(self, backend: AnnotatorBackend, taxonomy: Optional[Taxonomy] = None, batch_size: int = 20,
                 max_concurrency: int = 4, cache: Optional[AnnotationCache] = None):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.backend = backend
        self.taxonomy = taxonomy
        self.batch_size = batch_size
        self.max_concurrency = max(1, max_concurrency)
        self.cache = cache
        self.incidents: Counter = Counter()

    # -- plumbing

    def _task_key(self, task: str, topics: Optional[Sequence[Topic]]) -> str:
        templates = getattr(self.backend, "templates", None)
        template = templates[task] if templates else load_template(task)
        h = hashlib.sha256(template.encode("utf-8"))
        for t in topics or ():
            h.update(b"\0" + t.name.encode("utf-8"))
        return f"{task}:{h.hexdigest()[:12]}"

    def _call(self, task: str, batch: list[str], topics) -> dict[str, str]:
        try:
            return parse_fenced(self.backend.respond(task, batch, topics))
        except ResponseFormatError as exc:
            logger.warning("%s: format violation (%s)", task, exc)
            self.incidents["format"] += 1
        except BackendError as exc:
            logger.warning("%s: backend error (%s)", task, exc)
            self.incidents["backend"] += 1
        return {}

    def _run(self, task: str, phrases: Sequence[str], topics: Optional[Sequence[Topic]] = None,
             validate=None) -> dict[str, Optional[str]]:
        """Raw answers per phrase, ``None`` where the backend never answered validly."""
        key = self._task_key(task, topics)
        answers: dict[str, Optional[str]] = {}
        todo = []
        for p in dict.fromkeys(phrases):
            cached = self.cache.get(p, key) if self.cache else None
            if cached is not None:
                answers[p] = cached
            else:
                todo.append(p)

        def accept(batch_answers: dict[str, str], batch: list[str]) -> list[str]:
            missing = []
            for p in batch:
                a = batch_answers.get(p)
                if a is not None and validate is not None:
                    try:
                        validate(p, a)
                    except (ResponseFormatError, ValueError):
                        a = None
                if a is None:
                    missing.append(p)
                else:
                    answers[p] = a
            return missing

        for attempt in range(2):  # first pass, then one repair pass for missing items
            if not todo:
                break
            batches = [todo[i:i + self.batch_size] for i in range(0, len(todo), self.batch_size)]
            if self.max_concurrency > 1 and len(batches) > 1:
                with ThreadPoolExecutor(self.max_concurrency) as pool:
                    results = list(pool.map(lambda b: self._call(task, b, topics), batches))
            else:
                results = [self._call(task, b, topics) for b in batches]
            todo = [p for b, r in zip(batches, results) for p in accept(r, b)]
            if todo and attempt == 0:
                logger.info("%s: retrying %d unanswered item(s)", task, len(todo))
        for p in todo:
            answers[p] = None
        if self.cache:
            for p, a in answers.items():
                if a is not None:
                    self.cache.put(p, key, a)
        return answers

    @staticmethod
    def _texts(concepts: Iterable[Union[Concept, str]]) -> list[str]:
        return [c.text if isinstance(c, Concept) else normalize_phrase(c) for c in concepts]

    # -- quality control

    def reorder(self, concepts: Sequence[Union[Concept, str]]) -> list[Concept]:
        """Possibly reordered concepts; answers that change the word multiset are rejected."""
        texts = self._texts(concepts)
        raw = self._run(REORDER, texts)
        out = []
        for text in texts:
            answer = raw.get(text)
            candidate = normalize_phrase(answer) if answer else text
            if Counter(candidate.split()) != Counter(text.split()):
                logger.warning("reorder: %r -> %r changes words, original kept", text, answer)
                self.incidents["reorder_rejected"] += 1
                candidate = text
            out.append(Concept(candidate))
        return out

    def coherence(self, concepts: Sequence[Union[Concept, str]]) -> list[Optional[bool]]:
        """True/False per concept, ``None`` when undecided (caller should exclude it)."""
        texts = self._texts(concepts)
        raw = self._run(COHERENCE, texts, validate=lambda p, a: _parse_bool(a))
        out = []
        for text in texts:
            if raw.get(text) is None:
                logger.warning("coherence: no decision for %r, excluded", text)
                self.incidents["undecided"] += 1
                out.append(None)
            else:
                out.append(_parse_bool(raw[text]))
        return out

    def quality_control(self, concepts: Sequence[Union[Concept, str]]) -> list[Concept]:
        """Reorder, then keep the concepts judged intelligible (order kept, duplicates merged)."""
        reordered = self.reorder(concepts)
        verdicts = self.coherence(reordered)
        return list(dict.fromkeys(c for c, ok in zip(reordered, verdicts) if ok))

    # -- labelling

    def classify_pillar(self, concepts: Sequence[Union[Concept, str]]) -> list[str]:
        texts = self._texts(concepts)
        raw = self._run(PILLAR, texts, validate=lambda p, a: _pillar_label(a))
        out = []
        for text in texts:
            label = _pillar_label(raw[text]) if raw.get(text) is not None else None
            if label is None:
                logger.warning("pillar: no usable answer for %r, using Others", text)
                label = OTHERS
            out.append(label)
        return out

    def classify_relation_topic(self, concepts: Sequence[Union[Concept, str]],
                                candidate_topics: Sequence[Topic]) -> list[Optional[tuple[Relation, str]]]:
        """``(relation, topic)`` per concept or ``None`` for not applicable."""
        candidates = list(candidate_topics)
        if not candidates:
            return [None] * len(concepts)
        if len({t.topic_type for t in candidates}) != 1:
            raise ValueError("candidate topics must share one topic type")
        by_key = {t.key: t for t in candidates}
        texts = self._texts(concepts)
        raw = self._run(RELATION, texts, candidates, validate=lambda p, a: parse_relation(a))
        out: list[Optional[tuple[Relation, str]]] = []
        for text in texts:
            answer = raw.get(text)
            parsed = parse_relation(answer) if answer is not None else None
            if parsed is not None:
                topic = by_key.get(topic_key(parsed[1]))
                if topic is None:
                    logger.warning("relation: %r answered topic %r outside candidates", text, parsed[1])
                    self.incidents["topic_outside"] += 1
                    parsed = None
                else:
                    parsed = (parsed[0], topic.name)
            out.append(parsed)
        return out

    def annotate_seed(self, concept: Union[Concept, str], taxonomy: Optional[Taxonomy] = None) -> SeedAnnotation:
        return self.annotate_seeds([concept], taxonomy)[0]

    def annotate_seeds(self, concepts: Sequence[Union[Concept, str]],
                       taxonomy: Optional[Taxonomy] = None) -> list[SeedAnnotation]:
        """Label seeds level by level, each level conditioned on the previous answer.

        Pillar first (Others ends the flow); then broad topics of that pillar,
        plus cross-broad topics for Environmental; then sub (cross-sub) topics
        under the chosen broad (cross-broad) topic.
        """
        tax = taxonomy or self.taxonomy
        if tax is None:
            raise ValueError("a taxonomy is required for seed annotation")
        concepts = [c if isinstance(c, Concept) else Concept(c) for c in concepts]
        pillars = self.classify_pillar(concepts)
        results = [SeedAnnotation(c, p) for c, p in zip(concepts, pillars)]

        def ask(level: TopicType, groups: dict[str, list[int]], candidates_for) -> None:
            for group_key, idxs in sorted(groups.items()):
                cands = candidates_for(group_key)
                if not cands:
                    continue
                answers = self.classify_relation_topic([concepts[i] for i in idxs], cands)
                for i, a in zip(idxs, answers):
                    results[i].relations[level] = a

        by_pillar: dict[str, list[int]] = defaultdict(list)
        for i, r in enumerate(results):
            if r.pillar != OTHERS:
                by_pillar[r.pillar].append(i)
        ask(TopicType.BROAD, by_pillar, tax.broad_for_pillar)
        env = {"Environmental": by_pillar.get("Environmental", [])}
        ask(TopicType.CROSS_BROAD, env, lambda _: tax.by_type(TopicType.CROSS_BROAD))

        for parent_level, child_level in ((TopicType.BROAD, TopicType.SUB), (TopicType.CROSS_BROAD, TopicType.CROSS_SUB)):
            by_parent: dict[str, list[int]] = defaultdict(list)
            for i, r in enumerate(results):
                answer = r.relations.get(parent_level)
                if answer is not None:
                    by_parent[answer[1]].append(i)
            ask(child_level, by_parent, tax.children)
        return results

    # -- judging

    def judge(self, terms: Sequence[str], judge_id: str = "annotator") -> list:
        """ESG-relatedness and action-orientation judgments per term."""
        from .metrics import Judgment

        texts = self._texts(terms)
        rel = self._run(ESG_RELATED, texts, validate=lambda p, a: _esg_label(a))
        act = self._run(ESG_ACTION, texts, validate=lambda p, a: _parse_bool(a))
        out = []
        for t in texts:
            if rel.get(t) is None or act.get(t) is None:
                logger.warning("judge: no verdict for %r, skipped", t)
                continue
            out.append(Judgment(t, _esg_label(rel[t]), _parse_bool(act[t]), judge_id))
        return out


def _pillar_label(answer: str) -> Optional[str]:
    a = answer.strip().strip("'\"`.").lower()
    for label in PILLAR_LABELS:
        if a == label.lower():
            return label
    raise ResponseFormatError(f"not a pillar label: {answer!r}")


def _esg_label(answer: str) -> bool:
    a = answer.strip().strip("'\"`.").lower().replace("_", "-")
    if a == "esg":
        return True
    if a in ("non-esg", "non esg", "nonesg"):
        return False
    raise ResponseFormatError(f"expected ESG or non-ESG, got {answer!r}")


def make_backend(kind: str = "mock", fixture: Union[str, Path, None] = None,
                 remote: Optional[RemoteConfig] = None) -> AnnotatorBackend:
    if kind == "mock":
        return MockBackend(fixture)
    if kind == "remote":
        return RemoteBackend(remote)
    raise ValueError(f"unknown backend {kind!r}")
