import json

import httpx
import pytest

from esgkb.annotation import (
    COHERENCE,
    OTHERS,
    PILLAR,
    RELATION,
    AnnotationCache,
    Annotator,
    BackendError,
    MockBackend,
    RemoteBackend,
    RemoteConfig,
    ResponseFormatError,
    SeedAnnotation,
    parse_fenced,
    parse_relation,
    render_prompt,
)
from esgkb.kb import Relation
from esgkb.taxonomy import Concept, TopicType


@pytest.fixture
def annotator(taxonomy):
    return Annotator(MockBackend(), taxonomy, batch_size=3, max_concurrency=2)


class ScriptedBackend:
    """Returns a fixed answer per phrase, or raw text for the whole batch."""

    kind = "scripted"

    def __init__(self, answers=None, raw=None):
        self.answers = answers or {}
        self.raw = raw
        self.calls = []

    def respond(self, task, phrases, topics=None):
        self.calls.append((task, list(phrases)))
        if self.raw is not None:
            return self.raw
        body = "\n".join(f"Input: {p}\nOutput: {self.answers[p]}" for p in phrases if p in self.answers)
        return f"```\n{body}\n```"


def test_parse_fenced_and_relation():
    text = "Sure.\n```\nInput: Halve carbon emission\nResponse: (supports, Emissions Control)\n```\n"
    assert parse_fenced(text) == {"halve carbon emission": "(supports, Emissions Control)"}
    with pytest.raises(ResponseFormatError):
        parse_fenced("no code block here")
    assert parse_relation("(undermines, Worker & Consumer Safety)") == (
        Relation.UNDERMINES, "Worker & Consumer Safety")
    assert parse_relation("Not applicable") is None
    with pytest.raises(ResponseFormatError):
        parse_relation("(aligns_with, Social)")


def test_prompt_lists_candidate_topics(taxonomy):
    prompt = render_prompt(RELATION, ["halve carbon emission"], taxonomy.by_type("cross-broad"))
    assert "Emissions Control" in prompt
    assert "halve carbon emission" in prompt


def test_reorder_examples(annotator):
    got = annotator.reorder(["reduce water consumption", "emission carbon halve"])
    assert [c.text for c in got] == ["reduce water consumption", "halve carbon emission"]


def test_reorder_rejects_word_changes(taxonomy):
    ann = Annotator(ScriptedBackend({"emission carbon halve": "cut all emissions"}), taxonomy)
    assert ann.reorder(["emission carbon halve"]) == [Concept("emission carbon halve")]
    assert ann.incidents["reorder_rejected"] == 1


def test_coherence_examples(annotator):
    assert annotator.coherence(["halve carbon emission", "zzqx wvut plomb"]) == [True, False]


def test_quality_control_merges_reordered_duplicates(annotator):
    kept = annotator.quality_control(["emission carbon halve", "halve carbon emission", "zzqx wvut plomb"])
    assert kept == [Concept("halve carbon emission")]


def test_pillar_examples(annotator):
    got = annotator.classify_pillar(["halve carbon emission", "organise charity event", "zzqx wvut plomb"])
    assert got == ["Environmental", "Social", OTHERS]


def test_unparseable_pillar_falls_back_to_others(taxonomy):
    ann = Annotator(ScriptedBackend({"cut waste": "Maybe environmental?"}), taxonomy)
    assert ann.classify_pillar(["cut waste"]) == [OTHERS]


def test_relation_topic_examples(annotator, taxonomy):
    got = annotator.classify_relation_topic(["halve carbon emission"], taxonomy.by_type(TopicType.CROSS_BROAD))
    assert got == [(Relation.SUPPORTS, "Emissions Control")]
    got = annotator.classify_relation_topic(["involve workplace injury"], taxonomy.children("Compliance"))
    assert got == [(Relation.UNDERMINES, "Worker & Consumer Safety")]
    got = annotator.classify_relation_topic(["zzqx wvut plomb"], taxonomy.children("Compliance"))
    assert got == [None]


def test_topic_outside_candidates_is_not_applicable(taxonomy):
    ann = Annotator(ScriptedBackend({"cut waste": "(supports, Outreach)"}), taxonomy)
    assert ann.classify_relation_topic(["cut waste"], taxonomy.by_type(TopicType.CROSS_BROAD)) == [None]
    assert ann.incidents["topic_outside"] == 1


def test_seed_annotation_flow(annotator):
    halve, charity, junk = annotator.annotate_seeds(
        ["halve carbon emission", "organise charity event", "zzqx wvut plomb"])
    assert halve.pillar == "Environmental"
    assert halve.relations[TopicType.CROSS_BROAD] == (Relation.SUPPORTS, "Emissions Control")
    assert halve.relations[TopicType.CROSS_SUB] == (Relation.SUPPORTS, "Climate Emissions")
    assert charity.pillar == "Social"
    assert charity.relations[TopicType.BROAD] == (Relation.SUPPORTS, "Outreach")
    assert TopicType.CROSS_BROAD not in charity.relations
    assert junk.pillar == OTHERS and junk.relations == {} and junk.triples() == []


def test_seed_triples(annotator, taxonomy):
    from esgkb.kb import KnowledgeBase, validate_triples

    anns = annotator.annotate_seeds(
        ["halve carbon emission", "organise charity event", "involve workplace injury", "build diverse workplace"])
    triples = [t for a in anns for t in a.triples()]
    assert validate_triples(KnowledgeBase(triples, taxonomy), require_pillar=True).ok
    assert SeedAnnotation(Concept("cut waste"), OTHERS).triples() == []


def test_missing_answers_are_retried_once(taxonomy):
    backend = ScriptedBackend({"cut waste": "True"})
    ann = Annotator(backend, taxonomy)
    assert ann.coherence(["cut waste", "cut cost"]) == [True, None]
    assert backend.calls == [(COHERENCE, ["cut waste", "cut cost"]), (COHERENCE, ["cut cost"])]


def test_batching(taxonomy):
    backend = ScriptedBackend({f"cut w{i}": "Environmental" for i in range(7)})
    ann = Annotator(backend, taxonomy, batch_size=3, max_concurrency=1)
    assert ann.classify_pillar([f"cut w{i}" for i in range(7)]) == ["Environmental"] * 7
    assert [len(p) for _, p in backend.calls] == [3, 3, 1]


def test_cache_reuse(tmp_path, taxonomy):
    path = tmp_path / "cache.jsonl"
    backend = ScriptedBackend({"cut waste": "Environmental"})
    Annotator(backend, taxonomy, cache=AnnotationCache(path)).classify_pillar(["cut waste"])
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 1
    assert set(records[0]) == {"concept", "task", "response", "timestamp"}
    assert records[0]["task"].startswith(PILLAR + ":")
    second = ScriptedBackend({})
    assert Annotator(second, taxonomy, cache=AnnotationCache(path)).classify_pillar(["cut waste"]) == ["Environmental"]
    assert second.calls == []


def test_judge_uses_mock_labels(annotator):
    js = annotator.judge(["halve carbon emission", "zzqx wvut plomb"], "mock")
    assert [(j.term, j.esg_related, j.action_oriented) for j in js] == [
        ("halve carbon emission", True, True), ("zzqx wvut plomb", False, False)]


# ---------------------------------------------------------------- remote


def _completion(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _remote(handler, monkeypatch, retries=2):
    monkeypatch.setenv("TEST_KEY", "secret")
    cfg = RemoteConfig(base_url="https://llm.test/v1", api_key_env="TEST_KEY", max_retries=retries, backoff=0.0)
    return RemoteBackend(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_remote_request_shape(monkeypatch, taxonomy):
    seen = []

    def handler(request):
        seen.append(request)
        return _completion("```\nInput: halve carbon emission\nResponse: Environmental\n```")

    ann = Annotator(_remote(handler, monkeypatch), taxonomy)
    assert ann.classify_pillar(["halve carbon emission"]) == ["Environmental"]
    req = seen[0]
    assert req.url == "https://llm.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert body["model"] == "gpt-4o"
    assert "halve carbon emission" in body["messages"][-1]["content"]


def test_remote_retries_transient_errors(monkeypatch):
    statuses = iter([429, 503])

    def handler(request):
        code = next(statuses, 200)
        if code != 200:
            return httpx.Response(code)
        return _completion("```\nInput: a b\nOutput: True\n```")

    assert "True" in _remote(handler, monkeypatch).respond(COHERENCE, ["a b"])


def test_remote_gives_up_after_retries(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("down")

    with pytest.raises(BackendError):
        _remote(handler, monkeypatch, retries=2).respond(COHERENCE, ["a b"])
    assert len(calls) == 3


def test_remote_missing_key(monkeypatch):
    monkeypatch.delenv("NO_SUCH_KEY", raising=False)
    backend = RemoteBackend(RemoteConfig(api_key_env="NO_SUCH_KEY"),
                            client=httpx.Client(transport=httpx.MockTransport(lambda r: _completion(""))))
    with pytest.raises(BackendError, match="NO_SUCH_KEY"):
        backend.respond(COHERENCE, ["a b"])


def test_empty_remote_response_is_undecided(monkeypatch, taxonomy):
    ann = Annotator(_remote(lambda r: _completion(""), monkeypatch), taxonomy)
    assert ann.coherence(["halve carbon emission"]) == [None]
    assert ann.incidents["undecided"] == 1
