import pytest
from hypothesis import given, settings, strategies as st

from esgkb.kb import load_kb
from esgkb.matcher import (
    EXACT,
    FLEXIBLE,
    SURFACE,
    Corpus,
    Document,
    LexiconMatcher,
    Sentence,
    match,
    match_exact,
    match_flexible,
    read_corpus,
    read_matches,
    tokenize_report,
    write_matches,
)
from esgkb.taxonomy import Concept


@pytest.fixture(scope="module")
def kb(fixtures, taxonomy):
    return load_kb(fixtures / "kb_fixture.tsv", taxonomy)


@pytest.fixture(scope="module")
def corpus(fixtures):
    return read_corpus(fixtures / "reports")


def _doc(*sentences, doc_id="d"):
    return Corpus([Document(doc_id, tuple(Sentence(tuple(s), tuple(s), ()) for s in sentences))])


def test_tokenize_examples():
    doc = tokenize_report("We reduce our water consumption.", "r")
    assert len(doc.sentences) == 1
    assert doc.sentences[0].surface == ("we", "reduce", "our", "water", "consumption")
    assert tokenize_report("").sentences == ()
    two = tokenize_report("Emissions fell. We halve carbon emissions!")
    assert len(two.sentences) == 2
    assert two.sentences[1].lemmas == ("we", "halve", "carbon", "emission")
    s = tokenize_report("We cut waste.").sentences[0]
    assert s.offsets == ((0, 2), (3, 6), (7, 12))


def test_exact_examples():
    concepts = [Concept("halve carbon emission")]
    hits = match_exact(concepts, _doc(["we", "will", "halve", "carbon", "emission"]))
    assert [m.spans for m in hits] == [((2, 4),)]
    assert match_exact(concepts, _doc(["carbon", "emission", "will", "halve"])) == []
    twice = _doc(["halve", "carbon", "emission", "and", "halve", "carbon", "emission"])
    assert len(match_exact(concepts, twice)) == 2


def test_flexible_examples():
    concepts = [Concept("reduce water consumption")]
    sent = ["we", "reduce", "our", "water", "consumption"]
    assert match_exact(concepts, _doc(sent)) == []
    hits = match_flexible(concepts, _doc(sent))
    assert [(m.spans, m.mode) for m in hits] == [(((1, 1), (3, 4)), FLEXIBLE)]


def test_flexible_order_option():
    concepts = [Concept("halve carbon emission")]
    sent = ["carbon", "emission", "will", "halve"]
    assert match_flexible(concepts, _doc(sent)) == []
    hits = match_flexible(concepts, _doc(sent), ordered=False)
    assert [m.spans for m in hits] == [((3, 3), (0, 1))]


def test_two_word_concepts_match_contiguously_in_flexible_mode():
    hits = match_flexible([Concept("cut waste")], _doc(["cut", "the", "waste", "and", "cut", "waste"]))
    assert [(m.spans, m.mode) for m in hits] == [(((4, 5),), FLEXIBLE)]


def test_separated_verb_matches_flexible_only(kb):
    corpus = Corpus([tokenize_report("We reduce our water consumption.", "r")])
    target = Concept("reduce water consumption")
    assert not [m for m in match(kb, corpus, EXACT) if m.concept == target]
    assert [m for m in match(kb, corpus, FLEXIBLE) if m.concept == target]


@pytest.mark.parametrize("mode", [EXACT, FLEXIBLE])
def test_golden_files(tmp_path, fixtures, kb, corpus, mode):
    out = tmp_path / "m.tsv"
    write_matches(match(kb, corpus, mode), out)
    assert out.read_bytes() == (fixtures / f"golden_matches_{mode}.tsv").read_bytes()


def test_jsonl_corpus_gives_same_matches(fixtures, kb, corpus):
    jsonl = read_corpus(fixtures / "reports.jsonl")
    assert match(kb, jsonl, FLEXIBLE) == match(kb, corpus, FLEXIBLE)


def test_flexible_covers_exact_for_three_word_concepts(kb, corpus):
    exact = {m.key for m in match(kb, corpus, EXACT) if m.concept.arity == 3}
    flexible = {m.key for m in match(kb, corpus, FLEXIBLE)}
    assert exact <= flexible


def test_match_file_round_trip(tmp_path, kb, corpus):
    ms = match(kb, corpus, FLEXIBLE)
    write_matches(ms, tmp_path / "m.tsv")
    assert read_matches(tmp_path / "m.tsv") == ms


def test_threads_do_not_change_results(kb, corpus):
    assert match_exact(kb, corpus, n_jobs=3) == match_exact(kb, corpus)
    assert match_flexible(kb, corpus, n_jobs=3) == match_flexible(kb, corpus)


def test_surface_level_needs_inflection_to_agree(kb, corpus):
    lemma_hits = {m.key for m in match_exact(kb, corpus)}
    surface_hits = {m.key for m in match_exact(kb, corpus, level=SURFACE)}
    assert surface_hits < lemma_hits


def test_duplicate_document_ids(tmp_path):
    (tmp_path / "a.txt").write_text("x", encoding="utf-8")
    (tmp_path / "b.jsonl").write_text('{"doc_id": "a", "text": "y"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate"):
        read_corpus(tmp_path)


def test_estimator(kb, corpus):
    est = LexiconMatcher(mode=FLEXIBLE).fit(kb)
    assert est.transform(corpus) == match_flexible(kb, corpus)
    with pytest.raises(ValueError):
        LexiconMatcher(mode="fuzzy").fit(kb)


def _naive_exact(concepts, tokens):
    """Compare every window's joined text with every concept's text."""
    hits = set()
    for c in concepts:
        n = c.arity
        for i in range(len(tokens) - n + 1):
            if " ".join(tokens[i:i + n]) == c.text:
                hits.add((c.text, i, i + n - 1))
    return hits


def _naive_flexible(concepts, tokens):
    hits = {}
    for c in concepts:
        if c.arity != 3:
            continue
        for i in range(len(tokens) - 1):
            if (tokens[i], tokens[i + 1]) == c.words[1:]:
                verbs = [v for v in range(i) if tokens[v] == c.verb]
                if verbs:
                    hits[c.text] = (verbs[0], i)
                    break
    return hits


VOCAB = ["cut", "waste", "plastic", "water", "reduce", "use", "we"]
CONCEPTS = [Concept(t) for t in ["cut waste", "cut plastic waste", "reduce water use", "use water", "reduce waste"]]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(VOCAB), max_size=14))
def test_matches_agree_with_naive_scan(tokens):
    corpus = _doc(tokens)
    exact = {(m.concept.text, m.spans[0][0], m.spans[0][1]) for m in match_exact(CONCEPTS, corpus)}
    assert exact == _naive_exact(CONCEPTS, tokens)
    flex = {m.concept.text: (m.spans[0][0], m.spans[1][0])
            for m in match_flexible(CONCEPTS, corpus) if m.concept.arity == 3}
    assert flex == _naive_flexible(CONCEPTS, tokens)
    flex_keys = {m.key for m in match_flexible(CONCEPTS, corpus)}
    assert {m.key for m in match_exact(CONCEPTS, corpus)} <= flex_keys
