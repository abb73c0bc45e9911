import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esgkb.graph import (
    EmbeddingTable,
    SemanticGraph,
    SimilarityGraph,
    build_graph,
    cosine,
    load_embeddings,
    read_graph,
    write_graph,
)
from esgkb.taxonomy import Concept
from oracles import brute_force_edges


def test_random_embeddings_match_brute_force():
    X = np.random.default_rng(7).normal(size=(500, 4))
    g = build_graph(X, 0.80)
    oracle = brute_force_edges(X, 0.80)
    assert g.n_edges > 1000
    assert g.edge_set() == set(oracle)
    for i, j, w in g.edges():
        assert abs(w - oracle[(i, j)]) < 1e-9


def test_exact_threshold_pair_excluded():
    X = np.array([[1.0, 0.0], [4.0, 3.0]])
    assert cosine(X[0], X[1]) == 0.8
    assert build_graph(X, 0.80).n_edges == 0
    assert build_graph(X, 0.79).n_edges == 1


def test_worked_cosine():
    assert cosine([1, 0], [1, 1]) == pytest.approx(0.7071067812, abs=1e-10)
    with pytest.raises(ValueError):
        cosine([0, 0], [1, 1])


@pytest.mark.parametrize("block_size,n_jobs", [(1, 1), (7, 3), (64, 2), (1000, 4)])
def test_block_size_and_threads_do_not_change_output(block_size, n_jobs):
    X = np.random.default_rng(3).normal(size=(150, 3))
    ref = build_graph(X, 0.8)
    g = build_graph(X, 0.8, block_size=block_size, n_jobs=n_jobs)
    assert np.array_equal(g.rows, ref.rows)
    assert np.array_equal(g.cols, ref.cols)
    assert np.array_equal(g.weights, ref.weights)


def test_graph_structure_checks():
    with pytest.raises(ValueError, match="self-loop"):
        SemanticGraph.from_edges(3, [(1, 1, 0.9)])
    with pytest.raises(ValueError, match="duplicate"):
        SemanticGraph.from_edges(3, [(0, 1, 0.9), (1, 0, 0.9)])
    with pytest.raises(ValueError, match="range"):
        SemanticGraph.from_edges(2, [(0, 2, 0.9)])
    g = SemanticGraph.from_edges(4, [(2, 0, 0.9), (1, 2, 0.85)])
    assert g.edges() == [(0, 2, 0.9), (1, 2, 0.85)]
    assert list(g.neighbors(2)) == [0, 1]
    assert g.has_edge(2, 0) and not g.has_edge(0, 1)
    assert list(g.degree()) == [1, 1, 2, 0]
    adj = g.adjacency().toarray()
    assert np.array_equal(adj, adj.T)


def test_embedding_table_checks():
    cs = [Concept("cut waste"), Concept("cut cost")]
    with pytest.raises(ValueError, match="duplicate"):
        EmbeddingTable([cs[0], cs[0]], np.ones((2, 2)))
    with pytest.raises(ValueError):
        EmbeddingTable(cs, np.ones((3, 2)))
    with pytest.raises(ValueError):
        EmbeddingTable(cs, np.array([[1.0, np.nan], [1.0, 1.0]]))


def test_graph_file_round_trip(tmp_path, fixtures):
    table = load_embeddings(fixtures / "embeddings.jsonl")
    g = build_graph(table)
    write_graph(g, table.concepts, tmp_path / "e.tsv", tmp_path / "n.tsv")
    g2, concepts = read_graph(tmp_path / "e.tsv", tmp_path / "n.tsv")
    assert concepts == table.concepts
    assert g2.edges() == g.edges()


def test_estimator_returns_adjacency():
    X = np.random.default_rng(0).normal(size=(40, 3))
    adj = SimilarityGraph(threshold=0.9).fit(X).transform(X)
    assert adj.shape == (40, 40)
    assert adj.nnz == 2 * build_graph(X, 0.9).n_edges


vectors = st.lists(
    st.lists(st.integers(-5, 5), min_size=3, max_size=3).filter(any), min_size=2, max_size=25
)


@settings(max_examples=100, deadline=None)
@given(vectors, st.sampled_from([0.0, 0.5, 0.8, 0.95]))
def test_small_integer_embeddings(rows, threshold):
    X = np.array(rows, dtype=float)
    g = build_graph(X, threshold, block_size=4)
    oracle = brute_force_edges(X, threshold)
    assert g.edge_set() == set(oracle)
