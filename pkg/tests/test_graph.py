import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from privcast._validation import ParameterError
from privcast.graph import (
    POOLED,
    DistanceHistogram,
    Graph,
    eccentricities,
    generate_k_growing,
    jordan_center,
    pooled_histogram,
    shortest_path_histogram,
)


def path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges())
    return h


def edge_count(n, k):
    return sum(min(k, j) for j in range(n))


def test_two_nodes_single_edge():
    g = generate_k_growing(2, 3, 0)
    assert g.edges() == [(0, 1)]


def test_k1_is_a_tree():
    g = generate_k_growing(5, 1, 4)
    assert g.n_edges == 4 and g.is_connected()


def test_edge_count_n2000_k6(g2000):
    assert edge_count(2000, 6) == 11979
    assert g2000.n_edges == 11979


@given(st.integers(2, 120), st.integers(1, 8), st.integers(0, 10_000))
def test_generated_graph_invariants(n, k, seed):
    g = generate_k_growing(n, k, seed)
    assert g.n_edges == edge_count(n, k)
    assert g.is_connected()
    for v in range(n):
        assert v not in g.neighbors(v)
        assert len(set(g.neighbors(v))) == g.degree(v)
    # node j joined with exactly min(k, j) links to earlier nodes
    for j in range(n):
        assert sum(1 for u in g.neighbors(j) if u < j) == min(k, j)


def test_generation_deterministic_and_serialisation_round_trip(tmp_path):
    a = generate_k_growing(300, 4, 11)
    b = generate_k_growing(300, 4, 11)
    assert a.to_text() == b.to_text()
    assert a.to_text() != generate_k_growing(300, 4, 12).to_text()
    a.write(tmp_path / "g.txt")
    back = Graph.read(tmp_path / "g.txt")
    assert back.to_text() == a.to_text()
    assert (back.n, back.k, back.seed) == (300, 4, 11)


@pytest.mark.parametrize("n,k", [(1, 1), (0, 2), (5, 0), (2.5, 1), (True, 1)])
def test_generate_rejects_bad_parameters(n, k):
    with pytest.raises(ParameterError):
        generate_k_growing(n, k, 0)


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_from_edges_rejects_non_simple(edges):
    with pytest.raises(ParameterError):
        Graph.from_edges(3, edges)


def test_single_source_histograms():
    assert shortest_path_histogram(path(3), 0).counts.tolist() == [1, 1, 1]
    k4 = Graph.from_edges(4, [(u, v) for u in range(4) for v in range(u + 1, 4)])
    assert shortest_path_histogram(k4, 2).counts.tolist() == [1, 3]
    with pytest.raises(ParameterError):
        shortest_path_histogram(k4, 4)


def test_pooled_histograms():
    assert pooled_histogram(path(3)).counts.tolist() == [3, 4, 2]
    star = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    h = pooled_histogram(star)
    assert h.counts.tolist() == [5, 8, 12]
    assert h.source == POOLED


def test_histograms_match_networkx_bfs():
    g = generate_k_growing(400, 3, 2)
    h = to_nx(g)
    for s in (0, 17, 399):
        lengths = nx.single_source_shortest_path_length(h, s)
        expect = np.bincount(list(lengths.values()))
        assert shortest_path_histogram(g, s).counts.tolist() == expect.tolist()
    pooled = np.zeros(20, dtype=int)
    for _, lengths in nx.all_pairs_shortest_path_length(h):
        for d in lengths.values():
            pooled[d] += 1
    got = pooled_histogram(g).counts
    assert got.tolist() == pooled[: len(got)].tolist()
    assert pooled[len(got):].sum() == 0


def test_pooled_total_and_sampling(g2000):
    h = pooled_histogram(g2000, sample_sources=50, seed=3)
    assert h.total == 2000 * 50
    assert h.counts[0] == 50
    assert pooled_histogram(g2000, 50, seed=3).counts.tolist() == h.counts.tolist()


def test_pooled_mean_n2000_k6(g2000):
    h = pooled_histogram(g2000)
    w = h.counts.astype(float)
    w[0] = 0
    mean = np.average(np.arange(len(w)), weights=w)
    assert 3.0 <= mean <= 3.6


def test_distance_symmetry(g2000):
    rng = np.random.default_rng(0)
    nodes = rng.choice(2000, 40, replace=False)
    d = g2000.distances_from(nodes)
    sub = d[:, nodes]
    assert np.array_equal(sub, sub.T)


def test_histogram_csv_round_trip():
    h = DistanceHistogram(source=POOLED, counts=np.array([3, 4, 2]))
    assert h.to_csv().splitlines()[0] == "distance,count"
    assert DistanceHistogram.from_csv(h.to_csv()).counts.tolist() == [3, 4, 2]


def test_jordan_center_examples():
    assert jordan_center(path(3), {0, 1, 2}) == [1]
    g = generate_k_growing(20, 2, 0)
    assert jordan_center(g, {7}) == [7]
    cycle = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert jordan_center(cycle, range(4)) == [0, 1, 2, 3]
    with pytest.raises(ParameterError):
        jordan_center(cycle, [])


def test_jordan_center_widen_can_leave_infected_set():
    # ends of a path: the true centre is not infected
    assert jordan_center(path(5), {0, 4}) == [0, 4]
    assert jordan_center(path(5), {0, 4}, widen=True) == [2]


@given(st.integers(3, 40), st.integers(1, 3), st.integers(0, 999), st.data())
def test_jordan_center_matches_brute_force(n, k, seed, data):
    g = generate_k_growing(n, k, seed)
    infected = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n))
    h = to_nx(g)
    ecc = {u: max(nx.shortest_path_length(h, u, v) for v in infected) for u in infected}
    best = min(ecc.values())
    got = jordan_center(g, infected)
    assert got == sorted(u for u in infected if ecc[u] == best)
    assert set(got) <= set(infected)


def test_eccentricities_pool():
    pool, ecc = eccentricities(path(5), [0, 4], range(5))
    assert ecc.tolist() == [4, 3, 2, 3, 4]
