import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from matchamg.matching import (Matching, WeightedGraph, compute_edge_weights,
                               exact_matching_oracle, suitor_matching, to_additive_weights)
from matchamg.problems import PoissonSpec, poisson7pt
from matchamg.sparse import SparseMatrix


def greedy_matching(g: WeightedGraph) -> np.ndarray:
    """Greedy over edges sorted by (-weight, lower endpoint, upper endpoint)."""
    mate = np.full(g.n, -1)
    for i, j, _ in sorted(g.edges, key=lambda e: (-e[2], min(e[:2]), max(e[:2]))):
        if mate[i] < 0 and mate[j] < 0:
            mate[i], mate[j] = j, i
    return mate


@st.composite
def graphs(draw, max_n=12, distinct=False, integer=False):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    if integer:
        wts = draw(st.lists(st.integers(1, 4), min_size=len(chosen), max_size=len(chosen)))
    else:
        wts = draw(st.lists(st.floats(0.01, 100.0), min_size=len(chosen), max_size=len(chosen),
                            unique=distinct))
    return WeightedGraph.from_edges(n, [(i, j, float(w)) for (i, j), w in zip(chosen, wts)])


def check_valid(g: WeightedGraph, m: Matching):
    edges = {(i, j) for i, j, _ in g.edges}
    for i in range(g.n):
        if m.mate[i] >= 0:
            assert m.mate[m.mate[i]] == i
            assert (min(i, m.mate[i]), max(i, m.mate[i])) in edges


class TestEdgeWeights:

    def test_interior_laplacian(self):
        a, _ = poisson7pt(PoissonSpec.cube(3))
        g = compute_edge_weights(a, np.ones(27))
        k = [idx for idx, (i, j, _) in enumerate(g.edges) if i == 13 or j == 13]
        np.testing.assert_allclose(g.weights[k], 7 / 6, rtol=1e-15)

    def test_zero_weight_excluded(self):
        a = SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]], symmetric=True)
        assert compute_edge_weights(a, np.ones(2)).nedges == 0

    def test_no_stored_entry(self):
        a = SparseMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
        assert compute_edge_weights(a, np.ones(3)).nedges == 0

    def test_formula(self):
        rng = np.random.default_rng(3)
        d = np.array([[4.0, -1.5, 0.3], [-1.5, 5.0, 2.0], [0.3, 2.0, 3.0]])
        w = rng.standard_normal(3)
        g = compute_edge_weights(SparseMatrix.from_dense(d, symmetric=True), w)
        for i, j, c in g.edges:
            ref = 1 - 2 * d[i, j] * w[i] * w[j] / (d[i, i] * w[i] ** 2 + d[j, j] * w[j] ** 2)
            assert c == pytest.approx(ref, rel=1e-14)

    def test_scale_invariant_in_w(self):
        a, _ = poisson7pt(PoissonSpec(3, 2, 2))
        w = np.random.default_rng(1).standard_normal(a.nrows)
        g1, g2 = compute_edge_weights(a, w), compute_edge_weights(a, -3.7 * w)
        np.testing.assert_allclose(g1.weights, g2.weights, rtol=1e-14)

    def test_zero_denominator_skipped(self):
        a = SparseMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]], symmetric=True)
        assert compute_edge_weights(a, np.zeros(2)).nedges == 0

    def test_zero_diagonal_rejected(self):
        a = SparseMatrix.from_dense([[0.0, -1.0], [-1.0, 0.0]], symmetric=True)
        with pytest.raises(ValueError):
            compute_edge_weights(a, np.ones(2))


class TestAdditiveWeights:

    def test_uniform(self):
        g = WeightedGraph.from_edges(3, [(0, 1, 7 / 6), (1, 2, 7 / 6)])
        np.testing.assert_array_equal(to_additive_weights(g).weights, [1.0, 1.0])

    def test_e_and_one(self):
        g = WeightedGraph.from_edges(3, [(0, 1, math.e), (1, 2, 1.0)])
        np.testing.assert_allclose(to_additive_weights(g).weights, [2.0, 1.0], rtol=1e-15)

    def test_single(self):
        g = WeightedGraph.from_edges(2, [(0, 1, -0.4)])
        np.testing.assert_array_equal(to_additive_weights(g).weights, [1.0])

    def test_empty(self):
        assert to_additive_weights(WeightedGraph.from_edges(3, [])).nedges == 0

    @given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=20, unique=True))
    def test_monotone(self, mags):
        g = WeightedGraph.from_edges(len(mags) + 1, [(k, k + 1, m) for k, m in enumerate(mags)])
        out = to_additive_weights(g).weights
        assert out.min() >= 1.0
        assert np.array_equal(np.argsort(mags), np.argsort(out))


class TestSuitor:

    def test_triangle(self):
        g = WeightedGraph.from_edges(3, [(0, 1, 3.0), (1, 2, 2.0), (0, 2, 1.0)])
        m = suitor_matching(g)
        assert m.pairs() == [(0, 1)]
        assert m.mate[2] == -1
        assert m.total_weight == 3.0

    def test_path_tie(self):
        g = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
        assert suitor_matching(g).pairs() == [(0, 1)]

    def test_empty(self):
        m = suitor_matching(WeightedGraph.from_edges(4, []))
        assert np.all(m.mate == -1) and m.total_weight == 0.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            suitor_matching(WeightedGraph.from_edges(2, [(0, 1, -1.0)]))

    @given(graphs())
    def test_valid_and_maximal(self, g):
        m = suitor_matching(g)
        check_valid(g, m)
        for i, j, _ in g.edges:
            assert m.mate[i] >= 0 or m.mate[j] >= 0

    @given(graphs())
    def test_half_approximation(self, g):
        assert suitor_matching(g).total_weight >= 0.5 * exact_matching_oracle(g).total_weight - 1e-12

    @given(graphs(integer=True))
    def test_equals_greedy_with_ties(self, g):
        np.testing.assert_array_equal(suitor_matching(g).mate, greedy_matching(g))

    @given(graphs(distinct=True))
    def test_locally_dominant_edges_matched(self, g):
        m = suitor_matching(g)
        best = {}
        for i, j, w in g.edges:
            for v in (i, j):
                best[v] = max(best.get(v, -np.inf), w)
        for i, j, w in g.edges:
            if w == best[i] == best[j]:
                assert m.mate[i] == j


class TestOracle:

    def test_triangle(self):
        g = WeightedGraph.from_edges(3, [(0, 1, 3.0), (1, 2, 2.0), (0, 2, 1.0)])
        assert exact_matching_oracle(g).total_weight == 3.0

    def test_four_cycle(self):
        g = WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 1.0), (0, 3, 2.0)])
        m = exact_matching_oracle(g)
        assert m.total_weight == 4.0
        assert sorted(m.pairs()) == [(0, 3), (1, 2)]

    def test_empty(self):
        assert exact_matching_oracle(WeightedGraph.from_edges(5, [])).total_weight == 0.0

    def test_too_large(self):
        with pytest.raises(ValueError):
            exact_matching_oracle(WeightedGraph.from_edges(17, []))


def test_graph_validation():
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(3, [(1, 1, 1.0)])
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])
    with pytest.raises(ValueError):
        WeightedGraph.from_edges(3, [(0, 1, np.inf)])
