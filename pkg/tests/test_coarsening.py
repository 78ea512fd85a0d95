import numpy as np
import pytest
from hypothesis import given, strategies as st

from matchamg.coarsening import (CoarseningConfig, Hierarchy, Level, build_hierarchy,
                                 compose_sweeps, kcycle_operator_complexity,
                                 operator_complexity, pairwise_prolongator, restrict_weight,
                                 smooth_prolongator)
from matchamg.matching import Matching
from matchamg.problems import PoissonSpec, block3d_partition, poisson7pt
from matchamg.sparse import BlockPartition, SparseMatrix

from conftest import random_spd

S2 = 1 / np.sqrt(2)


def matching(mate):
    return Matching(np.asarray(mate, dtype=np.int64), 0.0)


class TestPairwise:

    def test_pair(self):
        p = pairwise_prolongator(matching([1, 0]), np.ones(2))
        np.testing.assert_allclose(p.matrix.to_dense(), [[S2], [S2]], rtol=1e-15)

    def test_negative_singleton(self):
        p = pairwise_prolongator(matching([-1]), [-2.0])
        np.testing.assert_array_equal(p.matrix.to_dense(), [[-1.0]])

    def test_column_order(self):
        # pairs by smallest member, then singletons by index
        p = pairwise_prolongator(matching([-1, 3, -1, 1, 5, 4]), np.arange(1.0, 7.0))
        np.testing.assert_array_equal(p.aggregate_of, [2, 0, 3, 0, 1, 1])

    def test_zero_weight_fallback(self):
        p = pairwise_prolongator(matching([1, 0, -1]), [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(p.matrix.to_dense(), [[1, 0], [0, 0], [0, 1]])

    @given(st.integers(1, 30), st.integers(0, 2**31))
    def test_orthonormal(self, n, seed):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        mate = np.full(n, -1)
        for k in range(0, n - 1, 2):
            if rng.random() < 0.7:
                mate[perm[k]], mate[perm[k + 1]] = perm[k + 1], perm[k]
        w = rng.standard_normal(n)
        p = pairwise_prolongator(matching(mate), w).matrix.to_dense()
        np.testing.assert_allclose(p.T @ p, np.eye(p.shape[1]), atol=1e-14)
        np.testing.assert_allclose(p @ (p.T @ w), w, atol=1e-14)


class TestRestrictWeight:

    def test_pair(self):
        p = pairwise_prolongator(matching([1, 0]), np.ones(2))
        np.testing.assert_allclose(restrict_weight(p, np.ones(2)), [np.sqrt(2)], rtol=1e-15)

    def test_singleton(self):
        p = pairwise_prolongator(matching([-1]), [-2.0])
        np.testing.assert_array_equal(restrict_weight(p, [-2.0]), [2.0])

    def test_zero(self):
        p = pairwise_prolongator(matching([1, 0, -1]), np.ones(3))
        np.testing.assert_array_equal(restrict_weight(p, np.zeros(3)), np.zeros(2))

    def test_smoothed_rejected(self):
        a, _ = poisson7pt(PoissonSpec.cube(3))
        p, _, _ = compose_sweeps(a, np.ones(27), 1)
        with pytest.raises(ValueError):
            restrict_weight(smooth_prolongator(a, p), np.ones(27))


class TestComposeSweeps:

    def test_two_points(self):
        a, _ = poisson7pt(PoissonSpec(2, 1, 1))
        p, ac, _ = compose_sweeps(a, np.ones(2), 1)
        assert p.nc == 1 and ac.nrows == 1

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_properties(self, m):
        a, _ = poisson7pt(PoissonSpec(6, 5, 4))
        w = np.random.default_rng(m).uniform(0.5, 1.5, a.nrows)
        p, ac, wc = compose_sweeps(a, w, m)
        pd = p.matrix.to_dense()
        np.testing.assert_allclose(pd.T @ pd, np.eye(p.nc), atol=1e-14)
        np.testing.assert_allclose(pd @ wc, w, atol=1e-13)
        assert p.aggregate_sizes().max() <= 2**m
        np.testing.assert_allclose(ac.to_dense(), pd.T @ a.to_dense() @ pd, atol=1e-12)
        # column supports coincide with aggregates
        for g in range(p.nc):
            rows = np.flatnonzero(pd[:, g])
            np.testing.assert_array_equal(rows, np.flatnonzero(p.aggregate_of == g))

    def test_no_edges_gives_identity(self):
        a = SparseMatrix.from_dense(np.diag([1.0, 2.0, 3.0]))
        p, ac, _ = compose_sweeps(a, np.ones(3), 2)
        np.testing.assert_array_equal(p.matrix.to_dense(), np.eye(3))
        assert ac is a


class TestSmoothProlongator:

    def test_diagonal_unchanged(self):
        a = SparseMatrix.from_dense(2 * np.eye(2))
        p = pairwise_prolongator(matching([1, 0]), np.ones(2))
        assert smooth_prolongator(a, p) is p

    def test_dense_oracle(self):
        a, _ = poisson7pt(PoissonSpec.cube(4))
        p, _, _ = compose_sweeps(a, np.ones(64), 3)
        ps = smooth_prolongator(a, p)
        ad = a.to_dense()
        d = np.diag(ad)
        ref = p.matrix.to_dense() - 0.5 * (ad / d[:, None]) @ p.matrix.to_dense()
        np.testing.assert_allclose(ps.matrix.to_dense(), ref, atol=1e-15)
        assert ps.smoothed

    def test_reproduces_ones_on_interior(self):
        a, _ = poisson7pt(PoissonSpec.cube(4))
        w = np.ones(64)
        p, _, wc = compose_sweeps(a, w, 1)
        ps = smooth_prolongator(a, p)
        interior = np.asarray(a.to_dense().sum(axis=1)) == 0
        np.testing.assert_allclose((ps.matrix.to_dense() @ wc)[interior], 1.0, atol=1e-12)
        assert interior.any()


class TestBuildHierarchy:

    def test_small_is_single_level(self):
        a, _ = poisson7pt(PoissonSpec.cube(4))
        h = build_hierarchy(a, np.ones(64))
        assert h.nl == 1
        assert operator_complexity(h) == 1.0
        assert kcycle_operator_complexity(h) == 1.0
        assert h.average_coarsening_ratio() == 1.0

    @pytest.mark.parametrize("smoothed", [False, True])
    @pytest.mark.parametrize("nprocs", [1, 8])
    def test_invariants(self, smoothed, nprocs):
        spec = PoissonSpec.cube(12, nprocs)
        a, _ = poisson7pt(spec)
        part = block3d_partition(spec)
        cfg = CoarseningConfig(max_coarse_size=20, smooth_prolongator=smoothed)
        h = build_hierarchy(a, np.ones(a.nrows), part, cfg)
        assert h.nl >= 3
        sizes = h.sizes
        assert all(sizes[k + 1] < sizes[k] for k in range(h.nl - 1))
        for lev, lvl in enumerate(h.levels):
            ad = lvl.a.to_dense()
            assert np.abs(ad - ad.T).max() <= 1e-12 * np.abs(ad).max()
            np.linalg.cholesky(ad)
            assert lvl.partition.n == lvl.n
            assert np.all(lvl.partition.sizes > 0)
            if lvl.p_to_coarser is None:
                continue
            pt = lvl.p_tentative.matrix.to_dense()
            np.testing.assert_allclose(pt.T @ pt, np.eye(pt.shape[1]), atol=1e-14)
            wn = h.levels[lev + 1].w
            assert np.linalg.norm(pt @ (pt.T @ lvl.w) - lvl.w) <= 1e-13 * np.linalg.norm(lvl.w)
            np.testing.assert_allclose(pt.T @ lvl.w, wn, atol=1e-13)
            agg = lvl.p_to_coarser.aggregate_of
            assert np.array_equal(np.unique(agg), np.arange(h.levels[lev + 1].n))
            assert lvl.p_tentative.aggregate_sizes().max() <= 8
            pm = lvl.p_to_coarser.matrix.to_dense()
            np.testing.assert_allclose(h.levels[lev + 1].a.to_dense(), pm.T @ ad @ pm, atol=1e-11)
            # block-contiguous coarse ownership: aggregate owned by its lowest member's block
            lowest = np.array([np.flatnonzero(agg == g).min() for g in range(pm.shape[1])])
            cb = h.levels[lev + 1].partition.block_of()
            fb = lvl.partition.block_of(lowest)
            assert np.all(np.diff(cb) >= 0)
            assert np.array_equal(np.unique(fb, return_inverse=True)[1], cb)

    def test_stop_by_max_levels(self):
        a, _ = poisson7pt(PoissonSpec.cube(12))
        h = build_hierarchy(a, np.ones(a.nrows), cfg=CoarseningConfig(max_levels=2, max_coarse_size=1))
        assert h.nl == 2

    def test_stop_by_ratio(self):
        a = SparseMatrix.from_dense(np.diag(np.arange(1.0, 11.0)))
        h = build_hierarchy(a, np.ones(10), cfg=CoarseningConfig(max_coarse_size=1))
        assert h.nl == 1

    def test_errors(self):
        a, _ = poisson7pt(PoissonSpec.cube(3))
        with pytest.raises(ValueError):
            build_hierarchy(a, np.zeros(27))
        bad = SparseMatrix.from_dense(-np.eye(3))
        with pytest.raises(ValueError):
            build_hierarchy(bad, np.ones(3))
        with pytest.raises(ValueError):
            CoarseningConfig(sweeps_per_level=0)

    def test_random_spd(self):
        a = random_spd(np.random.default_rng(4), 200, 0.02)
        h = build_hierarchy(a, np.ones(200), cfg=CoarseningConfig(max_coarse_size=10))
        for lvl in h.levels:
            np.linalg.cholesky(lvl.a.to_dense())

    def test_summary_json(self):
        import json
        a, _ = poisson7pt(PoissonSpec.cube(10))
        h = build_hierarchy(a, np.ones(1000), cfg=CoarseningConfig(max_coarse_size=10))
        s = json.loads(h.to_json())
        assert s["nl"] == h.nl and len(s["levels"]) == h.nl
        assert s["levels"][0]["n"] == 1000


class TestComplexity:

    def _fake(self, nnzs):
        levels = []
        for nnz in nnzs:
            a = SparseMatrix.from_dense(np.eye(nnz))
            levels.append(Level(a, np.ones(nnz), BlockPartition.single(nnz)))
        return Hierarchy(levels)

    def test_two_level(self):
        h = self._fake([64, 8])
        assert operator_complexity(h) == 1.125
        assert kcycle_operator_complexity(h) == 1.25

    def test_direct_count(self):
        h = self._fake([100, 30, 7, 2])
        assert operator_complexity(h) == pytest.approx(139 / 100)
        assert kcycle_operator_complexity(h) == pytest.approx((100 + 60 + 28 + 16) / 100)
