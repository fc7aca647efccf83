"""
Unit tests for the rectangle collection geometry.

Tests cover:
- Measures, intersections and unions of anchored rectangles
- Class C sets and representation invariance
- The d_m and Hausdorff distances
- Dyadic approximation g_n, A_n enumeration and left neighbourhoods
- Lower layers of the dyadic grid
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import cdist

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent))

from src.errors import CapExceededError, DomainError, EmptySetError
from src.geometry.dyadic import (
    DyadicLevel,
    consistent_ordering,
    enumerate_An,
    g_n,
    left_neighbourhood,
    left_neighbourhoods,
    rectangular_increment,
)
from src.geometry.lower_layers import (
    MAX_GRID_SIDE,
    LowerLayerGrid,
    lower_layers_enumerate,
    lower_layers_min_gap,
)
from src.geometry.rects import (
    CSet,
    Rect,
    d_hausdorff,
    d_m,
    inclusion_exclusion_terms,
    measure_cset,
    measure_union,
    pairwise_distances,
    rect_intersect,
    rect_measure,
)


def random_rect(rng, dim=2, low=0.0):
    return Rect(corner=tuple(rng.uniform(low, 1.0, size=dim)))


def grid_union_measure(rects, cells=64):
    """Brute-force cell-centre count on a cells x cells grid."""
    centres = (np.arange(cells) + 0.5) / cells
    xs, ys = np.meshgrid(centres, centres, indexing="ij")
    covered = np.zeros_like(xs, dtype=bool)
    for r in rects:
        covered |= (xs <= r.corner[0]) & (ys <= r.corner[1])
    return covered.sum() / float(cells * cells)


class TestRectMeasure:
    """Test measures and intersections of single rectangles."""

    def test_product_of_sides(self):
        """Test the measure is the product of the corner coordinates."""
        assert rect_measure(Rect.of(0.5, 0.5)) == pytest.approx(0.25)

    def test_empty_measure(self):
        """Test the empty set has measure zero."""
        assert rect_measure(Rect.empty_set()) == 0.0

    def test_unit_cube(self):
        """Test the unit cube has measure one."""
        assert rect_measure(Rect.of(1, 1, 1)) == 1.0

    def test_origin_is_degenerate(self):
        """Test the set {0} is a valid rectangle of measure zero."""
        origin = Rect.of(0.0, 0.0)
        assert not origin.empty
        assert origin.measure == 0.0

    def test_rejects_out_of_range(self):
        """Test corners outside [0,1] are rejected."""
        with pytest.raises(DomainError):
            Rect.of(0.5, 1.5)

    def test_intersect_componentwise_min(self):
        """Test intersection takes the componentwise minimum."""
        assert rect_intersect(Rect.of(0.5, 1), Rect.of(1, 0.5)) == Rect.of(0.5, 0.5)

    def test_intersect_idempotent(self):
        """Test U n U = U."""
        u = Rect.of(0.3, 0.7)
        assert rect_intersect(u, u) == u

    def test_intersect_empty(self):
        """Test U n empty = empty."""
        assert rect_intersect(Rect.of(0.3, 0.7), Rect.empty_set()).empty

    def test_intersect_dimension_mismatch(self):
        """Test rectangles of different dimensions cannot be intersected."""
        with pytest.raises(DomainError):
            rect_intersect(Rect.of(0.3), Rect.of(0.3, 0.4))

    def test_json_exact_dyadic(self):
        """Test dyadic coordinates serialize as exact decimal strings."""
        data = Rect.of(0.5, 0.3).to_json()
        assert data["corner"][0] == "0.5"
        assert data["corner"][1] == 0.3
        assert Rect.from_json(json.loads(json.dumps(data))) == Rect.of(0.5, 0.3)

    def test_json_empty(self):
        """Test the empty set serializes with its flag."""
        assert Rect.empty_set().to_json() == {"empty": True}


class TestMeasureUnion:
    """Test exact measures of unions of rectangles."""

    def test_two_rectangles(self):
        """Test 0.5 + 0.5 - 0.25."""
        assert measure_union([Rect.of(0.5, 1), Rect.of(1, 0.5)]) == pytest.approx(0.75)

    def test_single_rectangle(self):
        """Test the union of one rectangle is its measure."""
        u = Rect.of(0.3, 0.6)
        assert measure_union([u]) == pytest.approx(u.measure)

    def test_staircase_against_grid(self):
        """Test a three-step staircase against the 64 x 64 grid count."""
        rects = [Rect.of(0.25, 1), Rect.of(0.5, 0.5), Rect.of(1, 0.25)]
        assert measure_union(rects) == pytest.approx(0.5, abs=1e-12)
        assert grid_union_measure(rects) == pytest.approx(0.5, abs=1e-12)

    def test_empty_collection(self):
        """Test the empty union has measure zero."""
        assert measure_union([]) == 0.0
        assert measure_union([Rect.empty_set()]) == 0.0

    def test_ie_matches_sweep(self):
        """Test inclusion-exclusion and sweep agree on random collections."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            k = int(rng.integers(1, 13))
            rects = [random_rect(rng) for _ in range(k)]
            ie = measure_union(rects, method="ie")
            sweep = measure_union(rects, method="sweep")
            assert ie == pytest.approx(sweep, abs=1e-12)

    def test_ie_matches_sweep_3d(self):
        """Test both union paths agree in dimension three."""
        rng = np.random.default_rng(12)
        for _ in range(50):
            rects = [random_rect(rng, dim=3) for _ in range(int(rng.integers(1, 9)))]
            assert measure_union(rects, method="ie") == pytest.approx(
                measure_union(rects, method="sweep"), abs=1e-12
            )

    def test_ie_cap(self):
        """Test the inclusion-exclusion path rejects more than 24 rectangles."""
        rects = [Rect.of(0.01 * (i + 1), 1 - 0.01 * i) for i in range(25)]
        with pytest.raises(CapExceededError):
            measure_union(rects, method="ie")
        assert measure_union(rects) > 0.0

    def test_unknown_method(self):
        """Test an unknown method name is rejected."""
        with pytest.raises(DomainError):
            measure_union([Rect.of(0.5, 0.5)], method="magic")


class TestCSet:
    """Test class C sets and their measure."""

    def test_left_neighbourhood_example(self):
        """Test the dyadic cell of side 1/4 has measure 1/16."""
        c = CSet(Rect.of(0.5, 0.5), (Rect.of(0.25, 0.5), Rect.of(0.5, 0.25)))
        assert measure_cset(c) == pytest.approx(0.0625)

    def test_self_subtraction(self):
        """Test U minus U is null."""
        u = Rect.of(0.4, 0.9)
        assert measure_cset(CSet(u, (u,))) == 0.0

    def test_nothing_subtracted(self):
        """Test U minus nothing is U."""
        u = Rect.of(0.4, 0.9)
        assert measure_cset(CSet(u, ())) == pytest.approx(u.measure)

    def test_terms_reproduce_measure(self):
        """Test the signed inclusion-exclusion terms sum to the measure."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            c = CSet(random_rect(rng), tuple(random_rect(rng) for _ in range(3)))
            total = sum(coef * r.measure for coef, r in inclusion_exclusion_terms(c))
            assert total == pytest.approx(measure_cset(c), abs=1e-12)

    def test_representation_invariance(self):
        """Test measure_cset ignores redundant, duplicated and permuted subtractions."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            base = random_rect(rng)
            subs = [random_rect(rng) for _ in range(int(rng.integers(1, 5)))]
            reference = measure_cset(CSet(base, tuple(subs)))

            inner = rect_intersect(subs[0], random_rect(rng))
            padded = CSet(base, tuple(subs) + (inner,))
            duplicated = CSet(base, tuple(subs) + (subs[-1],))
            permuted = CSet(base, tuple(subs[i] for i in rng.permutation(len(subs))))

            for variant in (padded, duplicated, permuted):
                assert measure_cset(variant) == pytest.approx(reference, abs=1e-12)

    def test_contains_point(self):
        """Test point membership follows the set difference."""
        c = CSet(Rect.of(0.5, 0.5), (Rect.of(0.25, 0.5), Rect.of(0.5, 0.25)))
        assert c.contains_point((0.4, 0.4))
        assert not c.contains_point((0.2, 0.4))
        assert not c.contains_point((0.6, 0.4))

    def test_json(self):
        """Test the class C set JSON layout."""
        c = CSet(Rect.of(0.5, 0.5), (Rect.of(0.25, 0.5),))
        data = c.to_json()
        assert set(data) == {"base", "sub"}
        assert CSet.from_json(data) == c


class TestDistances:
    """Test the d_m and Hausdorff distances."""

    def test_d_m_values(self):
        """Test d_m on the reference pairs."""
        assert d_m(Rect.of(1, 1), Rect.of(0.5, 1)) == pytest.approx(0.5)
        assert d_m(Rect.of(0.5, 0.5), Rect.of(0.5, 0.5)) == 0.0
        assert d_m(Rect.of(0.5, 0.5), Rect.of(0.75, 0.25)) == pytest.approx(0.1875)

    def test_d_m_against_grid(self):
        """Test d_m against a 512 x 512 symmetric-difference count."""
        u, v = Rect.of(0.5, 0.5), Rect.of(0.75, 0.25)
        centres = (np.arange(512) + 0.5) / 512
        xs, ys = np.meshgrid(centres, centres, indexing="ij")
        in_u = (xs <= 0.5) & (ys <= 0.5)
        in_v = (xs <= 0.75) & (ys <= 0.25)
        assert (in_u ^ in_v).mean() == pytest.approx(d_m(u, v), abs=1e-12)

    def test_d_m_empty(self):
        """Test d_m(empty, U) = m(U)."""
        u = Rect.of(0.3, 0.3)
        assert d_m(Rect.empty_set(), u) == pytest.approx(u.measure)

    def test_hausdorff_values(self):
        """Test the sup-norm Hausdorff closed form."""
        assert d_hausdorff(Rect.of(1, 1), Rect.of(0.5, 1)) == pytest.approx(0.5)
        assert d_hausdorff(Rect.of(0.3, 0.3), Rect.of(0.3, 0.3)) == 0.0
        assert d_hausdorff(Rect.of(0.3, 0.8), Rect.of(0.5, 0.7)) == pytest.approx(0.2)

    def test_hausdorff_against_point_sets(self):
        """Test the closed form against a Chebyshev Hausdorff oracle on sampled points."""
        u, v = Rect.of(0.3, 0.8), Rect.of(0.5, 0.7)

        def samples(r):
            xs = np.linspace(0.0, r.corner[0], 41)
            ys = np.linspace(0.0, r.corner[1], 41)
            return np.array([(x, y) for x in xs for y in ys])

        dist = cdist(samples(u), samples(v), metric="chebyshev")
        oracle = max(dist.min(axis=1).max(), dist.min(axis=0).max())
        assert oracle == pytest.approx(d_hausdorff(u, v), abs=1e-12)

    def test_hausdorff_rejects_empty(self):
        """Test the Hausdorff distance is undefined on the empty set."""
        with pytest.raises(EmptySetError):
            d_hausdorff(Rect.empty_set(), Rect.of(0.5, 0.5))

    def test_triangle_inequalities(self):
        """Test the triangle inequality for both metrics on random triples."""
        rng = np.random.default_rng(3)
        for _ in range(1000):
            u, v, w = (random_rect(rng) for _ in range(3))
            assert d_m(u, w) <= d_m(u, v) + d_m(v, w) + 1e-12
            assert d_hausdorff(u, w) <= d_hausdorff(u, v) + d_hausdorff(v, w) + 1e-12

    def test_contractivity(self):
        """Test d_m(U n W, V n W) <= d_m(U, V)."""
        rng = np.random.default_rng(4)
        for _ in range(1000):
            u, v, w = (random_rect(rng) for _ in range(3))
            assert d_m(rect_intersect(u, w), rect_intersect(v, w)) <= d_m(u, v) + 1e-12

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_equivalence_on_compacts(self, dim):
        """Test d_m is sandwiched by the sup distance for corners in [0.25, 1]."""
        rng = np.random.default_rng(10 + dim)
        for _ in range(1000):
            s = rng.uniform(0.25, 1.0, size=dim)
            t = rng.uniform(0.25, 1.0, size=dim)
            sup = float(np.max(np.abs(s - t)))
            dist = d_m(Rect(corner=tuple(s)), Rect(corner=tuple(t)))
            assert 0.25 ** (dim - 1) * sup <= dist + 1e-12
            assert dist <= dim * sup + 1e-12

    def test_pairwise_matrix(self):
        """Test the vectorized distance matrix matches the scalar functions."""
        rng = np.random.default_rng(6)
        rects = [random_rect(rng, low=0.05) for _ in range(20)]
        dm = pairwise_distances(rects, "d_m")
        dh = pairwise_distances(rects, "d_hausdorff")
        for i in range(20):
            for j in range(20):
                assert dm[i, j] == pytest.approx(d_m(rects[i], rects[j]), abs=1e-12)
                assert dh[i, j] == pytest.approx(d_hausdorff(rects[i], rects[j]), abs=1e-12)


class TestDyadic:
    """Test dyadic approximation classes."""

    def test_g_n_ceiling(self):
        """Test g_2 rounds corners up to the 1/4 grid."""
        assert g_n(Rect.of(0.3, 0.6), 2) == Rect.of(0.5, 0.75)

    def test_g_n_fixes_dyadic(self):
        """Test dyadic corners are fixed points."""
        u = Rect.of(0.25, 0.75)
        assert g_n(u, 2) == u
        assert g_n(u, 5) == u

    def test_g_n_rejects_empty(self):
        """Test g_n needs a non-empty set."""
        with pytest.raises(DomainError):
            g_n(Rect.empty_set(), 3)

    def test_g_n_sandwich(self):
        """Test U <= g_{n+1}(U) <= g_n(U) and the N 2^-n gap bound."""
        rng = np.random.default_rng(8)
        for _ in range(500):
            dim = int(rng.integers(1, 4))
            u = random_rect(rng, dim=dim)
            for n in range(0, 10):
                coarse, fine = g_n(u, n), g_n(u, n + 1)
                assert fine.contains(u)
                assert coarse.contains(fine)
                assert d_m(u, coarse) <= dim * 2.0 ** -n + 1e-12

    def test_enumerate_1d(self):
        """Test A_1 in dimension one."""
        sets = enumerate_An(DyadicLevel(1, 1), include_empty=True)
        assert sets == [Rect.empty_set(), Rect.of(0.0), Rect.of(0.5), Rect.of(1.0)]

    @pytest.mark.parametrize("n,count", [(1, 9), (3, 81)])
    def test_enumerate_counts(self, n, count):
        """Test k_n = (2^n + 1)^2 in dimension two."""
        level = DyadicLevel(n, 2)
        assert level.k_n == count
        assert len(enumerate_An(level)) == count

    def test_enumerate_cap(self):
        """Test enumeration refuses levels above the cap."""
        with pytest.raises(CapExceededError):
            enumerate_An(DyadicLevel(6, 3), cap=1000)

    def test_left_neighbourhood_example(self):
        """Test the mixed dyadic / non-dyadic cell of t = (0.5, 0.3) at level 2."""
        c = left_neighbourhood((0.5, 0.3), 2)
        assert c.base == Rect.of(0.5, 0.5)
        assert c.subtracted == (Rect.of(0.25, 0.5), Rect.of(0.5, 0.25))

    def test_left_neighbourhood_measure(self):
        """Test the cell measure is 2^-nN and contains t."""
        rng = np.random.default_rng(9)
        for _ in range(200):
            t = tuple(rng.uniform(0.01, 0.99, size=2))
            for n in range(0, 8):
                c = left_neighbourhood(t, n)
                assert measure_cset(c) == pytest.approx(2.0 ** (-2 * n), abs=1e-12)
                assert c.contains_point(t)

    def test_left_neighbourhoods_nested(self):
        """Test C_{n+1}(t) is inside C_n(t) on a membership grid."""
        rng = np.random.default_rng(10)
        grid = [(x, y) for x in np.linspace(0, 1, 65) for y in np.linspace(0, 1, 65)]
        for _ in range(20):
            t = tuple(rng.uniform(0.01, 0.99, size=2))
            for n in range(0, 5):
                coarse, fine = left_neighbourhood(t, n), left_neighbourhood(t, n + 1)
                for p in grid:
                    if fine.contains_point(p):
                        assert coarse.contains_point(p)

    def test_left_neighbourhood_boundary(self):
        """Test points on the boundary of the cube are rejected."""
        with pytest.raises(DomainError):
            left_neighbourhood((0.0, 0.5), 3)
        with pytest.raises(DomainError):
            left_neighbourhood((0.5, 1.0), 3)

    def test_rectangular_increment(self):
        """Test the box (u, v] has measure prod(v - u)."""
        c = rectangular_increment((0.2, 0.3), (0.7, 0.9))
        assert measure_cset(c) == pytest.approx(0.5 * 0.6)
        assert c.contains_point((0.5, 0.5))
        assert not c.contains_point((0.1, 0.5))

    def test_rectangular_increment_order(self):
        """Test u must lie below v."""
        with pytest.raises(DomainError):
            rectangular_increment((0.8, 0.3), (0.7, 0.9))

    def test_consistent_ordering(self):
        """Test strict inclusions respect the ordering."""
        family = enumerate_An(DyadicLevel(2, 2))
        ordered = consistent_ordering(family)
        for i, a in enumerate(ordered):
            for b in ordered[:i]:
                assert not (a != b and b.contains(a))

    def test_left_neighbourhoods_partition(self):
        """Test the left neighbourhoods of A_n partition the cube."""
        family = enumerate_An(DyadicLevel(2, 2))
        cells = left_neighbourhoods(family)
        assert sum(measure_cset(c) for c in cells) == pytest.approx(1.0, abs=1e-12)

    def test_left_neighbourhoods_match_lemma(self):
        """Test the family construction reproduces the closed-form cells."""
        family = enumerate_An(DyadicLevel(3, 2))
        by_base = {c.base: c for c in left_neighbourhoods(family)}
        rng = np.random.default_rng(21)
        for _ in range(50):
            t = tuple(rng.uniform(0.01, 0.99, size=2))
            lemma = left_neighbourhood(t, 3)
            assert measure_cset(by_base[lemma.base]) == pytest.approx(measure_cset(lemma))
            assert by_base[lemma.base].contains_point(t)


class TestLowerLayers:
    """Test lower layers on the dyadic grid."""

    @pytest.mark.parametrize("k,core", [(1, 2), (2, 6), (3, 20), (4, 70)])
    def test_counts(self, k, core):
        """Test the number of downward closed cell sets."""
        count, layers = lower_layers_enumerate(k)
        assert count.core == core
        assert count.with_conventions == core + 1
        assert len(layers) == core

    def test_matches_brute_force(self):
        """Test the 2 x 2 count against filtering all 2^4 subsets."""
        closed = 0
        for bits in range(16):
            cells = {(i, j) for i in range(2) for j in range(2) if bits >> (2 * i + j) & 1}
            if all((a, b) in cells for (i, j) in cells for a in range(i + 1) for b in range(j + 1)):
                closed += 1
        assert lower_layers_enumerate(2)[0].core == closed

    def test_layers_downward_closed(self):
        """Test every enumerated layer is downward closed."""
        _, layers = lower_layers_enumerate(4)
        for layer in layers:
            cells = layer.cells
            for i in range(4):
                for j in range(4):
                    if cells[i, j]:
                        assert cells[: i + 1, : j + 1].all()

    def test_corners_cover_layer(self):
        """Test the maximal corners reproduce the layer measure."""
        _, layers = lower_layers_enumerate(4)
        for layer in layers:
            rects = [Rect(corner=c) for c in layer.corners()]
            assert measure_union(rects) == pytest.approx(layer.measure, abs=1e-12)

    def test_rejects_increasing_heights(self):
        """Test column heights must be non-increasing."""
        with pytest.raises(DomainError):
            LowerLayerGrid(k=2, heights=(1, 2))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_min_gap(self, n):
        """Test the smallest strict superset gap is one cell."""
        assert lower_layers_min_gap(n) == pytest.approx(2.0 ** (-2 * n))

    @pytest.mark.parametrize("k", [7, 8, 16])
    def test_cap(self, k):
        """Test grids beyond six cells per side are rejected by default."""
        with pytest.raises(CapExceededError):
            lower_layers_enumerate(k)

    def test_gap_search_cap(self):
        """Test the raised cap admits side 8 and nothing larger."""
        count, _ = lower_layers_enumerate(8, cap=MAX_GRID_SIDE)
        assert count.core == 12870
        with pytest.raises(CapExceededError):
            lower_layers_enumerate(16, cap=16)
