"""
Tests for core/decompose.py - 3-region factorisation of 1-Lipschitz splines.
"""

import numpy as np
import pytest

from core.analysis import build_sawtooth, random_lipschitz_spline
from core.cpwl1d import LinearSpline1D, compose, evaluate, lipschitz
from core.decompose import (
    CASE_2,
    CASE_3,
    UP_TO_THREE,
    CompositionChain,
    case_split,
    compact_chain,
    compose_chain,
    decompose,
    length_bound,
    normalize_outer_slopes,
    snap_to_one_lipschitz,
    split_case1,
    split_case2,
    split_case3,
    verify_chain,
)
from core.errors import DecompositionError, SchemaError


def case1_spline() -> LinearSpline1D:
    """Left slope 1 with a running maximum at the knot x = 1."""
    return LinearSpline1D(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 0.25]), 1.0, 1.0)


def case2_spline() -> LinearSpline1D:
    """Equal unit outer slopes and no one-sided extremum."""
    return LinearSpline1D(np.array([0.0, 1.0, 2.0, 4.0]), np.array([1.0, 0.0, 0.5, -1.0]), 1.0, 1.0)


def assert_same_function(f, g, lo=-10.0, hi=10.0):
    x = np.linspace(lo, hi, 4001)
    np.testing.assert_allclose(evaluate(f, x), evaluate(g, x), atol=1e-10)


class TestCaseSplit:
    """Tests for the case analysis."""

    def test_small_spline(self, abs_spline):
        """Test splines with at most three regions need no split."""
        assert case_split(abs_spline) == UP_TO_THREE

    def test_case1(self):
        """Test a running maximum from the left is Case 1."""
        tag = case_split(case1_spline())
        assert tag.kind == "case1"
        assert tag.knot_index == 1
        assert tag.extremum == "max"
        assert tag.side == "left"

    def test_case2(self):
        """Test equal outer slopes without extrema are Case 2."""
        assert case_split(case2_spline()) == CASE_2

    def test_case3(self):
        """Test the two-level sawtooth has opposite outer slopes and no extremum."""
        assert case_split(build_sawtooth(2)) == CASE_3

    def test_outer_slopes_required(self):
        """Test non-unit outer slopes are rejected."""
        g = LinearSpline1D(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.8, 0.25]), 0.5, 1.0)
        with pytest.raises(DecompositionError):
            case_split(g)


class TestSplits:
    """Tests for the three split constructions."""

    def test_split_case1(self):
        """Test g = g2 o g1 with smaller factors."""
        g = case1_spline()
        g1, g2 = split_case1(g, case_split(g))
        assert_same_function(compose(g2, g1), g)
        assert g1.region_count < g.region_count
        assert g2.region_count < g.region_count
        assert lipschitz(g1) <= 1.0 and lipschitz(g2) <= 1.0

    def test_split_case1_tag_mismatch(self):
        """Test a non-Case-1 tag raises."""
        with pytest.raises(DecompositionError, match="case mismatch"):
            split_case1(case2_spline(), CASE_2)

    def test_split_case2(self):
        """Test the reflection factor has three regions."""
        g = case2_spline()
        g1, g2 = split_case2(g)
        assert_same_function(compose(g2, g1), g)
        assert g2.region_count == 3
        assert lipschitz(g1) <= 1.0

    def test_split_case2_mirrored(self):
        """Test negative outer slopes go through the mirrored construction."""
        g = LinearSpline1D(case2_spline().knots, -case2_spline().values, -1.0, -1.0)
        g1, g2 = split_case2(g)
        assert_same_function(compose(g2, g1), g)

    def test_split_case3(self):
        """Test the fold factor has two regions."""
        g = build_sawtooth(2)
        g1, g2 = split_case3(g)
        assert_same_function(compose(g2, g1), g)
        assert g2.region_count == 2

    def test_split_case3_mismatch(self):
        """Test equal outer slopes are rejected by Case 3."""
        with pytest.raises(DecompositionError, match="case mismatch"):
            split_case3(case2_spline())


class TestNormalizeOuterSlopes:
    """Tests for the outer-slope reparametrisation."""

    def test_wrapper(self):
        """Test g = core o wrapper with unit outer slopes on the core."""
        g = LinearSpline1D(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]), 0.5, -0.3)
        core, wrapper = normalize_outer_slopes(g)
        assert core.left_slope == 1.0
        assert core.right_slope == -1.0
        assert len(wrapper) == 1
        assert_same_function(compose(core, wrapper.factors[0]), g)

    def test_unit_slopes_need_no_wrapper(self):
        """Test an already normalised spline is returned unchanged."""
        core, wrapper = normalize_outer_slopes(build_sawtooth(3))
        assert len(wrapper) == 0
        assert_same_function(core, build_sawtooth(3))

    def test_flat_affine(self):
        """Test a constant gets an upward core and a zero wrapper."""
        core, wrapper = normalize_outer_slopes(LinearSpline1D.constant(2.0))
        assert core.left_slope == 1.0
        assert_same_function(compose_chain(list(wrapper) + [core]), LinearSpline1D.constant(2.0))


class TestDecompose:
    """Tests for the full factorisation."""

    def test_small_spline_is_one_factor(self, abs_spline):
        """Test three or fewer regions give a one-factor chain."""
        chain = decompose(abs_spline)
        assert len(chain) == 1

    def test_not_one_lipschitz(self):
        """Test steep splines are rejected."""
        with pytest.raises(DecompositionError, match="not 1-Lipschitz"):
            decompose(LinearSpline1D.affine(2.0))

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 6])
    def test_sawtooth(self, m):
        """Test sawtooth functions decompose into unit-slope factors."""
        g = build_sawtooth(m)
        chain = decompose(g)
        report = verify_chain(g, chain)
        assert report.passed, report
        assert all(count <= 3 for count in report.factor_region_counts)
        assert all(lip <= 1.0 + 1e-12 for lip in report.factor_lipschitz)
        assert report.unit_slopes is True

    def test_random_splines(self, rng):
        """Test random 1-Lipschitz splines with up to ten regions."""
        for _ in range(40):
            g = random_lipschitz_spline(rng, max_knots=9)
            chain = decompose(g)
            report = verify_chain(g, chain)
            assert report.passed, (g, report)

    def test_random_unit_slope_splines(self, rng):
        """Test unit-slope inputs give unit-slope factors."""
        for _ in range(25):
            g = random_lipschitz_spline(rng, max_knots=9, unit_slopes=True)
            report = verify_chain(g, decompose(g))
            assert report.passed
            assert report.unit_slopes is True

    def test_uncompacted_chain(self, rng):
        """Test the raw chain also composes to g and is never shorter."""
        g = random_lipschitz_spline(rng, max_knots=7, unit_slopes=True)
        raw = decompose(g, compact=False)
        compacted = decompose(g)
        assert verify_chain(g, raw).passed
        assert len(compacted) <= len(raw)

    @pytest.mark.slow
    def test_many_random_splines(self, rng):
        """Test a larger sample of random splines."""
        for _ in range(500):
            g = random_lipschitz_spline(rng, max_knots=9)
            assert verify_chain(g, decompose(g)).passed

    @pytest.mark.slow
    def test_deep_sawtooth(self):
        """Test F_10 decomposes within its advisory length bound."""
        g = build_sawtooth(10)
        report = verify_chain(g, decompose(g))
        assert report.passed
        assert report.length <= report.length_bound


class TestChain:
    """Tests for CompositionChain helpers."""

    def test_empty_chain_is_identity(self):
        """Test no factors means the identity."""
        chain = CompositionChain()
        assert_same_function(compose_chain(chain), LinearSpline1D.identity())
        assert chain.evaluate(3.5) == 3.5

    def test_compact_merges_shifts(self):
        """Test opposite shifts merge into one factor."""
        chain = compact_chain([LinearSpline1D.affine(1.0, 1.0), LinearSpline1D.affine(1.0, -1.0)])
        assert len(chain) == 1
        assert_same_function(chain.factors[0], LinearSpline1D.identity())

    def test_length_bound(self, hat):
        """Test the advisory bound grows with the region count."""
        assert length_bound(hat) == 2 * 4 + 4

    def test_round_trip(self):
        """Test chain.v1 documents."""
        chain = decompose(build_sawtooth(3))
        again = CompositionChain.from_dict(chain.to_dict())
        x = np.linspace(-2.0, 2.0, 101)
        np.testing.assert_array_equal(again.evaluate(x), chain.evaluate(x))

    def test_schema_error(self):
        """Test a document without factors raises."""
        with pytest.raises(SchemaError) as info:
            CompositionChain.from_dict({"factors": "nope"})
        assert info.value.field == "factors"

    def test_report_document(self):
        """Test the verification report document."""
        g = build_sawtooth(2)
        document = verify_chain(g, decompose(g)).to_dict()
        assert document["passed"] is True
        assert document["within_length_bound"] is True


def offset_spline(rng) -> LinearSpline1D:
    """1-Lipschitz spline with close knots far from the origin and large values."""
    n = int(rng.integers(4, 10))
    gaps = rng.choice(np.array([1e-6, 1e-3, 1.0, 50.0]), size=n - 1)
    knots = 50.0 + np.concatenate(([0.0], np.cumsum(gaps)))
    slopes = rng.choice(np.array([-1.0, -0.5, 0.0, 0.5, 1.0]), size=n + 1)
    return LinearSpline1D.from_slopes(knots, slopes, float(rng.normal(0.0, 100.0)))


class TestRounding:
    """Tests for factors built near large values and close knots."""

    def test_snap_removes_rounding_excess(self):
        """Test a slope a few ulps above 1 is brought back to 1."""
        knots = np.array([0.0, 1e-6])
        top = np.nextafter(np.nextafter(123.456 + 1e-6, np.inf), np.inf)
        values = np.array([123.456, top])
        f = LinearSpline1D(knots, values, 1.0, 1.0)
        assert lipschitz(f) > 1.0
        snapped = snap_to_one_lipschitz(f)
        assert lipschitz(snapped) <= 1.0
        np.testing.assert_allclose(snapped.values, values, rtol=0.0, atol=1e-13)

    def test_snap_keeps_steep_regions(self):
        """Test genuinely steep regions are left alone."""
        f = LinearSpline1D(np.array([0.0, 1.0]), np.array([0.0, 1.5]), 1.0, 1.0)
        assert snap_to_one_lipschitz(f) is f

    def test_offset_splines_verify(self, rng):
        """Test factor Lipschitz constants stay within 1e-12 of one."""
        for _ in range(300):
            g = offset_spline(rng)
            report = verify_chain(g, decompose(g))
            assert report.passed, (g, report)
            assert max(report.factor_lipschitz) <= 1.0 + 1e-12
