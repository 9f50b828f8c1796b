"""
Tests for core/cpwl1d.py - exact scalar CPWL algebra.
"""

import math

import numpy as np
import pytest

from core.cpwl1d import (
    LinearSpline1D,
    compose,
    evaluate,
    evaluation_grid,
    grid_distance,
    linear_combination,
    lipschitz,
    negate,
    pointwise_max,
    pointwise_min,
    simplify,
    slope_at,
    slope_profile,
    splice,
    spline_from_samples,
    tv2,
)
from core.errors import SchemaError, SplineError


def shifted_abs(shift: float, scale: float = 1.0) -> LinearSpline1D:
    """scale * |x - shift|."""
    return LinearSpline1D(np.array([shift]), np.array([0.0]), -scale, scale)


def sawtooth_factor(k: int) -> LinearSpline1D:
    return LinearSpline1D(np.array([0.0]), np.array([-(2.0 ** -k)]), -1.0, 1.0)


def random_spline(rng: np.random.Generator, max_knots: int = 6, slope_scale: float = 1.5):
    n = int(rng.integers(0, max_knots + 1))
    knots = np.sort(rng.uniform(-3.0, 3.0, n))
    knots = knots[np.concatenate(([True], np.diff(knots) > 1e-3))] if n else knots
    slopes = slope_scale * rng.standard_normal(knots.size + 1)
    return LinearSpline1D.from_slopes(knots, slopes, float(rng.standard_normal()))


class TestConstruction:
    """Tests for LinearSpline1D validation and constructors."""

    def test_rejects_unsorted_knots(self):
        """Test knots must be strictly increasing."""
        with pytest.raises(SplineError):
            LinearSpline1D(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 0.0, 0.0)

    def test_rejects_repeated_knots(self):
        """Test equal knots are rejected."""
        with pytest.raises(SplineError):
            LinearSpline1D(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.0, 0.0)

    def test_rejects_length_mismatch(self):
        """Test one value per knot."""
        with pytest.raises(SplineError):
            LinearSpline1D(np.array([0.0, 1.0]), np.array([0.0]), 0.0, 0.0)

    def test_rejects_non_finite(self):
        """Test NaN and inf are rejected."""
        with pytest.raises(SplineError):
            LinearSpline1D(np.array([0.0]), np.array([math.nan]), 0.0, 0.0)
        with pytest.raises(SplineError):
            LinearSpline1D(np.array([0.0]), np.array([0.0]), math.inf, 0.0)

    def test_affine_needs_single_slope(self):
        """Test an affine spline cannot have two slopes."""
        with pytest.raises(SplineError):
            LinearSpline1D(np.empty(0), np.empty(0), 1.0, 2.0)

    def test_arrays_are_read_only(self, hat):
        """Test splines are immutable."""
        with pytest.raises(ValueError):
            hat.knots[0] = 5.0

    def test_value_at_zero_recomputed(self, hat):
        """Test value_at_zero equals f(0) for knotted splines."""
        assert hat.value_at_zero == 1.0

    def test_from_slopes(self):
        """Test building from region slopes."""
        f = LinearSpline1D.from_slopes([0.0, 1.0], [-1.0, 2.0, 0.0], 1.0)
        assert f.values.tolist() == [1.0, 3.0]
        assert f.slopes.tolist() == [-1.0, 2.0, 0.0]

    def test_from_slopes_count(self):
        """Test one slope per region is required."""
        with pytest.raises(SplineError):
            LinearSpline1D.from_slopes([0.0], [1.0])


class TestEvaluate:
    """Tests for evaluate and slope_at."""

    def test_hat_knot_value(self, hat):
        """Test value at a knot."""
        assert evaluate(hat, 0.0) == 1.0

    def test_hat_interpolation(self, hat):
        """Test linear interpolation between knots."""
        assert evaluate(hat, 0.5) == 0.5

    def test_outer_rays(self, abs_spline):
        """Test outer regions are unbounded rays."""
        assert evaluate(abs_spline, -1e6) == 1e6
        assert evaluate(abs_spline, 2.5) == 2.5

    def test_affine_identity(self):
        """Test the identity case."""
        assert evaluate(LinearSpline1D.affine(1.0, 0.0), 7.25) == 7.25

    def test_vectorised(self, hat):
        """Test array input gives array output."""
        out = evaluate(hat, np.array([-2.0, -0.5, 0.0, 0.5, 2.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0, 0.5, 0.0])

    def test_rejects_non_finite_point(self, hat):
        """Test evaluation at NaN raises."""
        with pytest.raises(SplineError):
            evaluate(hat, math.nan)

    def test_slope_at_knot_takes_right_region(self, hat):
        """Test the boundary flag and right-region convention."""
        assert slope_at(hat, 0.0) == (-1.0, True)
        assert slope_at(hat, -0.5) == (1.0, False)
        assert slope_at(hat, 5.0) == (0.0, False)


class TestLipschitzAndTv2:
    """Tests for lipschitz and tv2."""

    def test_lipschitz_examples(self, hat):
        """Test max absolute slope."""
        assert lipschitz(hat) == 1.0
        assert lipschitz(sawtooth_factor(1)) == 1.0
        assert lipschitz(LinearSpline1D.affine(-3.0, 2.0)) == 3.0

    def test_tv2_hat(self, hat):
        """Test 1 + 2 + 1."""
        assert tv2(hat) == 4.0

    def test_tv2_scaled_abs(self):
        """Test slopes -2, 2 give 4."""
        assert tv2(shifted_abs(0.5, 2.0)) == 4.0

    def test_tv2_unit_abs(self):
        """Test |x| - 1/2 gives 2."""
        assert tv2(sawtooth_factor(1)) == 2.0

    def test_tv2_affine_is_zero(self):
        """Test affine functions have no slope change."""
        assert tv2(LinearSpline1D.affine(4.0, 1.0)) == 0.0

    def test_tv2_ignores_redundant_knots(self, hat):
        """Test adding collinear knots does not change tv2."""
        padded = LinearSpline1D(
            np.array([-1.0, -0.5, 0.0, 0.25, 1.0, 3.0]),
            np.array([0.0, 0.5, 1.0, 0.75, 0.0, 0.0]),
            0.0,
            0.0,
        )
        assert tv2(padded) == tv2(hat)
        assert simplify(padded).region_count == 4

    def test_slope_profile(self, hat):
        """Test the derived region view."""
        profile = slope_profile(hat)
        assert profile.region_count == 4
        assert profile.slopes == (0.0, 1.0, -1.0, 0.0)
        assert profile.breakpoints == (-1.0, 0.0, 1.0)


class TestSimplify:
    """Tests for the canonical form."""

    def test_collinear_becomes_affine(self):
        """Test all-equal slopes collapse to an affine spline."""
        f = LinearSpline1D(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0]), 1.0, 1.0)
        s = simplify(f)
        assert s.is_affine
        assert s.left_slope == 1.0
        assert s.value_at_zero == 1.0

    def test_idempotent(self, hat):
        """Test simplify of a simplified spline is unchanged."""
        once = simplify(hat)
        twice = simplify(once)
        assert twice.knots.tolist() == once.knots.tolist()
        assert twice.values.tolist() == once.values.tolist()

    def test_near_equal_slopes_merge(self):
        """Test slope differences below the tolerance are dropped."""
        f = LinearSpline1D(np.array([0.0]), np.array([0.0]), 1.0, 1.0 + 1e-14)
        assert simplify(f).is_affine


class TestCompose:
    """Tests for exact composition."""

    def test_sawtooth_two(self):
        """Test sigma_2 o sigma_1 has four regions and TV2 6."""
        f = compose(sawtooth_factor(2), sawtooth_factor(1))
        assert f.region_count == 4
        assert f.knots.tolist() == [-0.5, 0.0, 0.5]
        assert tv2(f) == 6.0

    def test_identity_neutral(self, hat):
        """Test composing with the identity on either side."""
        identity = LinearSpline1D.identity()
        assert grid_distance(compose(identity, hat), hat) == 0.0
        assert grid_distance(compose(hat, identity), hat) == 0.0

    def test_constant_inner(self, hat):
        """Test a constant inner spline gives a constant."""
        f = compose(hat, LinearSpline1D.constant(0.5))
        assert f.is_affine
        assert f.left_slope == 0.0
        assert f.value_at_zero == 0.5

    def test_flat_inner_region_hitting_outer_knot(self, abs_spline):
        """Test a zero-slope inner region adds no knot."""
        clamp = LinearSpline1D(np.array([-1.0, 1.0]), np.array([0.0, 0.0]), 1.0, -1.0)
        f = compose(abs_spline, clamp)
        np.testing.assert_allclose(evaluate(f, [-3.0, -2.0, 0.0, 2.0, 3.0]), [2.0, 1.0, 0.0, 1.0, 2.0])
        assert f.knots.tolist() == [-1.0, 1.0]

    def test_outer_slopes_follow_inner_sign(self, abs_spline):
        """Test decreasing inner maps onto the outer left ray."""
        f = compose(LinearSpline1D(np.array([0.0]), np.array([0.0]), 2.0, 0.5), LinearSpline1D.affine(-1.0))
        assert f.left_slope == -0.5
        assert f.right_slope == -2.0

    def test_grid_agreement_random(self, rng):
        """Test compose(f, g)(x) == f(g(x)) for random splines."""
        for _ in range(50):
            f, g = random_spline(rng), random_spline(rng)
            h = compose(f, g)
            grid = evaluation_grid(f, g, h, points=2000)
            np.testing.assert_allclose(
                evaluate(h, grid), evaluate(f, evaluate(g, grid)), rtol=0.0, atol=1e-9
            )

    def test_lipschitz_submultiplicative(self, rng):
        """Test Lip(f o g) <= Lip(f) Lip(g)."""
        for _ in range(50):
            f, g = random_spline(rng), random_spline(rng)
            assert lipschitz(compose(f, g)) <= lipschitz(f) * lipschitz(g) * (1 + 1e-12) + 1e-12


class TestPointwiseExtrema:
    """Tests for pointwise_max and pointwise_min."""

    def test_max_of_x_and_minus_x(self):
        """Test max(x, -x) = |x|."""
        f = pointwise_max(LinearSpline1D.identity(), LinearSpline1D.affine(-1.0))
        assert f.knots.tolist() == [0.0]
        assert f.slopes.tolist() == [-1.0, 1.0]

    def test_max_with_itself(self, hat):
        """Test max(f, f) = f."""
        assert grid_distance(pointwise_max(hat, hat), hat) == 0.0

    def test_min_with_constant(self):
        """Test min(x, 1) has a knot at 1."""
        f = pointwise_min(LinearSpline1D.identity(), LinearSpline1D.constant(1.0))
        assert f.knots.tolist() == [1.0]
        assert f.slopes.tolist() == [1.0, 0.0]

    def test_parallel_affine(self):
        """Test parallel lines return the larger one."""
        low = LinearSpline1D.affine(2.0, -1.0)
        high = LinearSpline1D.affine(2.0, 3.0)
        assert pointwise_max(low, high) is high
        assert pointwise_min(low, high) is low

    def test_crossing_on_outer_ray(self, hat):
        """Test a crossing left of every knot is inserted."""
        f = pointwise_max(hat, LinearSpline1D.affine(-1.0, -3.0))
        assert evaluate(f, -3.0) == 0.0
        assert evaluate(f, -5.0) == 2.0
        assert f.knots[0] == pytest.approx(-3.0)

    def test_random_grid_agreement(self, rng):
        """Test against numpy max/min on the grid."""
        for _ in range(50):
            f, g = random_spline(rng), random_spline(rng)
            hi, lo = pointwise_max(f, g), pointwise_min(f, g)
            grid = evaluation_grid(f, g, hi, lo, points=2000)
            fv, gv = evaluate(f, grid), evaluate(g, grid)
            np.testing.assert_allclose(evaluate(hi, grid), np.maximum(fv, gv), atol=1e-9)
            np.testing.assert_allclose(evaluate(lo, grid), np.minimum(fv, gv), atol=1e-9)


class TestLinearAlgebra:
    """Tests for linear_combination, negate and splice."""

    def test_linear_combination(self, hat, abs_spline):
        """Test exact weighted sums."""
        f = linear_combination([hat, abs_spline], [2.0, -1.0], constant=0.5)
        grid = evaluation_grid(f, hat, abs_spline, points=500)
        np.testing.assert_allclose(
            evaluate(f, grid), 2.0 * evaluate(hat, grid) - np.abs(grid) + 0.5, atol=1e-12
        )

    def test_linear_combination_affine(self):
        """Test sums of affine splines stay affine."""
        f = linear_combination([LinearSpline1D.affine(1.0, 1.0), LinearSpline1D.affine(2.0)], [1.0, 1.0], 3.0)
        assert f.is_affine
        assert f.left_slope == 3.0
        assert f.value_at_zero == 4.0

    def test_negate(self, hat):
        """Test negation flips values and slopes."""
        f = negate(hat)
        assert evaluate(f, 0.0) == -1.0
        assert tv2(f) == tv2(hat)

    def test_splice(self):
        """Test joining two pieces at a point."""
        f = splice(LinearSpline1D.identity(), LinearSpline1D.constant(0.0), 0.0)
        assert f.knots.tolist() == [0.0]
        assert f.slopes.tolist() == [1.0, 0.0]

    def test_splice_discontinuous(self):
        """Test a jump is rejected."""
        with pytest.raises(SplineError):
            splice(LinearSpline1D.identity(), LinearSpline1D.constant(1.0), 0.0)


class TestSplineFromSamples:
    """Tests for spline_from_samples."""

    def test_two_points(self):
        """Test two samples give knots 0, 1 and Lipschitz 1."""
        f = spline_from_samples([(0.0, 0.0), (1.0, 1.0)])
        assert f.knots.tolist() == [0.0, 1.0]
        assert lipschitz(f) == 1.0

    def test_clamped_abs(self):
        """Test |x| on [-1, 1], constant outside."""
        f = spline_from_samples([(1.0, 1.0), (-1.0, 1.0), (0.0, 0.0)])
        np.testing.assert_allclose(evaluate(f, [-3.0, -0.5, 0.0, 0.5, 3.0]), [1.0, 0.5, 0.0, 0.5, 1.0])
        assert f.left_slope == 0.0
        assert f.right_slope == 0.0

    def test_region_count_bound(self, rng):
        """Test at most N - 1 interior regions."""
        xs = np.sort(rng.uniform(-2.0, 2.0, 5))
        ys = np.cumsum(rng.uniform(0.0, 1.0, 5))
        f = spline_from_samples(zip(xs, ys))
        assert f.knots.size - 1 <= 4
        np.testing.assert_allclose(evaluate(f, xs), ys, atol=1e-12)

    def test_single_sample(self):
        """Test one sample gives a constant."""
        f = spline_from_samples([(2.0, -1.5)])
        assert f.is_affine
        assert evaluate(f, 100.0) == -1.5

    def test_duplicate_consistent(self):
        """Test identical duplicates are merged."""
        f = spline_from_samples([(0.0, 1.0), (0.0, 1.0), (1.0, 2.0)])
        assert f.knots.tolist() == [0.0, 1.0]

    def test_inconsistent_samples(self):
        """Test conflicting duplicates raise."""
        with pytest.raises(SplineError, match="inconsistent samples"):
            spline_from_samples([(0.0, 1.0), (0.0, 2.0)])

    def test_empty(self):
        """Test no samples raises."""
        with pytest.raises(SplineError):
            spline_from_samples([])


class TestSerialization:
    """Tests for spline.v1 documents."""

    def test_round_trip(self, hat):
        """Test to_dict then from_dict."""
        again = LinearSpline1D.from_dict(hat.to_dict())
        assert grid_distance(again, hat) == 0.0

    def test_affine_document(self):
        """Test the affine form."""
        f = LinearSpline1D.affine(-2.0, 0.5)
        assert f.to_dict() == {"affine": {"slope": -2.0, "value_at_zero": 0.5}}
        assert evaluate(LinearSpline1D.from_dict(f.to_dict()), 1.0) == -1.5

    def test_missing_field(self):
        """Test missing slopes name the field."""
        with pytest.raises(SchemaError) as info:
            LinearSpline1D.from_dict({"knots": [0.0], "values": [0.0], "left_slope": 1.0})
        assert info.value.field == "spline.right_slope"

    def test_bad_values(self):
        """Test a non-list values entry is rejected."""
        with pytest.raises(SchemaError) as info:
            LinearSpline1D.from_dict({"knots": [0.0], "values": "x", "left_slope": 0, "right_slope": 0})
        assert info.value.field == "spline.values"

    def test_unsorted_knots_in_document(self):
        """Test validation errors become schema errors."""
        with pytest.raises(SchemaError):
            LinearSpline1D.from_dict(
                {"knots": [1.0, 0.0], "values": [0.0, 0.0], "left_slope": 0, "right_slope": 0}
            )


class TestEvaluationGrid:
    """Tests for the grid oracle."""

    def test_contains_knots_and_midpoints(self, hat):
        """Test knots and midpoints are on the grid."""
        grid = evaluation_grid(hat, points=100)
        for x in (-1.0, -0.5, 0.0, 0.5, 1.0):
            assert np.any(grid == x)

    def test_covers_three_times_the_range(self, hat):
        """Test the grid extends one span plus margin on each side."""
        grid = evaluation_grid(hat, points=100, margin=1.0)
        assert grid[0] == pytest.approx(-4.0)
        assert grid[-1] == pytest.approx(4.0)

    def test_grid_distance_outer_slope(self):
        """Test outer-slope mismatch is part of the distance."""
        f = LinearSpline1D(np.array([0.0]), np.array([0.0]), 0.0, 1.0)
        g = LinearSpline1D(np.array([0.0]), np.array([0.0]), 0.0, 1.5)
        assert grid_distance(f, g) >= 0.5
