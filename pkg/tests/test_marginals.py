import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fleetcast.marginals import (
    ForecastPanel,
    QuantileForecast,
    QuantileGrid,
    cdf_eval,
    quantile_eval,
    repair_monotone,
)


def make_forecast(levels, values, lo=0.0, hi=None):
    return QuantileForecast(
        grid=QuantileGrid(np.asarray(levels, float)),
        values=np.asarray(values, float),
        support_lo=lo,
        support_hi=hi,
    )


@pytest.fixture
def simple():
    # levels (0.25, 0.5, 0.75), values (10, 20, 30), support [0, 40]
    return make_forecast([0.25, 0.5, 0.75], [10.0, 20.0, 30.0], lo=0.0, hi=40.0)


class TestRepairMonotone:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ([1, 2, 3], [1, 2, 3]),
            ([1, 3, 2], [1, 3, 3]),
            ([5, 4, 4, 6], [5, 5, 5, 6]),
        ],
    )
    def test_running_max(self, raw, expected):
        assert repair_monotone(raw).tolist() == expected

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            repair_monotone([])

    def test_nan_is_error(self):
        with pytest.raises(ValueError):
            repair_monotone([1.0, np.nan])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    def test_idempotent(self, raw):
        once = repair_monotone(raw)
        assert np.array_equal(repair_monotone(once), once)
        assert (np.diff(once) >= 0).all()

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    def test_sorted_input_unchanged(self, raw):
        raw = sorted(raw)
        assert repair_monotone(raw).tolist() == raw


class TestGrid:
    def test_default_is_99_percentiles(self):
        grid = QuantileGrid.default()
        assert grid.k == 99
        assert grid.levels[0] == pytest.approx(0.01)
        assert grid.levels[-1] == pytest.approx(0.99)

    @pytest.mark.parametrize(
        "levels",
        [[0.5], [0.5, 0.5], [0.7, 0.3], [0.0, 0.5], [0.5, 1.0]],
    )
    def test_invalid_levels_rejected(self, levels):
        with pytest.raises(ValueError):
            QuantileGrid(np.asarray(levels, float))


class TestForecastConstruction:
    def test_crossings_repaired_and_flagged(self):
        f = make_forecast([0.25, 0.5, 0.75], [10.0, 30.0, 20.0], hi=40.0)
        assert f.values.tolist() == [10.0, 30.0, 30.0]
        assert f.repaired

    def test_clean_input_not_flagged(self, simple):
        assert not simple.repaired

    def test_unknown_capacity_default(self):
        f = make_forecast([0.25, 0.5, 0.75], [10.0, 20.0, 30.0])
        assert f.support_hi == pytest.approx(30.0 + 20.0 * 0.05)

    def test_support_violations_rejected(self):
        with pytest.raises(ValueError):
            make_forecast([0.25, 0.75], [10.0, 20.0], lo=15.0)
        with pytest.raises(ValueError):
            make_forecast([0.25, 0.75], [10.0, 20.0], hi=15.0)


class TestCdfEval:
    def test_exact_knot(self, simple):
        assert cdf_eval(simple, 20.0) == 0.5

    def test_interior_segment(self, simple):
        assert cdf_eval(simple, 15.0) == pytest.approx(0.375, abs=1e-15)

    def test_upper_tail_against_interp_oracle(self, simple):
        # independent oracle: plain linear interpolation on the augmented knots
        expect = np.interp(35.0, [0, 10, 20, 30, 40], [0, 0.25, 0.5, 0.75, 1.0])
        assert expect == 0.875
        assert cdf_eval(simple, 35.0) == pytest.approx(expect, abs=1e-15)

    def test_support_boundaries(self, simple):
        assert cdf_eval(simple, 0.0) == 0.0
        assert cdf_eval(simple, -1.0) == 0.0
        assert cdf_eval(simple, 40.0) == 1.0
        assert cdf_eval(simple, 41.0) == 1.0

    def test_infinite_support_saturates(self):
        f = make_forecast([0.25, 0.75], [10.0, 20.0], lo=-np.inf, hi=np.inf)
        assert cdf_eval(f, 5.0) == 0.0
        assert cdf_eval(f, 25.0) == 1.0

    def test_flat_run_maps_to_level_midpoint(self):
        f = make_forecast([0.2, 0.4, 0.6, 0.8], [0.0, 0.0, 0.0, 5.0], hi=10.0)
        assert cdf_eval(f, 0.0) == pytest.approx((0.2 + 0.6) / 2)

    def test_nan_rejected(self, simple):
        with pytest.raises(ValueError):
            cdf_eval(simple, float("nan"))

    def test_vectorized_matches_scalar(self, simple):
        xs = np.linspace(-5.0, 45.0, 101)
        vec = cdf_eval(simple, xs)
        assert vec.tolist() == [cdf_eval(simple, float(x)) for x in xs]


class TestQuantileEval:
    def test_exact_knot(self, simple):
        assert quantile_eval(simple, 0.5) == 20.0

    def test_inverse_of_interior(self, simple):
        assert quantile_eval(simple, 0.375) == pytest.approx(15.0, abs=1e-12)

    def test_support_endpoints(self, simple):
        assert quantile_eval(simple, 0.0) == 0.0
        assert quantile_eval(simple, 1.0) == 40.0

    @pytest.mark.parametrize("u", [-0.1, 1.1, float("nan")])
    def test_out_of_range_rejected(self, simple, u):
        with pytest.raises(ValueError):
            quantile_eval(simple, u)

    def test_infinite_support_clamps_to_outer_values(self):
        f = make_forecast([0.25, 0.75], [10.0, 20.0], lo=-np.inf, hi=np.inf)
        assert quantile_eval(f, 0.0) == 10.0
        assert quantile_eval(f, 1.0) == 20.0


# -- property tests --------------------------------------------------------

@st.composite
def strict_forecasts(draw):
    """Forecasts with strictly increasing knots and sane magnitudes."""
    k = draw(st.integers(min_value=2, max_value=12))
    level_gaps = draw(
        st.lists(st.floats(0.01, 0.2), min_size=k - 1, max_size=k - 1)
    )
    first = draw(st.floats(0.01, 0.3))
    levels = np.minimum(first + np.concatenate([[0.0], np.cumsum(level_gaps)]), 0.99)
    # keep strictly increasing after the cap
    levels = first + np.concatenate([[0.0], np.cumsum(level_gaps)])
    if levels[-1] >= 0.99:
        levels = 0.01 + (levels - levels[0]) * (0.98 / (levels[-1] - levels[0]))
    value_gaps = draw(st.lists(st.floats(0.5, 50.0), min_size=k - 1, max_size=k - 1))
    base = draw(st.floats(0.0, 100.0))
    values = base + np.concatenate([[0.0], np.cumsum(value_gaps)])
    hi_extra = draw(st.floats(0.5, 100.0))
    return make_forecast(levels, values, lo=0.0, hi=float(values[-1]) + hi_extra)


@settings(max_examples=150, deadline=None)
@given(f=strict_forecasts(), t=st.floats(0.0, 1.0))
def test_roundtrip_on_strict_segments(f, t):
    lv = f.grid.levels
    u = float(lv[0] + t * (lv[-1] - lv[0]))
    x = quantile_eval(f, u)
    assert abs(cdf_eval(f, x) - u) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(f=strict_forecasts(), u=st.tuples(st.floats(0, 1), st.floats(0, 1)))
def test_quantile_monotone(f, u):
    u1, u2 = sorted(u)
    assert quantile_eval(f, u1) <= quantile_eval(f, u2)


@settings(max_examples=100, deadline=None)
@given(f=strict_forecasts(), x=st.tuples(st.floats(-50, 500), st.floats(-50, 500)))
def test_cdf_monotone_and_in_range(f, x):
    x1, x2 = sorted(x)
    u1, u2 = cdf_eval(f, x1), cdf_eval(f, x2)
    assert u1 <= u2
    assert 0.0 <= u1 <= 1.0 and 0.0 <= u2 <= 1.0


@settings(max_examples=100, deadline=None)
@given(f=strict_forecasts(), u=st.floats(0, 1))
def test_quantile_within_support(f, u):
    x = quantile_eval(f, u)
    assert f.support_lo <= x <= f.support_hi


def test_panel_shape_checked():
    grid = QuantileGrid.default()
    with pytest.raises(ValueError):
        ForecastPanel(
            sites=["a", "b"],
            times=[1, 2, 3],
            grid=grid,
            cells=np.full((2, 2), None, dtype=object),
        )
