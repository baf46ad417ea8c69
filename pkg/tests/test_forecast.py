"""Reference readout forecasts, horizon arithmetic, and surface expansion."""

import json

import numpy as np
import pytest

from conftest import trend_curve
from mortrend.curve_registration import ShapeParams
from mortrend.errors import CountryMismatch, HorizonExceedsReference, UnknownAge
from mortrend.forecast import (
    TrendForecast,
    forecast_rate_at,
    forecast_surface,
    forecast_to_csv,
    forecast_to_json,
    forecast_via_drift,
    forecast_via_reference,
    max_horizon,
)
from mortrend.kernel_smoothing import grid_over
from mortrend.lee_carter import LCDecomposition, fit_drift
from mortrend.kernel_smoothing import CurveSample


def single_age_dec(a=-4.0, b=1.0, country="c"):
    return LCDecomposition(
        country_id=country,
        gender="total",
        ages=np.array([0, 1]),
        years=np.array([2008, 2009, 2010]),
        a_x=np.array([a, a - 1.0]),
        b_x=np.array([b, 1.0 - b]),
        k_t=np.array([1.0, 0.0, -1.0]),
        residual_variance=0.0,
    )


# ------------------------------------------------------------- max_horizon


def test_max_horizon_delayed_country_reaches_past_reference_end():
    # reference through 2012, target delayed 22.621 years, record ends 2010
    ref = trend_curve(1947.0, 2012.0)
    p = ShapeParams(1.205, 22.621, 1.000)
    assert max_horizon(ref, p, last_obs_year=2010) == 24


def test_max_horizon_zero_when_reference_ends_at_last_observation():
    ref = trend_curve(1950.0, 2010.0)
    assert max_horizon(ref, ShapeParams(1.0, 0.0, 1.0), 2010) == 0


def test_max_horizon_identity_params_reach_reference_end():
    ref = trend_curve(1950.0, 2050.0)
    assert max_horizon(ref, ShapeParams(1.0, 0.0, 1.0), 2010) == 40


def test_max_horizon_dilation_stretches_reach():
    # theta3 = 1.1 around the epoch origin: sup maps 2000 -> 2200 + theta2
    ref = trend_curve(1900.0, 2000.0)
    assert max_horizon(ref, ShapeParams(1.0, -150.0, 1.1), 2010) == 40


def test_max_horizon_zero_when_no_integer_year_lands_inside():
    # sliver domain between consecutive back-mapped years
    ref = trend_curve(2011.3, 2011.7, step=0.05)
    assert max_horizon(ref, ShapeParams(1.0, 0.0, 1.0), 2010) == 0


# -------------------------------------------------------------- via reference


def test_identity_readout_matches_reference():
    ref = trend_curve(1950.0, 2050.0)
    tf = forecast_via_reference(ref, ShapeParams(1.0, 0.0, 1.0), 2010, 40, "x")
    assert list(tf.years) == list(range(2011, 2051))
    expect = np.interp(np.arange(2011.0, 2051.0), ref.eval_grid, ref.values)
    assert np.allclose(tf.k_values, expect, atol=1e-12)
    assert tf.source == "common_trend"


def test_forecast_applies_all_four_parameters():
    ref = trend_curve(1900.0, 2100.0)
    p = ShapeParams(1.5, 10.0, 1.0, 3.0, mode="four_param")
    tf = forecast_via_reference(ref, p, 2000, 5, "x")
    s = (tf.years - 10.0) / 1.0
    expect = 1.5 * np.interp(s, ref.eval_grid, ref.values) + 3.0
    assert np.allclose(tf.k_values, expect, atol=1e-12)


def test_horizon_error_reports_feasible_h():
    ref = trend_curve(1947.0, 2012.0)
    p = ShapeParams(1.205, 22.621, 1.000)
    with pytest.raises(HorizonExceedsReference) as err:
        forecast_via_reference(ref, p, 2010, 30, "x")
    assert err.value.max_feasible_h == 24
    tf = forecast_via_reference(ref, p, 2010, 24, "x")
    assert tf.years[-1] == 2034


def test_forecast_rejects_nonpositive_horizon():
    ref = trend_curve(1950.0, 2050.0)
    with pytest.raises(ValueError):
        forecast_via_reference(ref, ShapeParams(1.0, 0.0, 1.0), 2010, 0)


def test_forecast_rejects_years_before_reference_start():
    ref = trend_curve(2015.0, 2050.0)
    with pytest.raises(HorizonExceedsReference):
        forecast_via_reference(ref, ShapeParams(1.0, 0.0, 1.0), 2010, 3, "x")


# ------------------------------------------------------------------- drift


def test_forecast_via_drift_matches_closed_form():
    k = CurveSample(
        times=np.arange(2000.0, 2004.0), values=np.array([0.0, -2.0, -2.0, -4.0])
    )
    model = fit_drift(k)
    tf = forecast_via_drift(model, 3, "x")
    assert tf.source == "drift"
    assert list(tf.years) == [2004, 2005, 2006]
    assert np.allclose(tf.k_values, -4.0 + model.drift * np.array([1.0, 2.0, 3.0]))
    assert tf.params_used is None


# ----------------------------------------------------------------- surface


def test_surface_single_age_analytic():
    dec = single_age_dec(a=-4.0, b=1.0)
    tf = TrendForecast("c", np.array([2011]), np.array([-1.0]), "common_trend")
    surf = forecast_surface(dec, tf)
    assert surf.rates[0, 0] == pytest.approx(np.exp(-5.0))
    assert list(surf.years) == [2011]
    assert surf.country_id == "c"


def test_surface_country_mismatch():
    dec = single_age_dec(country="a")
    tf = TrendForecast("b", np.array([2011]), np.array([-1.0]), "common_trend")
    with pytest.raises(CountryMismatch):
        forecast_surface(dec, tf)


def test_surface_declining_k_gives_declining_rates():
    dec = single_age_dec(a=-3.0, b=0.7)
    tf = TrendForecast(
        "c", np.array([2011, 2012, 2013]), np.array([-1.0, -2.0, -3.0]), "common_trend"
    )
    surf = forecast_surface(dec, tf)
    assert np.all(np.diff(surf.rates[0]) < 0)


def test_rate_at_reads_single_cell():
    dec = single_age_dec(a=-4.0, b=1.0)
    tf = TrendForecast("c", np.array([2011, 2012]), np.array([-1.0, -2.0]), "common_trend")
    assert forecast_rate_at(dec, tf, age=0, year=2012) == pytest.approx(np.exp(-6.0))
    with pytest.raises(UnknownAge):
        forecast_rate_at(dec, tf, age=9, year=2012)
    with pytest.raises(ValueError):
        forecast_rate_at(dec, tf, age=0, year=2040)


# ------------------------------------------------------------ serialization


def test_forecast_json_roundtrips_values():
    ref = trend_curve(1950.0, 2050.0)
    tf = forecast_via_reference(ref, ShapeParams(1.2, 3.0, 1.0), 2010, 5, "x")
    payload = json.loads(forecast_to_json(tf))
    assert payload["country_id"] == "x"
    assert payload["years"] == list(range(2011, 2016))
    assert payload["params_used"]["theta1"] == 1.2
    assert np.allclose(payload["k_values"], tf.k_values)


def test_forecast_csv_is_exact():
    tf = TrendForecast(
        "c", np.array([2011, 2012]), np.array([-1.5, 0.123456789012345]), "drift"
    )
    text = forecast_to_csv(tf)
    lines = text.strip().splitlines()
    assert lines[0] == "year,k"
    assert [float(ln.split(",")[1]) for ln in lines[1:]] == [-1.5, 0.123456789012345]


def test_trend_forecast_validates_source():
    with pytest.raises(ValueError):
        TrendForecast("c", np.array([2011]), np.array([0.0]), "oracle")
