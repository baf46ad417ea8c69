"""Residual bootstrap: conditional models, resampling, and prediction bands."""

import numpy as np
import pytest

from conftest import declining_trend, trend_curve
from mortrend.bootstrap import (
    BootstrapConfig,
    bands_to_csv,
    bootstrap_prediction,
    fit_conditional_model,
    resample_series,
    theta_samples_to_csv,
)
from mortrend.errors import InsufficientData, TooFewConverged
from mortrend.kernel_smoothing import CurveSample, SmoothedCurve, grid_over


def k_series(values, start=2000.0):
    values = np.asarray(values, dtype=float)
    return CurveSample(times=start + np.arange(values.size), values=values)


def line_ref(lo, hi, slope=-1.0, intercept=2000.0, step=0.25):
    grid = grid_over(lo, hi, step)
    return SmoothedCurve(
        eval_grid=grid,
        values=slope * grid + intercept,
        domain=(float(grid[0]), float(grid[-1])),
        bandwidth=1.0,
        source_n=grid.size,
    )


def line_sample(lo, hi, slope=-1.0, intercept=2000.0):
    years = np.arange(lo, hi + 1.0)
    return CurveSample(times=years, values=slope * years + intercept)


def tanh_sample(lo, hi):
    years = np.arange(lo, hi + 1.0)
    return CurveSample(times=years, values=declining_trend(years))


# --------------------------------------------------------- conditional model


def test_planted_ar1_recovered():
    k = np.empty(40)
    k[0] = 5.0
    for t in range(1, 40):
        k[t] = 0.9 * k[t - 1] + 1.0
    model = fit_conditional_model(k_series(k), order=1, rw_drift=False)
    assert model.coefficients == pytest.approx([1.0, 0.9], abs=1e-8)
    assert np.max(np.abs(model.residuals)) < 1e-8


def test_rw_drift_on_linear_series():
    model = fit_conditional_model(k_series([10.0, 8.0, 6.0, 4.0, 2.0]))
    assert model.coefficients == pytest.approx([-2.0, 1.0])
    assert np.allclose(model.residuals, 0.0)
    assert model.step(np.array([3.0])) == pytest.approx(1.0)


def test_residuals_come_back_centered():
    rng = np.random.default_rng(3)
    k = np.cumsum(rng.normal(-0.5, 1.0, size=25))
    model = fit_conditional_model(k_series(k))
    assert model.residuals.mean() == pytest.approx(0.0, abs=1e-12)


def test_too_short_series_rejected():
    with pytest.raises(InsufficientData):
        fit_conditional_model(k_series([1.0, 2.0, 3.0]), order=2, rw_drift=False)
    with pytest.raises(InsufficientData):
        fit_conditional_model(k_series([1.0, 2.0, 3.0]))


def test_model_argument_validation():
    k = k_series([1.0, 2.0, 3.0, 4.0, 5.0])
    with pytest.raises(ValueError):
        fit_conditional_model(k, order=0)
    with pytest.raises(ValueError):
        fit_conditional_model(k, order=2, rw_drift=True)


# ---------------------------------------------------------------- resampling


def test_zero_residuals_give_deterministic_path():
    model = fit_conditional_model(k_series([10.0, 8.0, 6.0, 4.0, 2.0]))
    out = resample_series(model, np.zeros(4), 5, seed=0)
    assert np.allclose(out.values, [10.0, 8.0, 6.0, 4.0, 2.0])
    assert np.array_equal(out.times, model.times)


def test_same_seed_same_series():
    rng = np.random.default_rng(11)
    model = fit_conditional_model(k_series(np.cumsum(rng.normal(-1, 1, 20))))
    a = resample_series(model, model.residuals, 20, seed=42)
    b = resample_series(model, model.residuals, 20, seed=42)
    c = resample_series(model, model.residuals, 20, seed=43)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_resample_extends_times_past_observed_record():
    model = fit_conditional_model(k_series([5.0, 4.0, 3.0, 2.0, 1.0]))
    out = resample_series(model, np.zeros(4), 8, seed=0)
    assert list(out.times) == [2000.0, 2001.0, 2002.0, 2003.0, 2004.0, 2005.0, 2006.0, 2007.0]


def test_resample_needs_room_for_initial_values():
    model = fit_conditional_model(k_series([5.0, 4.0, 3.0, 2.0, 1.0]))
    with pytest.raises(ValueError):
        resample_series(model, model.residuals, 1, seed=0)


def test_resampled_endpoint_mean_matches_model():
    rng = np.random.default_rng(7)
    n = 12
    k = -1.5 * np.arange(n) + rng.normal(0.0, 0.8, n)
    model = fit_conditional_model(k_series(k))
    expect = k[0] + (n - 1) * model.coefficients[0]
    draws = np.empty(10_000)
    for b, child in enumerate(np.random.SeedSequence(7).spawn(draws.size)):
        draws[b] = resample_series(model, model.residuals, n, child).values[-1]
    se = np.sqrt((n - 1) * np.mean(model.residuals**2) / draws.size)
    assert abs(draws.mean() - expect) < 3 * se


# ----------------------------------------------------------------- full runs


def test_noiseless_series_gives_zero_width_bands():
    ref = line_ref(1950.0, 2050.0)
    k_obs = line_sample(1990.0, 2010.0)
    cfg = BootstrapConfig(replicates=8, horizon=10, seed=1)
    run = bootstrap_prediction(ref, k_obs, cfg, country_id="x")
    assert run.converged.all()
    assert np.ptp(run.forecast_paths, axis=0) == pytest.approx(0.0, abs=1e-12)
    for level in cfg.levels:
        width = run.bands.upper[level] - run.bands.lower[level]
        assert np.max(width) <= 1e-12
    # the readout itself is the extended line
    assert run.bands.central == pytest.approx(-run.bands.years + 2000.0, abs=1e-6)


def test_runs_are_bit_identical_for_same_seed():
    ref = trend_curve(1950.0, 2040.0)
    k_obs = tanh_sample(1980.0, 2010.0)
    cfg = BootstrapConfig(replicates=8, horizon=6, seed=5)
    a = bootstrap_prediction(ref, k_obs, cfg, country_id="x")
    b = bootstrap_prediction(ref, k_obs, cfg, country_id="x")
    assert np.array_equal(a.theta_samples, b.theta_samples, equal_nan=True)
    assert np.array_equal(a.forecast_paths, b.forecast_paths, equal_nan=True)
    assert bands_to_csv(a.bands) == bands_to_csv(b.bands)
    assert theta_samples_to_csv(a) == theta_samples_to_csv(b)

    c = bootstrap_prediction(ref, k_obs, BootstrapConfig(replicates=8, horizon=6, seed=6), "x")
    assert not np.array_equal(a.forecast_paths, c.forecast_paths, equal_nan=True)


def test_bands_are_ordered_and_nested():
    ref = trend_curve(1950.0, 2040.0)
    k_obs = tanh_sample(1980.0, 2010.0)
    run = bootstrap_prediction(
        ref, k_obs, BootstrapConfig(replicates=16, horizon=6, seed=9), "x"
    )
    bands = run.bands
    assert np.all(bands.lower[0.8] <= bands.central + 1e-12)
    assert np.all(bands.central <= bands.upper[0.8] + 1e-12)
    assert np.all(bands.lower[0.9] <= bands.lower[0.8] + 1e-12)
    assert np.all(bands.upper[0.8] <= bands.upper[0.9] + 1e-12)
    # quantile sanity: mass strictly below the lower bound stays near nominal
    ok = run.forecast_paths[run.converged]
    for level in bands.levels:
        frac = np.mean(ok < bands.lower[level] - 1e-12, axis=0)
        assert np.all(frac <= (1.0 - level) / 2.0 + 1.0 / ok.shape[0])


def test_all_replicates_off_reference_raises():
    ref = line_ref(1950.0, 2020.0)
    k_obs = line_sample(1990.0, 2010.0)
    cfg = BootstrapConfig(replicates=4, horizon=15, seed=2)
    with pytest.raises(TooFewConverged):
        bootstrap_prediction(ref, k_obs, cfg, country_id="x")


def test_provided_warm_start_is_respected():
    from mortrend.curve_registration import ShapeParams

    ref = line_ref(1950.0, 2050.0)
    k_obs = line_sample(1990.0, 2010.0)
    start = ShapeParams(1.0, 0.0, 1.0)
    run = bootstrap_prediction(
        ref, k_obs, BootstrapConfig(replicates=4, horizon=5, seed=0), "x", original=start
    )
    assert run.original is start
    assert run.diagnostics["replicates"] == 4
    assert run.diagnostics["converged"] + run.diagnostics["dropped"] == 4


# ------------------------------------------------------------- serialization


def test_bands_csv_layout():
    bands_run = bootstrap_prediction(
        line_ref(1950.0, 2050.0),
        line_sample(1990.0, 2010.0),
        BootstrapConfig(replicates=4, horizon=3, seed=0),
        "x",
    )
    text = bands_to_csv(bands_run.bands)
    lines = text.strip().splitlines()
    assert lines[0] == "year,level,lower,central,upper"
    assert len(lines) == 1 + 3 * len(bands_run.bands.levels)
    first = lines[1].split(",")
    assert first[0] == "2011"
    assert float(first[1]) == 0.8
    lo, mid, hi = (float(v) for v in first[2:])
    assert lo <= mid <= hi


def test_theta_csv_marks_dropped_replicates():
    run = bootstrap_prediction(
        line_ref(1950.0, 2050.0),
        line_sample(1990.0, 2010.0),
        BootstrapConfig(replicates=3, horizon=3, seed=0),
        "x",
    )
    text = theta_samples_to_csv(run)
    lines = text.strip().splitlines()
    assert lines[0] == "replicate,converged,theta1,theta2,theta3"
    assert len(lines) == 4
    for b, line in enumerate(lines[1:]):
        cells = line.split(",")
        assert cells[0] == str(b)
        assert cells[1] in {"0", "1"}
        if cells[1] == "1":
            assert all(float(c) == float(c) for c in cells[2:])
