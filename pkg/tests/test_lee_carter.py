"""Decomposition identities, drift estimation, and serialization."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mortrend.errors import DegenerateSurface, InsufficientData, UnknownAge
from mortrend.kernel_smoothing import CurveSample
from mortrend.lee_carter import (
    LCDecomposition,
    decomposition_from_csv,
    decomposition_from_json,
    decomposition_to_csv,
    decomposition_to_json,
    fit_drift,
    fit_lee_carter,
    forecast_k_drift,
    reconstruct_mortality,
)
from mortrend.mortality_data import MortalitySurface, log_transform


def surface_from_logs(log_rates, years=None, ages=None, country="demo"):
    log_rates = np.asarray(log_rates, dtype=float)
    n_ages, n_years = log_rates.shape
    if years is None:
        years = np.arange(2000, 2000 + n_years)
    if ages is None:
        ages = np.arange(n_ages)
    return MortalitySurface(
        country_id=country,
        gender="total",
        ages=np.asarray(ages),
        years=np.asarray(years),
        rates=np.exp(log_rates),
        missing_years=frozenset(),
    )


# ------------------------------------------------------------ decomposition


def test_rank_one_surface_recovered_exactly(rank_one_surface):
    surface, a_x, b_x, k_t = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    assert np.allclose(fit.a_x, a_x, atol=1e-10)
    assert np.allclose(fit.b_x, b_x, atol=1e-10)
    assert np.allclose(fit.k_t, k_t, atol=1e-9)
    assert fit.residual_variance < 1e-18


def test_constraints_hold_to_working_precision(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    assert abs(fit.b_x.sum() - 1.0) < 1e-12
    assert abs(fit.k_t.mean()) < 1e-12


def test_sign_convention_forces_declining_trend(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    slope = np.polyfit(np.arange(fit.k_t.size), fit.k_t, 1)[0]
    assert slope <= 0


def test_sign_flip_applied_when_raw_svd_rises():
    # rising mortality: SVD may hand back either orientation, the line
    # through k_t must still come out non-increasing
    k = np.array([-3.0, -1.0, 1.0, 3.0])
    b = np.array([0.2, 0.3, 0.5])
    a = np.array([-4.0, -5.0, -6.0])
    logs = a[:, None] + b[:, None] * k[None, :]
    fit = fit_lee_carter(log_transform(surface_from_logs(logs)))
    slope = np.polyfit(np.arange(4), fit.k_t, 1)[0]
    assert slope <= 0
    recon = fit.a_x[:, None] + fit.b_x[:, None] * fit.k_t[None, :]
    assert np.allclose(recon, logs, atol=1e-10)


def test_missing_cells_excluded_from_age_means():
    logs = np.array([[1.0, 2.0, 3.0, np.nan], [0.5, 1.0, 1.5, 2.0]])
    s = MortalitySurface(
        country_id="m",
        gender="total",
        ages=np.array([0, 1]),
        years=np.arange(2000, 2004),
        rates=np.exp(logs),
        missing_years=frozenset(),
    )
    fit = fit_lee_carter(log_transform(s))
    assert fit.a_x[0] == pytest.approx(2.0)
    assert fit.a_x[1] == pytest.approx(1.25)


def test_residual_variance_counts_only_observed_cells(rank_one_surface):
    surface, a_x, b_x, k_t = rank_one_surface
    rates = surface.rates.copy()
    rates[0, 0] = np.nan
    holed = MortalitySurface(
        country_id=surface.country_id,
        gender=surface.gender,
        ages=surface.ages,
        years=surface.years,
        rates=rates,
        missing_years=frozenset(),
    )
    fit = fit_lee_carter(log_transform(holed))
    logs = np.log(rates)
    observed = np.isfinite(logs)
    recon = fit.a_x[:, None] + np.outer(fit.b_x, fit.k_t)
    resid = np.where(observed, logs - recon, 0.0)
    assert fit.residual_variance == pytest.approx(
        (resid**2).sum() / observed.sum(), abs=1e-14
    )
    # knocking out one cell perturbs that age's mean, so near-zero not zero
    assert fit.residual_variance < 0.01


def test_flat_surface_is_degenerate():
    logs = np.full((3, 5), -4.2)
    with pytest.raises(DegenerateSurface):
        fit_lee_carter(log_transform(surface_from_logs(logs)))


def test_too_small_surface_rejected():
    logs = np.array([[1.0, 2.0]])
    with pytest.raises(InsufficientData):
        fit_lee_carter(log_transform(surface_from_logs(logs)))


def test_fully_missing_age_row_rejected():
    logs = np.array([[1.0, 2.0, 3.0], [np.nan, np.nan, np.nan]])
    s = MortalitySurface(
        country_id="m",
        gender="total",
        ages=np.array([0, 1]),
        years=np.arange(2000, 2003),
        rates=np.exp(logs),
        missing_years=frozenset(),
    )
    with pytest.raises(InsufficientData):
        fit_lee_carter(log_transform(s))


@given(
    seed=st.integers(min_value=0, max_value=2**31 - 1),
    n_ages=st.integers(min_value=2, max_value=8),
    n_years=st.integers(min_value=3, max_value=15),
)
def test_constraints_hold_on_noisy_surfaces(seed, n_ages, n_years):
    rng = np.random.default_rng(seed)
    logs = rng.normal(-4.0, 1.0, size=(n_ages, n_years))
    logs += np.linspace(0.5, -0.5, n_years)[None, :]
    try:
        fit = fit_lee_carter(log_transform(surface_from_logs(logs)))
    except DegenerateSurface:
        return
    # the orientation flip negates b on rising surfaces, so only |sum| is pinned
    assert abs(abs(fit.b_x.sum()) - 1.0) < 1e-9
    assert abs(fit.k_t.mean()) < 1e-9
    slope = np.polyfit(np.arange(n_years), fit.k_t, 1)[0]
    assert slope <= 1e-12
    recon = fit.a_x[:, None] + np.outer(fit.b_x, fit.k_t)
    observed = np.isfinite(logs)
    resid = np.where(observed, logs - recon, 0.0)
    assert fit.residual_variance == pytest.approx(
        (resid**2).sum() / observed.sum(), abs=1e-12
    )


def test_k_sample_carries_years_as_times(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    sample = fit.k_sample()
    assert np.array_equal(sample.times, surface.years.astype(float))
    assert np.array_equal(sample.values, fit.k_t)


# ------------------------------------------------------------------- drift


def k_series(values, years):
    return CurveSample(
        times=np.asarray(years, dtype=float), values=np.asarray(values, dtype=float)
    )


def test_drift_oracle_values():
    # diffs of (0, -2, -2, -4) are (-2, 0, -2): mean -4/3, sd 2/sqrt(3)
    model = fit_drift(k_series([0.0, -2.0, -2.0, -4.0], np.arange(2000, 2004)))
    assert model.drift == pytest.approx(-4.0 / 3.0, abs=1e-15)
    assert model.innovation_sd == pytest.approx(1.1547005383792515, abs=1e-12)
    assert model.last_k == -4.0
    assert model.last_year == 2003


def test_drift_exact_linear_trend():
    model = fit_drift(k_series([0.0, -1.0, -2.0, -3.0], np.arange(2000, 2004)))
    assert model.drift == -1.0
    assert model.innovation_sd == 0.0


def test_drift_requires_three_points():
    with pytest.raises(InsufficientData):
        fit_drift(k_series([0.0, -1.0], [2000, 2001]))


def test_drift_requires_consecutive_years():
    with pytest.raises(InsufficientData):
        fit_drift(k_series([0.0, -1.0, -2.0], [2000, 2001, 2003]))


def test_drift_forecast_is_linear_in_horizon():
    model = fit_drift(k_series([0.0, -2.0, -2.0, -4.0], np.arange(2000, 2004)))
    fc = forecast_k_drift(model, horizon=3)
    assert list(fc.times) == [2004.0, 2005.0, 2006.0]
    assert np.allclose(fc.values, -4.0 + model.drift * np.array([1, 2, 3]))


def test_drift_forecast_oracles():
    model = fit_drift(k_series([-1.0, -2.0, -3.0], [2000, 2001, 2002]))
    fc = forecast_k_drift(model, horizon=2)
    assert np.allclose(fc.values, [-4.0, -5.0])


# ----------------------------------------------------------- reconstruction


def test_reconstruct_analytic_values():
    dec = LCDecomposition(
        country_id="c",
        gender="total",
        ages=np.array([0, 1]),
        years=np.array([2000, 2001]),
        a_x=np.array([-4.0, 0.0]),
        b_x=np.array([0.01, 0.99]),
        k_t=np.array([1.0, -1.0]),
        residual_variance=0.0,
    )
    assert reconstruct_mortality(dec, 0.0, age=0) == pytest.approx(np.exp(-4.0))
    dec2 = LCDecomposition(
        country_id="c",
        gender="total",
        ages=np.array([0, 1]),
        years=np.array([2000, 2001]),
        a_x=np.array([0.0, -1.0]),
        b_x=np.array([1.0, 0.0]),
        k_t=np.array([1.0, -1.0]),
        residual_variance=0.0,
    )
    assert reconstruct_mortality(dec2, -2.0, age=0) == pytest.approx(np.exp(-2.0))


def test_reconstruct_roundtrip_on_rank_one(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    for i, age in enumerate(fit.ages):
        for j in range(fit.k_t.size):
            rate = reconstruct_mortality(fit, fit.k_t[j], age=int(age))
            assert rate == pytest.approx(surface.rates[i, j], rel=1e-8)


def test_reconstruct_unknown_age(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    with pytest.raises(UnknownAge):
        reconstruct_mortality(fit, 0.0, age=999)


# ----------------------------------------------------------- serialization


def test_json_roundtrip_bit_exact(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    back = decomposition_from_json(decomposition_to_json(fit))
    assert np.array_equal(back.a_x, fit.a_x)
    assert np.array_equal(back.b_x, fit.b_x)
    assert np.array_equal(back.k_t, fit.k_t)
    assert back.residual_variance == fit.residual_variance
    assert back.country_id == fit.country_id
    assert back.gender == fit.gender


def test_json_output_deterministic(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    assert decomposition_to_json(fit) == decomposition_to_json(fit)


def test_csv_roundtrip_bit_exact(rank_one_surface):
    surface, *_ = rank_one_surface
    fit = fit_lee_carter(log_transform(surface))
    back = decomposition_from_csv(decomposition_to_csv(fit))
    assert np.array_equal(back.a_x, fit.a_x)
    assert np.array_equal(back.b_x, fit.b_x)
    assert np.array_equal(back.k_t, fit.k_t)
    assert back.residual_variance == fit.residual_variance
    assert np.array_equal(back.ages, fit.ages)
    assert np.array_equal(back.years, fit.years)
