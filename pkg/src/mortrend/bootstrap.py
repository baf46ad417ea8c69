"""Model-based residual bootstrap for registration-driven forecasts.

Uncertainty in a reference-readout forecast comes from the estimated shape
parameters, which in turn inherit the sampling noise of the observed time
index. The scheme: fit a conditional model to the observed k series
(default: random walk with drift, the same baseline used for the point
forecast; a free least-squares AR(p) is available), keep its centered
residuals, then repeatedly rebuild synthetic series by redrawing residuals
with replacement, re-smooth, re-register against the fixed reference from
the original fit's warm start, and re-read the forecast path. Pointwise
quantiles of the replicate paths give the prediction bands.

Every replicate runs on its own child seed spawned from the master seed, so
runs are reproducible bit for bit regardless of how the replicate loop is
executed. The generator is numpy's default PCG64.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curve_registration import (
    MIN_OVERLAP_YEARS,
    ShapeParams,
    fit_shape_params,
)
from .errors import HorizonExceedsReference, InsufficientData, TooFewConverged
from .forecast import forecast_via_reference
from .kernel_smoothing import (
    DEFAULT_GRID_STEP,
    DEFAULT_TARGET_DF,
    CurveSample,
    SmoothedCurve,
    bandwidth_for_df,
    grid_over,
    smoother_matrix,
)

DEFAULT_REPLICATES = 500
DEFAULT_LEVELS = (0.8, 0.9)


@dataclass
class ConditionalModel:
    """k_t regressed on (1, k_{t-1}, ..., k_{t-p}); residuals kept centered."""

    coefficients: np.ndarray  # intercept first, then lag coefficients
    residuals: np.ndarray
    order: int
    initial: np.ndarray  # the first p observed values
    times: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        self.times = np.asarray(self.times, dtype=float)

    def step(self, history: np.ndarray) -> float:
        """Conditional mean given the last p values (most recent last)."""
        lags = history[-self.order :][::-1]
        return float(self.coefficients[0] + self.coefficients[1:] @ lags)


@dataclass
class BootstrapConfig:
    replicates: int = DEFAULT_REPLICATES
    horizon: int = 10
    levels: tuple[float, ...] = DEFAULT_LEVELS
    seed: int = 0
    mode: str = "three_param"
    order: int = 1
    rw_drift: bool = True
    target_df: float = DEFAULT_TARGET_DF
    grid_step: float = DEFAULT_GRID_STEP
    min_overlap_years: float = MIN_OVERLAP_YEARS
    min_converged_fraction: float = 0.5
    theta3_bounds: tuple[float, float] = (0.5, 2.0)
    center_wander: float | None = 5.0
    threads: int = 1


@dataclass
class PredictionBands:
    years: np.ndarray
    levels: tuple[float, ...]
    lower: dict[float, np.ndarray]
    upper: dict[float, np.ndarray]
    central: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        self.central = np.asarray(self.central, dtype=float)


@dataclass
class BootstrapRun:
    country_id: str
    seed: int
    theta_samples: np.ndarray  # one row per replicate, mode's free parameters
    forecast_paths: np.ndarray  # (replicates, horizon), NaN rows where dropped
    converged: np.ndarray  # bool per replicate
    bands: PredictionBands
    original: ShapeParams
    diagnostics: dict = field(default_factory=dict)


def fit_conditional_model(
    k: CurveSample, order: int = 1, rw_drift: bool = True
) -> ConditionalModel:
    """Fit the resampling model for the observed time index.

    With ``rw_drift`` (the default) the lag coefficient is pinned to 1 and
    only the drift is estimated, matching the baseline forecast model. The
    free variant solves ordinary least squares of k_t on an intercept and p
    lags. Residuals are returned centered. Requires n >= order + 3.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    values = k.values
    n = values.size
    if n < order + 3:
        raise InsufficientData(f"need >= {order + 3} observations for order {order}, got {n}")
    if rw_drift:
        if order != 1:
            raise ValueError("rw_drift mode is defined for order 1")
        diffs = np.diff(values)
        drift = float(diffs.mean())
        coeffs = np.array([drift, 1.0])
        resid = diffs - drift
    else:
        y = values[order:]
        X = np.ones((n - order, order + 1))
        for j in range(1, order + 1):
            X[:, j] = values[order - j : n - j]
        coeffs, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coeffs
    resid = resid - resid.mean()
    return ConditionalModel(
        coefficients=coeffs,
        residuals=resid,
        order=order,
        initial=values[:order].copy(),
        times=k.times.copy(),
    )


def resample_series(
    model: ConditionalModel, residuals: np.ndarray, n: int, seed
) -> CurveSample:
    """One synthetic series: observed start, model mean plus redrawn residuals.

    Residuals are drawn i.i.d. uniformly with replacement; the same seed
    always returns the same series.
    """
    residuals = np.asarray(residuals, dtype=float)
    p = model.order
    if n < p + 1:
        raise ValueError(f"series length {n} too short for order {p}")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, residuals.size, size=n - p)
    out = np.empty(n)
    out[:p] = model.initial
    for t in range(p, n):
        out[t] = model.step(out[:t]) + residuals[draws[t - p]]
    times = (
        model.times[:n]
        if model.times.size >= n
        else np.concatenate([model.times, model.times[-1] + 1 + np.arange(n - model.times.size)])
    )
    return CurveSample(times=times.copy(), values=out)


def bootstrap_prediction(
    ref: SmoothedCurve,
    k_obs: CurveSample,
    config: BootstrapConfig,
    country_id: str = "",
    original: ShapeParams | None = None,
) -> BootstrapRun:
    """Replicate the smooth-register-forecast pipeline over resampled series.

    The reference is held fixed. Each replicate is smoothed with the same
    bandwidth as the observed series (the sample times do not change, so
    the common-df device gives the same bandwidth), registered starting
    from the original parameter estimate, and read out over the horizon.
    Replicates whose registration fails to converge, or whose parameters
    push the horizon off the reference, are dropped from the bands but kept
    in the parameter table flagged by ``converged``. Fewer than
    ``min_converged_fraction`` usable replicates raises TooFewConverged.

    Replicate refits stay within ``center_wander`` years of where the
    original fit placed the series on the reference. The warm start alone
    does not hold them there: a short record on a long reference has rival
    placements decades away at nearly the same loss, and a replicate that
    drifts to one measures placement ambiguity, not sampling noise.
    """
    B = config.replicates
    if B < 1:
        raise ValueError("need at least one replicate")
    model = fit_conditional_model(k_obs, order=config.order, rw_drift=config.rw_drift)

    h = bandwidth_for_df(k_obs, config.target_df)
    grid = grid_over(k_obs.times[0], k_obs.times[-1], config.grid_step)
    L = smoother_matrix(k_obs.times, h, grid)
    domain = (float(grid[0]), float(grid[-1]))

    if original is None:
        base = SmoothedCurve(grid, L @ k_obs.values, domain, h, k_obs.n)
        from .curve_registration import default_shift_range, scan_initial_shift

        rng_shift = default_shift_range(base, ref, config.min_overlap_years)
        s0 = scan_initial_shift(base, ref, rng_shift, min_overlap_years=config.min_overlap_years)
        original = fit_shape_params(
            base,
            ref,
            ShapeParams(1.0, s0, 1.0, 0.0, mode=config.mode),
            config.mode,
            min_overlap_years=config.min_overlap_years,
            theta3_bounds=config.theta3_bounds,
        ).params

    if config.center_wander is None:
        center_bounds = None
    else:
        u_mid = 0.5 * (grid[0] + grid[-1])
        s_mid = (u_mid - original.theta2) / original.theta3
        center_bounds = (s_mid - config.center_wander, s_mid + config.center_wander)

    last_year = int(round(k_obs.times[-1]))
    years = last_year + np.arange(1, config.horizon + 1)
    free = 4 if config.mode == "four_param" else 3
    theta = np.full((B, free), np.nan)
    paths = np.full((B, config.horizon), np.nan)
    conv = np.zeros(B, dtype=bool)
    seeds = np.random.SeedSequence(config.seed).spawn(B)

    def one(b: int):
        sample = resample_series(model, model.residuals, k_obs.n, seeds[b])
        curve = SmoothedCurve(grid, L @ sample.values, domain, h, sample.n)
        try:
            # replicate fits are only read through band quantiles, so the
            # simplex can stop well short of parameter-level precision
            res = fit_shape_params(
                curve,
                ref,
                original,
                config.mode,
                min_overlap_years=config.min_overlap_years,
                theta3_bounds=config.theta3_bounds,
                window_center_bounds=center_bounds,
                xatol=1e-3,
                fatol=1e-8,
            )
        except ValueError:
            return b, None, None
        row = np.array(res.params.as_tuple()[:free])
        if not res.converged:
            return b, row, None
        try:
            tf = forecast_via_reference(
                ref, res.params, last_year, config.horizon, country_id, "common_trend"
            )
        except HorizonExceedsReference:
            return b, row, None
        return b, row, tf.k_values

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]
    for b, row, path in results:
        if row is not None:
            theta[b] = row
        if path is not None:
            paths[b] = path
            conv[b] = True

    n_ok = int(conv.sum())
    required = int(np.ceil(config.min_converged_fraction * B))
    if n_ok < required:
        raise TooFewConverged(n_ok, required)

    ok_paths = paths[conv]
    lower = {}
    upper = {}
    for level in config.levels:
        alpha = (1.0 - level) / 2.0
        lower[level] = np.quantile(ok_paths, alpha, axis=0)
        upper[level] = np.quantile(ok_paths, 1.0 - alpha, axis=0)
    central = np.quantile(ok_paths, 0.5, axis=0)
    bands = PredictionBands(
        years=years,
        levels=tuple(config.levels),
        lower=lower,
        upper=upper,
        central=central,
    )
    return BootstrapRun(
        country_id=country_id,
        seed=config.seed,
        theta_samples=theta,
        forecast_paths=paths,
        converged=conv,
        bands=bands,
        original=original,
        diagnostics={
            "replicates": B,
            "converged": n_ok,
            "dropped": B - n_ok,
            "bandwidth": h,
        },
    )


def bands_to_csv(bands: PredictionBands) -> str:
    out = ["year,level,lower,central,upper"]
    for level in bands.levels:
        lo = bands.lower[level]
        hi = bands.upper[level]
        for j, y in enumerate(bands.years):
            out.append(
                f"{int(y)},{float(level)!r},{float(lo[j])!r},"
                f"{float(bands.central[j])!r},{float(hi[j])!r}"
            )
    return "\n".join(out) + "\n"


def theta_samples_to_csv(run: BootstrapRun) -> str:
    free = run.theta_samples.shape[1]
    header = ",".join(f"theta{i + 1}" for i in range(free))
    out = [f"replicate,converged,{header}"]
    for b in range(run.theta_samples.shape[0]):
        row = run.theta_samples[b]
        cells = ",".join("" if np.isnan(v) else repr(float(v)) for v in row)
        out.append(f"{b},{int(run.converged[b])},{cells}")
    return "\n".join(out) + "\n"
