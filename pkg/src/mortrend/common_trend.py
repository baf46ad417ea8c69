"""Joint registration of many national trends onto one latent reference.

Every country's smoothed time index is modeled as an affine deformation of
a single reference curve k0:

    k_i(t) ~ theta_i1 * k0((t - theta_i2) / theta_i3) + theta_i4

The parameters are only identified up to a joint reparametrization of k0,
so a gauge is fixed: the theta1 and theta3 averages are 1 and the theta2
and theta4 averages are 0. Fitting alternates (a) an initial reference from
the countries with mid-length records, (b) per-country registration against
the current reference, (c) renormalization of the parameter panel with the
inverse transform folded into the reference so every composite fit is
untouched, and (d) a reference update that averages the back-transformed
country curves pointwise in reference time. Iteration stops when no
parameter moves more than ``tol``.

Reference grid points covered by a single country are kept (they extend
the usable domain, which is what permits long forecasts) but are flagged in
the curve's coverage vector; points covered by nobody do not exist.

Countries whose registration residual is far out of line (mean squared
residual above median + z * MAD across countries) can be flagged and
excluded from a refit; exclusion is never automatic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curve_registration import (
    MIN_OVERLAP_YEARS,
    RegistrationResult,
    ShapeParams,
    default_shift_range,
    fit_shape_params,
    registration_loss,
    scan_initial_shift,
)
from .errors import DegenerateNormalizer, InsufficientCoverage
from .kernel_smoothing import (
    DEFAULT_GRID_STEP,
    DEFAULT_TARGET_DF,
    CurveSample,
    SmoothedCurve,
    grid_over,
    smooth_to_df,
)


@dataclass
class PanelOfCurves:
    curves: dict[str, CurveSample]
    smoothed: dict[str, SmoothedCurve]

    def __post_init__(self):
        if set(self.curves) != set(self.smoothed):
            raise ValueError("curves and smoothed must share identical keys")

    @property
    def country_ids(self) -> list[str]:
        return sorted(self.curves)


@dataclass
class CommonTrendConfig:
    """Settings for the alternating panel fit.

    scan_radius bounds the first-iteration shift scan to [-radius, +radius]
    (intersected with the feasible range). The alternation is a local
    optimizer and assumes a panel of near-contemporaneous records whose
    mutual delays are at most a couple of decades; an unbounded scan lets a
    demeaned segment of one record shape-match a remote stretch of the
    reference and the iteration then settles into that misalignment. A
    country with a genuinely large known delay should be registered against
    the fitted reference afterwards with an explicit scan window instead of
    being included in the alternation.

    theta3_bounds confines the per-country dilation during panel fits.
    Comparable national panels dilate each other's clocks by tens of
    percent, not multiples; the wide two-country default lets a record
    stretch its mapped window onto thinly covered stretches of the evolving
    reference, which then re-absorbs the misplacement on the next update.

    overlap_fraction guards against overlap shrinkage. The loss is an
    integral over the years where the transformed reference and the target
    overlap, so sliding a curve mostly off the reference trades a short
    stretch of good match for a shorter integration range and can undercut
    any honest full-record fit. Panel registrations therefore require the
    overlap to stay above this fraction of the shorter of (target record,
    reference span); fits violating the floor score +inf.
    """

    mode: str = "three_param"
    max_iter: int = 50
    tol: float = 1e-6
    exclude: tuple[str, ...] = ()
    grid_step: float = DEFAULT_GRID_STEP
    scan_step: float = 1.0
    scan_radius: float = 15.0
    theta3_bounds: tuple[float, float] = (0.75, 1.35)
    overlap_fraction: float = 0.75
    min_overlap_years: float = MIN_OVERLAP_YEARS
    threads: int = 1


@dataclass
class CommonTrendFit:
    reference: SmoothedCurve
    params: dict[str, ShapeParams]
    excluded: list[str]
    iterations: int
    history: list[float]
    converged: bool
    country_converged: dict[str, bool] = field(default_factory=dict)
    reference_history: list[SmoothedCurve] = field(default_factory=list)


def build_panel(
    samples: dict[str, CurveSample],
    target_df: float = DEFAULT_TARGET_DF,
    grid_step: float = DEFAULT_GRID_STEP,
) -> PanelOfCurves:
    """Smooth every series to a common effective df and bundle the panel."""
    smoothed = {
        cid: smooth_to_df(s, target_df=target_df, grid_step=grid_step)
        for cid, s in samples.items()
    }
    return PanelOfCurves(curves=dict(samples), smoothed=smoothed)


def _record_length(sample: CurveSample) -> float:
    return float(sample.times[-1] - sample.times[0] + 1.0)


def _pointwise_mean(grid, curve_list):
    """Mean over covering curves at each grid point; curves given as
    (eval_points, values, lo, hi) in the target time scale. Returns
    (values, counts). Summation order is fixed by the caller, so the result
    is invariant to panel permutation."""
    total = np.zeros(grid.size)
    count = np.zeros(grid.size, dtype=int)
    for pts, vals, lo, hi in curve_list:
        mask = (grid >= lo - 1e-9) & (grid <= hi + 1e-9)
        if not np.any(mask):
            continue
        total[mask] += np.interp(grid[mask], pts, vals)
        count[mask] += 1
    values = np.full(grid.size, np.nan)
    nz = count > 0
    values[nz] = total[nz] / count[nz]
    return values, count


def init_reference(
    panel: PanelOfCurves, include: list[str] | None = None
) -> SmoothedCurve:
    """Trimmed pointwise mean over the mid-length-record countries.

    Countries whose recording-period length sits between the 25th and 75th
    percentile (inclusive) are averaged on the union of their grids; the
    result keeps only points covered by at least two of them.
    """
    ids = sorted(include) if include is not None else panel.country_ids
    if len(ids) < 4:
        raise InsufficientCoverage(
            f"need at least 4 countries to trim by record length, got {len(ids)}"
        )
    lengths = np.array([_record_length(panel.curves[cid]) for cid in ids])
    p25, p75 = np.percentile(lengths, [25.0, 75.0])
    selected = [
        cid
        for cid, ln in zip(ids, lengths)
        if p25 - 1e-9 <= ln <= p75 + 1e-9
    ]
    grid = np.unique(np.concatenate([panel.smoothed[cid].eval_grid for cid in selected]))
    curve_list = [
        (
            panel.smoothed[cid].eval_grid,
            panel.smoothed[cid].values,
            panel.smoothed[cid].domain[0],
            panel.smoothed[cid].domain[1],
        )
        for cid in selected
    ]
    values, count = _pointwise_mean(grid, curve_list)
    keep = count >= 2
    if not np.any(keep):
        raise InsufficientCoverage("no grid point is covered by two mid-length countries")
    grid, values, count = grid[keep], values[keep], count[keep]
    bw = float(np.mean([panel.smoothed[cid].bandwidth for cid in selected]))
    return SmoothedCurve(
        eval_grid=grid,
        values=values,
        domain=(float(grid[0]), float(grid[-1])),
        bandwidth=bw,
        source_n=len(selected),
        coverage=count,
    )


def normalize_params(
    params: dict[str, ShapeParams],
    reference: SmoothedCurve,
    mode: str = "three_param",
) -> tuple[dict[str, ShapeParams], SmoothedCurve]:
    """Fix the gauge: means of (theta1, theta3) to 1 and (theta2, theta4) to 0.

    The reference absorbs the inverse reparametrization, so every composite
    theta_i o k0 is numerically unchanged. Means with the wrong sign make
    the gauge meaningless and raise DegenerateNormalizer.
    """
    ids = sorted(params)
    th = np.array([params[cid].as_tuple() for cid in ids])
    m1, m2, m3, m4 = th.mean(axis=0)
    if m1 <= 0 or m3 <= 0:
        raise DegenerateNormalizer(
            f"mean theta1 = {m1:.4g}, mean theta3 = {m3:.4g}; both must be positive"
        )
    new_params = {}
    for cid in ids:
        p = params[cid]
        new_params[cid] = ShapeParams(
            theta1=p.theta1 / m1,
            theta2=p.theta2 - p.theta3 * (m2 / m3),
            theta3=p.theta3 / m3,
            theta4=p.theta4 - p.theta1 * (m4 / m1) if mode == "four_param" else 0.0,
            mode=mode,
        )
    new_ref = SmoothedCurve(
        eval_grid=m3 * reference.eval_grid + m2,
        values=m1 * reference.values + m4,
        domain=(m3 * reference.domain[0] + m2, m3 * reference.domain[1] + m2),
        bandwidth=reference.bandwidth * m3,
        source_n=reference.source_n,
        coverage=None if reference.coverage is None else reference.coverage.copy(),
    )
    return new_params, new_ref


def update_reference(
    panel: PanelOfCurves,
    params: dict[str, ShapeParams],
    grid_step: float = DEFAULT_GRID_STEP,
) -> SmoothedCurve:
    """Pointwise mean of the back-transformed smoothed curves in reference time.

    Country i contributes (k_i(theta3 t + theta2) - theta4) / theta1 at every
    reference-time point t its record covers. Points covered by a single
    country are kept (that extension is what lengthens the forecast horizon)
    and flagged via the coverage vector; a grid with no covered point at all
    raises InsufficientCoverage.
    """
    ids = sorted(params)
    if not ids:
        raise InsufficientCoverage("no countries to average")
    curve_list = []
    los, his = [], []
    for cid in ids:
        c = panel.smoothed[cid]
        p = params[cid]
        lo = (c.domain[0] - p.theta2) / p.theta3
        hi = (c.domain[1] - p.theta2) / p.theta3
        pts = (c.eval_grid - p.theta2) / p.theta3
        vals = (c.values - p.theta4) / p.theta1
        curve_list.append((pts, vals, lo, hi))
        los.append(lo)
        his.append(hi)
    grid = grid_over(min(los), max(his), grid_step)
    values, count = _pointwise_mean(grid, curve_list)
    keep = count >= 1
    if not np.any(keep):
        raise InsufficientCoverage("no reference point is covered by any country")
    grid, values, count = grid[keep], values[keep], count[keep]
    bw = float(
        np.mean([panel.smoothed[cid].bandwidth / params[cid].theta3 for cid in ids])
    )
    return SmoothedCurve(
        eval_grid=grid,
        values=values,
        domain=(float(grid[0]), float(grid[-1])),
        bandwidth=bw,
        source_n=len(ids),
        coverage=count,
    )


def total_loss(
    panel: PanelOfCurves,
    reference: SmoothedCurve,
    params: dict[str, ShapeParams],
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> float:
    return float(
        sum(
            registration_loss(
                panel.smoothed[cid], reference, params[cid], min_overlap_years=min_overlap_years
            )
            for cid in sorted(params)
        )
    )


def _panel_min_overlap(
    target: SmoothedCurve, ref: SmoothedCurve, cfg: CommonTrendConfig
) -> float:
    t_span = target.domain[1] - target.domain[0]
    r_span = ref.domain[1] - ref.domain[0]
    return max(cfg.min_overlap_years, cfg.overlap_fraction * min(t_span, r_span))


def _register_one(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    warm: ShapeParams | None,
    cfg: CommonTrendConfig,
) -> RegistrationResult:
    floor = _panel_min_overlap(target, ref, cfg)
    init = warm
    if init is not None:
        try:
            return fit_shape_params(
                target,
                ref,
                init,
                cfg.mode,
                min_overlap_years=floor,
                theta3_bounds=cfg.theta3_bounds,
            )
        except ValueError:
            init = None  # warm start fell off the reference; rescan below
    lo, hi = default_shift_range(target, ref, floor)
    # local scan; see CommonTrendConfig.scan_radius
    if lo <= cfg.scan_radius and hi >= -cfg.scan_radius:
        lo, hi = max(lo, -cfg.scan_radius), min(hi, cfg.scan_radius)
    s0 = scan_initial_shift(target, ref, (lo, hi), cfg.scan_step, min_overlap_years=floor)
    init = ShapeParams(1.0, s0, 1.0, 0.0, mode=cfg.mode)
    return fit_shape_params(
        target, ref, init, cfg.mode, min_overlap_years=floor,
        theta3_bounds=cfg.theta3_bounds,
    )


def fit_common_trend(
    panel: PanelOfCurves, config: CommonTrendConfig | None = None
) -> CommonTrendFit:
    """Alternate registration and reference averaging until parameters settle."""
    cfg = config or CommonTrendConfig()
    ids = [cid for cid in panel.country_ids if cid not in set(cfg.exclude)]
    if len(ids) < 4:
        raise InsufficientCoverage(
            f"need at least 4 included countries, got {len(ids)}"
        )
    ref = init_reference(panel, include=ids)
    params: dict[str, ShapeParams] = {}
    history: list[float] = []
    ref_history: list[SmoothedCurve] = [ref]
    country_converged: dict[str, bool] = {}
    converged = False
    iterations = 0

    for iterations in range(1, cfg.max_iter + 1):
        prev = params

        def job(cid: str) -> RegistrationResult:
            return _register_one(panel.smoothed[cid], ref, prev.get(cid), cfg)

        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(job, ids))
        else:
            results = [job(cid) for cid in ids]
        fitted = {cid: r.params for cid, r in zip(ids, results)}
        country_converged = {cid: r.converged for cid, r in zip(ids, results)}

        params, ref = normalize_params(fitted, ref, cfg.mode)
        ref = update_reference(panel, params, cfg.grid_step)
        ref_history.append(ref)
        history.append(total_loss(panel, ref, params, cfg.min_overlap_years))

        if prev:
            delta = max(
                float(np.max(np.abs(np.array(params[cid].as_tuple()) - np.array(prev[cid].as_tuple()))))
                for cid in ids
            )
            if delta < cfg.tol:
                converged = True
                break

    return CommonTrendFit(
        reference=ref,
        params=params,
        excluded=sorted(cfg.exclude),
        iterations=iterations,
        history=history,
        converged=converged,
        country_converged=country_converged,
        reference_history=ref_history,
    )


def flag_outliers(
    panel: PanelOfCurves,
    fit: CommonTrendFit,
    z_threshold: float = 3.0,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> list[str]:
    """Countries whose registration residual is out of line with the panel.

    The statistic is the mean squared residual over the fitted overlap; a
    country is flagged when it exceeds median + z_threshold * MAD.
    """
    ids = sorted(fit.params)
    msr = []
    for cid in ids:
        p = fit.params[cid]
        c = panel.smoothed[cid]
        loss = registration_loss(
            c, fit.reference, p, min_overlap_years=min_overlap_years
        )
        a, b = fit.reference.domain
        lo = max(p.theta3 * a + p.theta2, c.domain[0])
        hi = min(p.theta3 * b + p.theta2, c.domain[1])
        msr.append(loss / (hi - lo) if hi > lo else np.inf)
    msr = np.array(msr)
    med = float(np.median(msr))
    mad = float(np.median(np.abs(msr - med)))
    cutoff = med + z_threshold * mad
    return [cid for cid, v in zip(ids, msr) if v > cutoff]
