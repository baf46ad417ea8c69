"""Shape-invariant registration of one smoothed trend onto a reference.

A target curve is explained by an affine deformation of the reference:

    target(u) ~ theta1 * ref((u - theta2) / theta3) + theta4

theta1 scales amplitude, theta2 shifts time, theta3 (> 0) dilates time and
theta4 shifts vertically. The discrepancy is the integral over the target's
grid of the squared residual, restricted by an indicator weight to the
points whose back-mapped time (u - theta2) / theta3 lands inside a window
[a, b] of the reference domain. Transforms that leave less than
``min_overlap_years`` of usable overlap get a +inf loss so the optimizer
simply avoids them.

The time shift and the vertical shift trade off almost perfectly wherever
the reference is close to affine, so the default fitting mode pins
theta4 = 0 and lets theta2 carry the delay; the four-parameter mode is kept
for diagnostics of exactly that ridge.

Optimization is derivative-free (Nelder-Mead): the overlap indicator makes
the loss piecewise-smooth with kinks where grid points enter or leave the
window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import AllEmptyOverlap, OutOfDomain
from .kernel_smoothing import SmoothedCurve

MIN_OVERLAP_YEARS = 5.0
THETA3_BOUNDS = (0.5, 2.0)
MAX_ITERATIONS = 2000
_SIMPLEX_STEPS = (1.0, 0.02)  # theta2, theta3; the linear pair is profiled out
MODES = ("three_param", "four_param")


@dataclass(frozen=True)
class ShapeParams:
    theta1: float
    theta2: float
    theta3: float
    theta4: float = 0.0
    mode: str = "three_param"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.theta3 > 0:
            raise ValueError("theta3 must be positive")
        if self.mode == "three_param" and self.theta4 != 0.0:
            raise ValueError("three_param mode requires theta4 = 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.theta1, self.theta2, self.theta3, self.theta4)


@dataclass
class RegistrationResult:
    params: ShapeParams
    loss: float
    overlap: tuple[float, float]  # in reference time
    iterations: int
    converged: bool


def transform_curve(
    ref: SmoothedCurve, p: ShapeParams, eval_grid: np.ndarray
) -> SmoothedCurve:
    """Evaluate theta1 * ref((u - theta2)/theta3) + theta4 on eval_grid.

    Raises OutOfDomain if any back-mapped point leaves the reference domain.
    """
    eval_grid = np.asarray(eval_grid, dtype=float)
    s = (eval_grid - p.theta2) / p.theta3
    lo, hi = ref.domain
    bad = (s < lo - 1e-9) | (s > hi + 1e-9)
    if np.any(bad):
        raise OutOfDomain(float(eval_grid[np.argmax(bad)]))
    values = p.theta1 * np.interp(s, ref.eval_grid, ref.values) + p.theta4
    return SmoothedCurve(
        eval_grid=eval_grid,
        values=values,
        domain=(float(eval_grid[0]), float(eval_grid[-1])),
        bandwidth=ref.bandwidth * p.theta3,
        source_n=ref.source_n,
    )


def _window(ref: SmoothedCurve, ref_window) -> tuple[float, float]:
    if ref_window is None:
        return ref.domain
    a, b = float(ref_window[0]), float(ref_window[1])
    lo, hi = ref.domain
    if a < lo - 1e-9 or b > hi + 1e-9 or a >= b:
        raise ValueError(f"ref window [{a}, {b}] not inside domain [{lo}, {hi}]")
    return a, b


def _quad_weights(tgrid) -> np.ndarray:
    """Trapezoid-rule weights of a fixed grid, so repeated loss evaluations
    reduce to a dot product instead of re-deriving grid spacings."""
    w = np.empty_like(tgrid, dtype=float)
    w[0] = 0.5 * (tgrid[1] - tgrid[0])
    w[-1] = 0.5 * (tgrid[-1] - tgrid[-2])
    w[1:-1] = 0.5 * (tgrid[2:] - tgrid[:-2])
    return w


def _loss_raw(
    tgrid, tvals, rgrid, rvals, a, b, th1, th2, th3, th4, min_overlap, weights=None
) -> float:
    lo = max(th3 * a + th2, tgrid[0])
    hi = min(th3 * b + th2, tgrid[-1])
    if hi - lo < min_overlap:
        return np.inf
    if weights is None:
        weights = _quad_weights(tgrid)
    s = (tgrid - th2) / th3
    resid = tvals - th1 * np.interp(s, rgrid, rvals) - th4
    resid[(s < a) | (s > b)] = 0.0
    return float(weights @ (resid * resid))


def registration_loss(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    p: ShapeParams,
    ref_window: tuple[float, float] | None = None,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> float:
    """Windowed integrated squared residual of the transform (trapezoid rule).

    Returns +inf (never raises) when the usable overlap is shorter than
    ``min_overlap_years``.
    """
    a, b = _window(ref, ref_window)
    return _loss_raw(
        target.eval_grid,
        target.values,
        ref.eval_grid,
        ref.values,
        a,
        b,
        p.theta1,
        p.theta2,
        p.theta3,
        p.theta4,
        min_overlap_years,
    )


def scan_shift_losses(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    shifts: np.ndarray,
    ref_window: tuple[float, float] | None = None,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> np.ndarray:
    """Loss at (1, shift, 1, 0) for each candidate shift."""
    a, b = _window(ref, ref_window)
    tg, tv = target.eval_grid, target.values
    rg, rv = ref.eval_grid, ref.values
    w = _quad_weights(tg)
    return np.array(
        [
            _loss_raw(tg, tv, rg, rv, a, b, 1.0, float(s), 1.0, 0.0, min_overlap_years, w)
            for s in shifts
        ]
    )


def default_shift_range(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> tuple[float, float]:
    """Widest shift range that can still produce the minimum overlap."""
    a, b = ref.domain
    t0, t1 = target.domain
    return (t0 - b + min_overlap_years, t1 - a - min_overlap_years)


def scan_initial_shift(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    shift_range: tuple[float, float],
    step: float = 1.0,
    ref_window: tuple[float, float] | None = None,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> float:
    """Grid search for the best pure time shift; the registration warm start.

    Raises AllEmptyOverlap when no candidate shift yields a usable overlap.
    """
    lo, hi = float(shift_range[0]), float(shift_range[1])
    n = max(1, int(np.floor((hi - lo) / step + 1e-9)) + 1)
    shifts = lo + step * np.arange(n)
    losses = scan_shift_losses(target, ref, shifts, ref_window, min_overlap_years)
    if not np.any(np.isfinite(losses)):
        raise AllEmptyOverlap(
            f"no shift in [{lo}, {hi}] leaves {min_overlap_years} years of overlap"
        )
    return float(shifts[int(np.argmin(losses))])


def fit_shape_params(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    init: ShapeParams,
    mode: str = "three_param",
    ref_window: tuple[float, float] | None = None,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
    max_iterations: int = MAX_ITERATIONS,
    theta3_bounds: tuple[float, float] = THETA3_BOUNDS,
    window_center_bounds: tuple[float, float] | None = None,
    xatol: float = 1e-6,
    fatol: float = 1e-10,
) -> RegistrationResult:
    """Registration by Nelder-Mead over (theta2, theta3) from a warm start.

    Given the time map, the loss is an exact weighted least-squares problem
    in the linear parameters, so theta1 (and theta4) are profiled out in
    closed form at every candidate rather than searched: the simplex walks
    a 2-d surface with no flat amplitude/offset directions on it. theta3 is
    confined to theta3_bounds, and candidates whose profiled amplitude is
    not positive are walled off; a sign flip would let a reflected curve
    masquerade as a good fit. window_center_bounds, when given, walls in
    the reference-scale image of the target window's midpoint,
    (mid(target) - theta2) / theta3. A short target on a long reference
    sees near-identical loss wherever the local slopes happen to agree, and
    these bounds keep the fit in the era the warm start placed it rather
    than letting the simplex drift to a lookalike stretch decades away.
    Convergence means the simplex collapsed below xatol with loss changes
    below fatol; the strict defaults buy parameter-level precision, and
    resampling loops that only read the fit through a forecast can afford
    far coarser. Running out of iterations is reported via
    ``converged=False``, never an exception. The warm start must itself
    have finite loss.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    a, b = _window(ref, ref_window)
    tg = target.eval_grid
    tv = target.values
    rg = ref.eval_grid
    rv = ref.values
    th3_lo, th3_hi = theta3_bounds
    u_mid = 0.5 * (tg[0] + tg[-1])
    quad_w = _quad_weights(tg)
    four = mode == "four_param"

    def profile(th2: float, th3: float):
        """Best (theta1, theta4, loss) for a fixed time map, or None at a wall."""
        if not th3_lo <= th3 <= th3_hi:
            return None
        if window_center_bounds is not None:
            s_mid = (u_mid - th2) / th3
            if not window_center_bounds[0] <= s_mid <= window_center_bounds[1]:
                return None
        lo = max(th3 * a + th2, tg[0])
        hi = min(th3 * b + th2, tg[-1])
        if hi - lo < min_overlap_years:
            return None
        s = (tg - th2) / th3
        r = np.interp(s, rg, rv)
        w = np.where((s < a) | (s > b), 0.0, quad_w)
        wr = w * r
        srr = float(wr @ r)
        if four:
            sw = float(w.sum())
            sr = float(wr.sum())
            st = float(w @ tv)
            srt = float(wr @ tv)
            det = srr * sw - sr * sr
            if det <= 1e-12 * max(srr * sw, 1.0):
                return None
            th1 = (srt * sw - sr * st) / det
            th4 = (st * srr - sr * srt) / det
        else:
            if srr <= 0.0:
                return None
            th1 = float(wr @ tv) / srr
            th4 = 0.0
        if th1 <= 0.0:
            return None
        resid = tv - th1 * r - th4
        return th1, th4, float(w @ (resid * resid))

    def obj(v) -> float:
        out = profile(float(v[0]), float(v[1]))
        return np.inf if out is None else out[2]

    v0 = np.array([init.theta2, init.theta3], dtype=float)
    if not np.isfinite(obj(v0)):
        raise ValueError("initial parameters give infinite loss; rescan the shift")

    simplex = np.tile(v0, (3, 1))
    simplex[1, 0] += _SIMPLEX_STEPS[0]
    simplex[2, 1] += _SIMPLEX_STEPS[1]
    res = minimize(
        obj,
        v0,
        method="Nelder-Mead",
        options={
            "maxiter": max_iterations,
            "maxfev": 8 * max_iterations,
            "xatol": xatol,
            "fatol": fatol,
            "initial_simplex": simplex,
        },
    )
    th2, th3 = float(res.x[0]), float(res.x[1])
    th1, th4, loss = profile(th2, th3)
    params = ShapeParams(th1, th2, th3, th4, mode=mode)
    overlap = (
        max(a, (tg[0] - th2) / th3),
        min(b, (tg[-1] - th2) / th3),
    )
    return RegistrationResult(
        params=params,
        loss=loss,
        overlap=overlap,
        iterations=int(res.nit),
        converged=bool(res.success),
    )


def loss_surface_rows(
    target: SmoothedCurve,
    ref: SmoothedCurve,
    theta2_values: np.ndarray,
    theta4_values: np.ndarray,
    theta1: float = 1.0,
    theta3: float = 1.0,
    ref_window: tuple[float, float] | None = None,
    min_overlap_years: float = MIN_OVERLAP_YEARS,
) -> list[tuple[float, float, float]]:
    """(theta2, theta4, loss) rows over a shift/offset grid, for CSV export."""
    a, b = _window(ref, ref_window)
    rows = []
    for th2 in theta2_values:
        for th4 in theta4_values:
            loss = _loss_raw(
                target.eval_grid,
                target.values,
                ref.eval_grid,
                ref.values,
                a,
                b,
                theta1,
                float(th2),
                theta3,
                float(th4),
                min_overlap_years,
            )
            rows.append((float(th2), float(th4), loss))
    return rows


def result_to_json(result: RegistrationResult, extra: dict | None = None) -> str:
    payload = {
        "params": {
            "theta1": result.params.theta1,
            "theta2": result.params.theta2,
            "theta3": result.params.theta3,
            "theta4": result.params.theta4,
            "mode": result.params.mode,
        },
        "loss": result.loss,
        "overlap": [result.overlap[0], result.overlap[1]],
        "iterations": result.iterations,
        "converged": result.converged,
    }
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
