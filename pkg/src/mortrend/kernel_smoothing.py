"""Local-linear kernel smoothing with degrees-of-freedom bandwidth selection.

The smoother fits a weighted least-squares line at every evaluation point,
with Gaussian kernel weights K((t - u) / h), and reads off the intercept.
Because the estimate is linear in the observations, the whole operation is
a matrix: ``values_hat = smoother_matrix(...) @ values``. The trace of that
matrix evaluated at the sample points is the effective model degrees of
freedom, which is how bandwidths are made comparable across series of very
different lengths: pick h to hit a common target df.

df is monotone decreasing in h, from n (interpolation) down to 2 (a single
global line), so the df equation is solved by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BandwidthTooSmall, OutOfDomain, TargetUnreachable

DEFAULT_TARGET_DF = 6.0
DEFAULT_GRID_STEP = 0.25


@dataclass
class CurveSample:
    """Discrete time series (t_i, y_i), strictly increasing times."""

    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d and equal length")
        if self.times.size >= 2 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class SmoothedCurve:
    """Curve estimate on a fixed grid, evaluated elsewhere by linear interpolation."""

    eval_grid: np.ndarray
    values: np.ndarray
    domain: tuple[float, float]
    bandwidth: float
    source_n: int
    coverage: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.eval_grid = np.asarray(self.eval_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.domain = (float(self.domain[0]), float(self.domain[1]))

    def value_at(self, u):
        """Evaluate by linear interpolation; raises OutOfDomain outside the domain."""
        u_arr = np.asarray(u, dtype=float)
        lo, hi = self.domain
        bad = (u_arr < lo - 1e-9) | (u_arr > hi + 1e-9)
        if np.any(bad):
            raise OutOfDomain(float(np.atleast_1d(u_arr)[np.atleast_1d(bad)][0]))
        out = np.interp(u_arr, self.eval_grid, self.values)
        return float(out) if np.isscalar(u) else out

    @property
    def span(self) -> float:
        return self.domain[1] - self.domain[0]


def grid_over(lo: float, hi: float, step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    """Regular grid from lo toward hi (inclusive when step divides the span)."""
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def smoother_matrix(
    times: np.ndarray,
    bandwidth: float,
    eval_grid: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Matrix L with (L @ values)[j] the local-linear fit at eval_grid[j].

    Row j solves the kernel-weighted least-squares line centered at u_j and
    keeps the intercept. Raises BandwidthTooSmall where the local design is
    numerically singular (all kernel mass collapsed onto one point).
    """
    times = np.asarray(times, dtype=float)
    eval_grid = np.asarray(eval_grid, dtype=float)
    if bandwidth <= 0 or not np.isfinite(bandwidth):
        raise ValueError("bandwidth must be positive and finite")

    x0 = eval_grid[:, None] - times[None, :]
    w = np.exp(-0.5 * (x0 / bandwidth) ** 2)
    if sample_weights is not None:
        w = w * np.asarray(sample_weights, dtype=float)[None, :]
    s0 = w.sum(axis=1)
    s1 = (w * x0).sum(axis=1)
    s2 = (w * x0 * x0).sum(axis=1)
    denom = s0 * s2 - s1 * s1
    ok = denom > 1e-13 * (s0 * s2 + s1 * s1)
    # a lone sample point with all the mass is still a valid (flat) fit there
    exact = (~ok) & (s0 > 0) & (np.abs(s1) <= 1e-300)
    if np.any(~ok & ~exact):
        bad = int(np.argmax(~ok & ~exact))
        raise BandwidthTooSmall(float(eval_grid[bad]))
    L = np.empty_like(w)
    good = np.where(ok)[0]
    L[good] = (w[good] * (s2[good, None] - x0[good] * s1[good, None])) / denom[good, None]
    rest = np.where(~ok)[0]
    if rest.size:
        L[rest] = w[rest] / s0[rest, None]
    return L


def local_linear_smooth(
    sample: CurveSample, bandwidth: float, eval_grid: np.ndarray | None = None
) -> SmoothedCurve:
    """Smooth a series onto a grid (default: quarter-year over the data span)."""
    if eval_grid is None:
        eval_grid = grid_over(sample.times[0], sample.times[-1])
    L = smoother_matrix(sample.times, bandwidth, eval_grid, sample.weights)
    values = L @ sample.values
    return SmoothedCurve(
        eval_grid=np.asarray(eval_grid, dtype=float),
        values=values,
        domain=(float(eval_grid[0]), float(eval_grid[-1])),
        bandwidth=float(bandwidth),
        source_n=sample.n,
    )


def effective_df(sample: CurveSample, bandwidth: float) -> float:
    """Trace of the hat matrix: the smoother's effective degrees of freedom."""
    L = smoother_matrix(sample.times, bandwidth, sample.times, sample.weights)
    return float(np.trace(L))


def bandwidth_for_df(
    sample: CurveSample, target_df: float, tol: float = 1e-3, max_iter: int = 200
) -> float:
    """Solve effective_df(h) = target_df by bisection on a wide bracket.

    The bracket is [span/(10 n), 10 span]; df runs from about n down to
    about 2 across it. Raises TargetUnreachable when the target lies outside
    what the bracket attains (including target_df outside (2, n)).
    """
    n = sample.n
    if not 2.0 < target_df < n:
        raise TargetUnreachable(f"target df {target_df} outside (2, {n})")
    lo = sample.span / (10.0 * n)
    hi = 10.0 * sample.span
    df_lo = effective_df(sample, lo)
    df_hi = effective_df(sample, hi)
    if not (df_hi <= target_df <= df_lo):
        raise TargetUnreachable(
            f"target df {target_df} not attainable in bracket "
            f"[{df_lo:.4f} at h={lo:.4g}, {df_hi:.4f} at h={hi:.4g}]"
        )
    for _ in range(max_iter):
        mid = np.sqrt(lo * hi)
        df_mid = effective_df(sample, mid)
        if abs(df_mid - target_df) <= tol:
            return float(mid)
        if df_mid > target_df:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-14:
            break
    raise TargetUnreachable(f"bisection stalled before reaching df {target_df}")


def smooth_to_df(
    sample: CurveSample,
    target_df: float = DEFAULT_TARGET_DF,
    grid_step: float = DEFAULT_GRID_STEP,
) -> SmoothedCurve:
    """Bandwidth selection and smoothing in one step (the pipeline default)."""
    h = bandwidth_for_df(sample, target_df)
    grid = grid_over(sample.times[0], sample.times[-1], grid_step)
    return local_linear_smooth(sample, h, grid)
