"""Long-horizon forecasts read off a registered reference curve.

Once a country's trend is registered onto a reference (another country's
trend or the shared one), its future time-index values are just the
reference evaluated at the back-mapped future years. The reach of that
readout is mechanical: year t + h is forecastable iff
(t + h - theta2) / theta3 still lies inside the reference domain, so a
country lagging the reference (theta2 > 0) can be projected far beyond the
end of its own record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .curve_registration import ShapeParams
from .errors import CountryMismatch, HorizonExceedsReference, UnknownAge
from .kernel_smoothing import SmoothedCurve
from .lee_carter import DriftModel, LCDecomposition
from .mortality_data import MortalitySurface

SOURCES = ("drift", "two_country", "common_trend")


@dataclass
class TrendForecast:
    country_id: str
    years: np.ndarray
    k_values: np.ndarray
    source: str
    params_used: ShapeParams | None = None

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        self.k_values = np.asarray(self.k_values, dtype=float)
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


def max_horizon(ref: SmoothedCurve, p: ShapeParams, last_obs_year: int) -> int:
    """Largest h >= 0 with (last_obs_year + h - theta2) / theta3 inside the domain."""
    sup = ref.domain[1]
    h = int(np.floor(p.theta3 * sup + p.theta2 - last_obs_year + 1e-9))
    if h < 1:
        return 0
    # the near end of the domain can also bind when the reference starts late
    lo = ref.domain[0]
    h_min = int(np.ceil(p.theta3 * lo + p.theta2 - last_obs_year - 1e-9))
    if h_min > h:
        return 0
    return h


def forecast_via_reference(
    ref: SmoothedCurve,
    p: ShapeParams,
    last_obs_year: int,
    horizon: int,
    country_id: str = "",
    source: str = "common_trend",
) -> TrendForecast:
    """Read k(t + h) = theta1 * ref((t + h - theta2)/theta3) + theta4, h = 1..horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    feasible = max_horizon(ref, p, last_obs_year)
    years = last_obs_year + np.arange(1, horizon + 1)
    s = (years - p.theta2) / p.theta3
    lo, hi = ref.domain
    if horizon > feasible or np.any(s < lo - 1e-9):
        raise HorizonExceedsReference(feasible)
    k = p.theta1 * np.interp(s, ref.eval_grid, ref.values) + p.theta4
    return TrendForecast(
        country_id=country_id,
        years=years,
        k_values=k,
        source=source,
        params_used=p,
    )


def forecast_via_drift(
    model: DriftModel, horizon: int, country_id: str = ""
) -> TrendForecast:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    j = np.arange(1, horizon + 1)
    return TrendForecast(
        country_id=country_id,
        years=model.last_year + j,
        k_values=model.last_k + j * model.drift,
        source="drift",
    )


def forecast_surface(dec: LCDecomposition, tf: TrendForecast) -> MortalitySurface:
    """Expand a time-index forecast to a full age-by-year rate surface."""
    if dec.country_id != tf.country_id:
        raise CountryMismatch(dec.country_id, tf.country_id)
    rates = np.exp(dec.a_x[:, None] + np.outer(dec.b_x, tf.k_values))
    return MortalitySurface(
        country_id=dec.country_id,
        gender=dec.gender,
        ages=dec.ages.copy(),
        years=tf.years.copy(),
        rates=rates,
        missing_years=frozenset(),
    )


def forecast_rate_at(dec: LCDecomposition, tf: TrendForecast, age: int, year: int) -> float:
    """Single forecast rate; the year must be one of the forecast years."""
    hits, = np.nonzero(dec.ages == age)
    if hits.size == 0:
        raise UnknownAge(age)
    yhits, = np.nonzero(tf.years == year)
    if yhits.size == 0:
        raise ValueError(f"year {year} not in forecast range")
    i, j = int(hits[0]), int(yhits[0])
    return float(np.exp(dec.a_x[i] + dec.b_x[i] * tf.k_values[j]))


def forecast_to_json(tf: TrendForecast) -> str:
    payload = {
        "country_id": tf.country_id,
        "source": tf.source,
        "years": [int(y) for y in tf.years],
        "k_values": [float(v) for v in tf.k_values],
        "params_used": None
        if tf.params_used is None
        else {
            "theta1": tf.params_used.theta1,
            "theta2": tf.params_used.theta2,
            "theta3": tf.params_used.theta3,
            "theta4": tf.params_used.theta4,
            "mode": tf.params_used.mode,
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def forecast_to_csv(tf: TrendForecast) -> str:
    out = ["year,k"]
    for y, v in zip(tf.years, tf.k_values):
        out.append(f"{int(y)},{float(v)!r}")
    return "\n".join(out) + "\n"
