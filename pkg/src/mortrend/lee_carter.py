"""Rank-1 log-mortality decomposition and the drift baseline forecast.

log m(x, t) is modeled as a_x + b_x k_t. The age profile a_x is the per-age
mean over years; the leading SVD pair of the centered matrix gives b_x and
k_t, normalized so that sum(b_x) = 1 and sum(k_t) = 0 (the recentering of
k_t is absorbed back into a_x, so the fitted surface is unchanged). Signs
are chosen jointly so the least-squares line through k_t slopes downward,
matching the usual presentation of improving mortality.

The baseline time-series model for k_t is a random walk with drift; its
drift is the mean first difference and the innovation sd the sample
standard deviation of the first differences.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSurface, InsufficientData, UnknownAge
from .kernel_smoothing import CurveSample
from .mortality_data import LogMortalitySurface


@dataclass
class LCDecomposition:
    country_id: str
    gender: str
    ages: np.ndarray
    years: np.ndarray
    a_x: np.ndarray
    b_x: np.ndarray
    k_t: np.ndarray
    residual_variance: float

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=int)
        self.years = np.asarray(self.years, dtype=int)
        self.a_x = np.asarray(self.a_x, dtype=float)
        self.b_x = np.asarray(self.b_x, dtype=float)
        self.k_t = np.asarray(self.k_t, dtype=float)

    def k_sample(self) -> CurveSample:
        return CurveSample(times=self.years.astype(float), values=self.k_t.copy())


@dataclass
class DriftModel:
    drift: float
    innovation_sd: float
    last_k: float
    last_year: int


def fit_lee_carter(surface: LogMortalitySurface) -> LCDecomposition:
    """Fit the rank-1 decomposition by SVD of the centered log surface.

    Missing cells are excluded from the a_x means and contribute zero to the
    centered matrix (the row-mean fill), so they carry no signal into the
    SVD. Requires at least 2 ages and 2 years with data; a surface that is
    flat in time (or an age profile summing to zero) is degenerate.
    """
    M = surface.log_rates
    if M.shape[0] < 2 or M.shape[1] < 2:
        raise InsufficientData(
            f"need at least 2 ages and 2 years, got {M.shape[0]}x{M.shape[1]}"
        )
    observed = np.isfinite(M)
    if not np.all(observed.sum(axis=1) >= 1):
        bad = int(surface.ages[int(np.argmin(observed.sum(axis=1)))])
        raise InsufficientData(f"age {bad} has no observed cells")
    a_x = np.nansum(np.where(observed, M, 0.0), axis=1) / observed.sum(axis=1)
    centered = np.where(observed, M - a_x[:, None], 0.0)

    U, S, Vt = np.linalg.svd(centered, full_matrices=False)
    s1 = float(S[0])
    scale = max(1.0, float(np.abs(a_x).max()))
    if s1 <= 1e-12 * scale:
        raise DegenerateSurface("surface is flat in time; no rank-1 trend")
    u1 = U[:, 0]
    v1 = Vt[0, :]
    c = float(u1.sum())
    if abs(c) <= 1e-12:
        raise DegenerateSurface("age loading sums to zero; cannot normalize")
    b_x = u1 / c
    k_t = s1 * c * v1

    # shift sum(k) = 0 into a_x, preserving a_x + b_x k_t
    k_mean = float(k_t.mean())
    k_t = k_t - k_mean
    a_x = a_x + b_x * k_mean

    # joint sign flip: fitted time index should trend downward
    t = np.arange(k_t.size, dtype=float)
    slope = float(np.polyfit(t, k_t, 1)[0]) if k_t.size >= 2 else 0.0
    if slope > 0:
        k_t = -k_t
        b_x = -b_x

    fitted = a_x[:, None] + np.outer(b_x, k_t)
    resid = np.where(observed, M - fitted, 0.0)
    residual_variance = float((resid**2).sum() / observed.sum())

    return LCDecomposition(
        country_id=surface.country_id,
        gender=surface.gender,
        ages=surface.ages.copy(),
        years=surface.years.copy(),
        a_x=a_x,
        b_x=b_x,
        k_t=k_t,
        residual_variance=residual_variance,
    )


def fit_drift(k: CurveSample) -> DriftModel:
    """Random walk with drift for k_t: mean and sd of the first differences.

    Needs at least 3 consecutive-year observations (an imputed series
    qualifies); the sd uses the n-1 denominator.
    """
    if k.n < 3:
        raise InsufficientData(f"need >= 3 observations for a drift fit, got {k.n}")
    steps = np.diff(k.times)
    if not np.allclose(steps, 1.0):
        raise InsufficientData("drift fit requires consecutive years; impute gaps first")
    diffs = np.diff(k.values)
    drift = float(diffs.mean())
    innovation_sd = float(diffs.std(ddof=1))
    return DriftModel(
        drift=drift,
        innovation_sd=innovation_sd,
        last_k=float(k.values[-1]),
        last_year=int(round(k.times[-1])),
    )


def forecast_k_drift(model: DriftModel, horizon: int) -> CurveSample:
    """Point forecast k(t+j) = k(t) + j * drift for j = 1..horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    j = np.arange(1, horizon + 1, dtype=float)
    return CurveSample(times=model.last_year + j, values=model.last_k + j * model.drift)


def reconstruct_mortality(dec: LCDecomposition, k_value: float, age: int) -> float:
    """Death rate exp(a_x + b_x k) at one age for a given time-index value."""
    hits, = np.nonzero(dec.ages == age)
    if hits.size == 0:
        raise UnknownAge(age)
    i = int(hits[0])
    return float(np.exp(dec.a_x[i] + dec.b_x[i] * k_value))


# -- serialization -----------------------------------------------------------
#
# Floats are written with repr(), which round-trips exactly in both the CSV
# sections and JSON.

def decomposition_to_json(dec: LCDecomposition) -> str:
    payload = {
        "country_id": dec.country_id,
        "gender": dec.gender,
        "ages": [int(a) for a in dec.ages],
        "years": [int(y) for y in dec.years],
        "a_x": [float(v) for v in dec.a_x],
        "b_x": [float(v) for v in dec.b_x],
        "k_t": [float(v) for v in dec.k_t],
        "residual_variance": float(dec.residual_variance),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def decomposition_from_json(text: str) -> LCDecomposition:
    d = json.loads(text)
    return LCDecomposition(
        country_id=d["country_id"],
        gender=d["gender"],
        ages=np.array(d["ages"], dtype=int),
        years=np.array(d["years"], dtype=int),
        a_x=np.array(d["a_x"], dtype=float),
        b_x=np.array(d["b_x"], dtype=float),
        k_t=np.array(d["k_t"], dtype=float),
        residual_variance=float(d["residual_variance"]),
    )


def decomposition_to_csv(dec: LCDecomposition) -> str:
    """Sectioned CSV: '# component' header lines, then index,value rows."""
    out = io.StringIO()
    out.write(f"# decomposition,{dec.country_id},{dec.gender}\n")
    out.write("# a_x\nage,value\n")
    for a, v in zip(dec.ages, dec.a_x):
        out.write(f"{int(a)},{float(v)!r}\n")
    out.write("# b_x\nage,value\n")
    for a, v in zip(dec.ages, dec.b_x):
        out.write(f"{int(a)},{float(v)!r}\n")
    out.write("# k_t\nyear,value\n")
    for y, v in zip(dec.years, dec.k_t):
        out.write(f"{int(y)},{float(v)!r}\n")
    out.write("# residual_variance\nvalue\n")
    out.write(f"{dec.residual_variance!r}\n")
    return out.getvalue()


def decomposition_from_csv(text: str) -> LCDecomposition:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# decomposition,"):
        raise ValueError("not a decomposition CSV")
    _, country_id, gender = lines[0][2:].split(",")
    sections: dict[str, list[list[str]]] = {}
    current: list[list[str]] | None = None
    for line in lines[1:]:
        if line.startswith("# "):
            current = []
            sections[line[2:]] = current
        elif line.strip() and current is not None:
            current.append(next(csv.reader([line])))
    def col(name, want_header):
        rows = sections[name]
        if rows[0] != want_header:
            raise ValueError(f"unexpected header in section {name}: {rows[0]}")
        idx = np.array([int(r[0]) for r in rows[1:]], dtype=int)
        vals = np.array([float(r[1]) for r in rows[1:]], dtype=float)
        return idx, vals
    ages, a_x = col("a_x", ["age", "value"])
    ages_b, b_x = col("b_x", ["age", "value"])
    years, k_t = col("k_t", ["year", "value"])
    if not np.array_equal(ages, ages_b):
        raise ValueError("a_x and b_x sections disagree on ages")
    rv = float(sections["residual_variance"][1][0])
    return LCDecomposition(
        country_id=country_id,
        gender=gender,
        ages=ages,
        years=years,
        a_x=a_x,
        b_x=b_x,
        k_t=k_t,
        residual_variance=rv,
    )
