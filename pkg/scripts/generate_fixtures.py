#!/usr/bin/env python3
"""Regenerate the synthetic fixtures under data/synthetic/.

Everything here is deterministic: rerunning the script rewrites the same
bytes, so the fixtures can be audited against the generator at any time.
Two groups of files come out:

  pair/   a long-record reference country ("anchor", 1947-2012, HMD-style
          text) and a short-record target ("delayed", 1994-2010, sparse CSV
          with four years absent) whose mortality index is a planted affine
          transformation of the anchor's. The registration pipeline run on
          these files recovers PLANTED_THETA; see tests/test_acceptance.py.
  panel/  twelve countries sharing one common index trend through per-country
          amplitude/shift transformations. Ten follow the trend; h01 and h02
          carry a mid-series hump where their index stalls and rises for some
          years instead of declining, which outlier flagging must catch.

The thirteen OBSERVED_ADJUSTMENTS on the delayed country were produced by
scripts/calibrate_pair_target.py. They nudge the planted index so that (a)
the five-nearest-year imputation of the absent years reproduces the planted
trend instead of denting it and (b) the scan-then-fit registration lands on
PLANTED_THETA through the real parse/impute/decompose/smooth pipeline.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mortrend.mortality_data import MortalitySurface, serialize_sparse_csv

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "synthetic"

# ---------------------------------------------------------------- pair fixture

PLANTED_THETA = {"theta1": 1.205, "theta2": 22.5, "theta3": 1.0, "theta4": 0.0}
ANCHOR_YEARS = np.arange(1947, 2013)
DELAYED_YEARS = np.arange(1994, 2011)
MISSING_YEARS = (1996, 1997, 2001, 2006)
OBSERVED_YEARS = np.array([y for y in DELAYED_YEARS if y not in MISSING_YEARS])

# Two-knee declining index trend. The early knee sits before the window the
# delayed country maps onto and balances the two records' index means; the
# late knee falls inside that window and pins the dilation during fitting.
TREND_KNEES = ((1962.0, 3.0), (1986.8, 3.2))
TREND_LATE_AMPLITUDE = 80.0

# From scripts/calibrate_pair_target.py; see module docstring.
OBSERVED_ADJUSTMENTS = np.array(
    [
        0.36420783908126825,
        -0.15988624099178878,
        -0.22661692232474961,
        0.019337336448401517,
        0.47979580919782105,
        2.737526715630668,
        -1.835867612710418,
        -0.6948618015651902,
        0.7676917112442898,
        0.29331060543161597,
        -2.10363133989919,
        0.9868680935812146,
        -0.6278741931207577,
    ]
)


def early_knee_amplitude() -> float:
    """Balance the trend's mean over the anchor years against its mean over
    the window the delayed record maps onto, so both decompositions place
    their index gauge at the same trend level."""
    (s1, w1), (s2, w2) = TREND_KNEES
    sa = ANCHOR_YEARS.astype(float)
    sd = DELAYED_YEARS.astype(float) - PLANTED_THETA["theta2"]
    d1 = np.mean(np.tanh((s1 - sa) / w1)) - np.mean(np.tanh((s1 - sd) / w1))
    d2 = np.mean(np.tanh((s2 - sa) / w2)) - np.mean(np.tanh((s2 - sd) / w2))
    return -TREND_LATE_AMPLITUDE * d2 / d1


def pair_trend(s: np.ndarray) -> np.ndarray:
    (s1, w1), (s2, w2) = TREND_KNEES
    a1 = early_knee_amplitude()
    s = np.asarray(s, dtype=float)
    return a1 * np.tanh((s1 - s) / w1) + TREND_LATE_AMPLITUDE * np.tanh((s2 - s) / w2)


def age_profiles(n_ages: int, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Baseline log-rate curve and unit-sum age loadings."""
    x = np.arange(n_ages, dtype=float)
    a = -9.2 + 0.082 * x + 1.6 * np.exp(-x / (3.0 * scale))
    b = np.exp(-x / (45.0 * scale)) + 0.2
    return a, b / b.sum()


def hmd_table(country: str, years: np.ndarray, a: np.ndarray, b: np.ndarray, k: np.ndarray) -> str:
    lines = [
        f"{country}, total population  (period 1x1)  Last modified: n/a",
        "",
        "  Year          Age             Female            Male           Total",
    ]
    for j, y in enumerate(years):
        for i in range(len(a)):
            age = "110+" if i == 110 else str(i)
            m = float(np.exp(a[i] + b[i] * k[j]))
            lines.append(
                f"  {y}          {age:<6}      {m * 0.9:.8f}       {m * 1.1:.8f}       {m:.8f}"
            )
    return "\n".join(lines) + "\n"


def write_pair() -> dict:
    a_ref, b_ref = age_profiles(111, 1.0)
    k_ref = pair_trend(ANCHOR_YEARS.astype(float))
    (OUT / "anchor_1947_2012.txt").write_text(
        hmd_table("Synthetic stand-in", ANCHOR_YEARS, a_ref, b_ref, k_ref)
    )

    a_tgt, b_tgt = age_profiles(111, 0.9)
    th1, th2 = PLANTED_THETA["theta1"], PLANTED_THETA["theta2"]
    k_tgt = th1 * pair_trend(OBSERVED_YEARS.astype(float) - th2) + OBSERVED_ADJUSTMENTS
    rates = np.exp(a_tgt[:, None] + np.outer(b_tgt, k_tgt))
    surface = MortalitySurface(
        "delayed", "total", np.arange(111), OBSERVED_YEARS, rates
    )
    (OUT / "delayed_1994_2010.csv").write_text(serialize_sparse_csv(surface))

    return {
        "reference": {
            "path": "anchor_1947_2012.txt",
            "format": "hmd_1x1",
            "country_id": "anchor",
            "gender": "total",
            "years": [int(ANCHOR_YEARS[0]), int(ANCHOR_YEARS[-1])],
        },
        "target": {
            "path": "delayed_1994_2010.csv",
            "format": "sparse_csv",
            "country_id": "delayed",
            "gender": "total",
            "years": [int(DELAYED_YEARS[0]), int(DELAYED_YEARS[-1])],
            "missing_years": [int(y) for y in MISSING_YEARS],
            "impute_window": 5,
        },
        "planted_theta": PLANTED_THETA,
        "mode": "three_param",
        "smoothing": {"bandwidth": 1.0, "grid_step": 0.25},
        "scan": {"range": [20.0, 26.0], "step": 1.0},
    }


# --------------------------------------------------------------- panel fixture

PANEL_SEED = 20260818
PANEL_NOISE_SD = 1.0
PANEL_CELL_NOISE_SD = 0.05
PANEL_AGES = 40

# id, first year, last year, amplitude, shift, hump (peak, height, width).
# Shifts among the long-record countries stay within a decade, like the
# calendar-aligned panels the alternation is meant for; p10 is the one
# heavily delayed short record, registered against the fitted trend through
# the two-country path rather than inside the panel alternation.
PANEL_COUNTRIES = [
    ("p01", 1935, 2012, 1.00, 0.0, None),
    ("p02", 1940, 2012, 1.08, -3.0, None),
    ("p03", 1945, 2008, 0.95, 4.0, None),
    ("p04", 1947, 2012, 1.12, -6.0, None),
    ("p05", 1950, 2010, 0.90, 5.0, None),
    ("p06", 1952, 2012, 1.05, -8.0, None),
    ("p07", 1955, 2005, 1.10, 7.0, None),
    ("p08", 1958, 2012, 0.93, -4.0, None),
    ("p09", 1962, 2010, 1.06, 6.0, None),
    ("p10", 1994, 2010, 1.00, 32.0, None),
    ("h01", 1950, 2012, 1.00, -5.0, (1985.0, 25.0, 8.0)),
    ("h02", 1958, 2012, 1.10, 8.0, (1990.0, 22.0, 7.0)),
]


# Aperiodically spaced knees with distinct heights and widths keep curvature
# inside every country's mapped window and give each stretch of the trend a
# recognizable signature. A trend with long near-affine stretches would leave
# the per-country transformation unidentified along the affine ridge, and
# evenly spaced identical knees would allow whole-knee mismatches.
PANEL_KNEES = (
    (35.0, 1925.0, 14.0),
    (25.0, 1952.0, 9.0),
    (40.0, 1981.0, 11.0),
    (18.0, 2006.0, 16.0),
)


def panel_trend(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for height, center, width in PANEL_KNEES:
        out = out + height * np.tanh((center - s) / width)
    return out


def write_panel() -> dict:
    rng = np.random.default_rng(PANEL_SEED)
    panel_dir = OUT / "panel"
    panel_dir.mkdir(parents=True, exist_ok=True)

    x = np.arange(PANEL_AGES, dtype=float)
    a = -8.8 + 0.07 * x + 1.4 * np.exp(-x / 4.0)
    b = np.exp(-x / 30.0) + 0.25
    b = b / b.sum()

    entries = []
    for cid, y0, y1, th1, th2, hump in PANEL_COUNTRIES:
        years = np.arange(y0, y1 + 1)
        k = th1 * panel_trend(years.astype(float) - th2)
        if hump is not None:
            peak, height, width = hump
            k = k + height * np.exp(-(((years - peak) / width) ** 2))
        k = k + rng.normal(0.0, PANEL_NOISE_SD, size=k.size)
        log_rates = a[:, None] + np.outer(b, k)
        log_rates += rng.normal(0.0, PANEL_CELL_NOISE_SD, size=log_rates.shape)
        surface = MortalitySurface(
            cid, "total", np.arange(PANEL_AGES), years, np.exp(log_rates)
        )
        (panel_dir / f"{cid}.csv").write_text(serialize_sparse_csv(surface))
        entries.append(
            {
                "id": cid,
                "path": f"panel/{cid}.csv",
                "years": [int(y0), int(y1)],
                "theta1": th1,
                "theta2": th2,
                "theta3": 1.0,
                "hump": None
                if hump is None
                else {"peak": hump[0], "height": hump[1], "width": hump[2]},
            }
        )

    return {
        "format": "sparse_csv",
        "countries": entries,
        "outliers": ["h01", "h02"],
        "shortest_record": "p10",
        "mode": "four_param",
        "noise_sd": PANEL_NOISE_SD,
        "cell_noise_sd": PANEL_CELL_NOISE_SD,
        "seed": PANEL_SEED,
        "smoothing": {"target_df": 6.0, "grid_step": 1.0},
        "delayed_registration": {
            "target": "p10",
            "smoothing": {"bandwidth": 1.0, "grid_step": 0.25},
            "scan": {"range": [29.0, 35.0], "step": 1.0},
            "min_horizon": 32,
        },
    }


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = {"pair": write_pair(), "panel": write_panel()}
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    n_files = len(list(OUT.rglob("*.csv"))) + len(list(OUT.rglob("*.txt")))
    print(f"wrote {n_files} data files + manifest.json under {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
