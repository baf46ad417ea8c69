"""Shared builders for the test suite.

Synthetic inputs are built from closed-form curves so every expected value
has an independent derivation: surfaces are assembled from known (a_x, b_x,
k_t) components, and trend curves come from a smooth declining S-shape that
stands in for a national time index.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np
import pytest
from hypothesis import settings

from mortrend.kernel_smoothing import SmoothedCurve, grid_over
from mortrend.mortality_data import MortalitySurface

settings.register_profile("suite", deadline=None, max_examples=30)
settings.load_profile("suite")

REPO = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = REPO / "data" / "synthetic"


def declining_trend(times: np.ndarray, amplitude: float = 100.0,
                    center: float = 1979.5, width: float = 27.0) -> np.ndarray:
    """Smooth declining S-curve used as a stand-in national time index."""
    return -amplitude * np.tanh((np.asarray(times, dtype=float) - center) / width)


def trend_curve(lo: float, hi: float, step: float = 0.25, amplitude: float = 100.0,
                center: float = 1979.5, width: float = 27.0) -> SmoothedCurve:
    grid = grid_over(lo, hi, step)
    return SmoothedCurve(
        eval_grid=grid,
        values=declining_trend(grid, amplitude, center, width),
        domain=(float(grid[0]), float(grid[-1])),
        bandwidth=1.0,
        source_n=grid.size,
    )


def build_rank_one_surface(
    n_ages: int = 5,
    years: np.ndarray | None = None,
    country_id: str = "testland",
    gender: str = "total",
    seed: int = 7,
):
    """Surface with exactly log m = a_x + b_x k_t, sum(b) = 1, sum(k) = 0, k declining."""
    rng = np.random.default_rng(seed)
    if years is None:
        years = np.arange(2000, 2008)
    ages = np.arange(n_ages)
    a_x = -6.0 + 0.04 * ages + 0.1 * rng.standard_normal(n_ages)
    raw_b = 0.5 + rng.random(n_ages)
    b_x = raw_b / raw_b.sum()
    k_t = -np.linspace(-3.0, 3.0, years.size)
    k_t = -(k_t - k_t.mean()) if np.polyfit(np.arange(years.size), k_t, 1)[0] > 0 else k_t - k_t.mean()
    rates = np.exp(a_x[:, None] + np.outer(b_x, k_t))
    surface = MortalitySurface(
        country_id=country_id,
        gender=gender,
        ages=ages,
        years=years,
        rates=rates,
        missing_years=frozenset(),
    )
    return surface, a_x, b_x, k_t


@pytest.fixture
def rank_one_surface():
    return build_rank_one_surface()


@pytest.fixture(scope="session")
def fixture_manifest():
    path = FIXTURES / "manifest.json"
    if not path.exists():
        pytest.skip("synthetic fixtures not generated")
    return json.loads(path.read_text())
