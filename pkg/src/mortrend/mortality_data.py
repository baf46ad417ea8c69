"""Mortality surfaces: parsing, gap-year imputation, log transform.

A surface is a dense (age x year) matrix of central death rates for one
country and gender. Cells with no observation are NaN. Two text formats are
read:

``hmd_1x1``
    Whitespace- or comma-delimited columns Year, Age, Female, Male, Total,
    one row per (year, age). A leading title line and the column-header line
    are tolerated. The age token ``110+`` means 110; a rate of ``.`` is a
    missing cell. One gender column is selected at parse time.

``sparse_csv``
    Header ``country,gender,year,age,rate``; long-form rows, any order.

Calendar years absent from the source inside the observed span are recorded
in ``missing_years`` and can be filled by ``impute_missing_years``: each
missing cell takes the mean of the observed rates at that age over the
nearest ``window`` observed calendar years (window shrinks at span edges
where fewer observed years exist). Imputation happens on the rate scale,
before any log transform, and never touches observed cells.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateCell,
    InsufficientNeighbors,
    MalformedRow,
    NonNumericRate,
)

GENDERS = ("female", "male", "total")
DEFAULT_IMPUTE_WINDOW = 5


@dataclass
class MortalitySurface:
    country_id: str
    gender: str
    ages: np.ndarray
    years: np.ndarray
    rates: np.ndarray  # shape (len(ages), len(years)), NaN where unobserved
    missing_years: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=int)
        self.years = np.asarray(self.years, dtype=int)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if self.rates.shape != (self.ages.size, self.years.size):
            raise ValueError("rates shape must be (len(ages), len(years))")
        if self.ages.size >= 2 and not np.all(np.diff(self.ages) > 0):
            raise ValueError("ages must be strictly increasing")
        if self.years.size >= 2 and not np.all(np.diff(self.years) > 0):
            raise ValueError("years must be strictly increasing")
        with np.errstate(invalid="ignore"):
            if np.any(self.rates < 0):
                raise ValueError("rates must be nonnegative where present")
        self.missing_years = frozenset(int(y) for y in self.missing_years)


@dataclass
class LogMortalitySurface:
    country_id: str
    gender: str
    ages: np.ndarray
    years: np.ndarray
    log_rates: np.ndarray
    missing_years: frozenset[int] = field(default_factory=frozenset)
    zero_cells: int = 0

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=int)
        self.years = np.asarray(self.years, dtype=int)
        self.log_rates = np.asarray(self.log_rates, dtype=float)


def _parse_age(token: str, line_no: int) -> int:
    token = token.strip()
    if token.endswith("+"):
        token = token[:-1]
    try:
        return int(token)
    except ValueError:
        raise MalformedRow(line_no, f"bad age token {token!r}") from None


def _parse_year(token: str, line_no: int) -> int:
    try:
        return int(token.strip())
    except ValueError:
        raise MalformedRow(line_no, f"bad year token {token!r}") from None


def _parse_rate(token: str, age: int, year: int) -> float:
    token = token.strip()
    if token == ".":
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise NonNumericRate(age, year, token) from None
    if not np.isfinite(value):
        raise NonNumericRate(age, year, token)
    return value


def _assemble(country_id, gender, cells):
    ages = np.array(sorted({a for a, _ in cells}), dtype=int)
    years_observed = np.array(sorted({y for _, y in cells}), dtype=int)
    age_ix = {a: i for i, a in enumerate(ages)}
    year_ix = {y: j for j, y in enumerate(years_observed)}
    rates = np.full((ages.size, years_observed.size), np.nan)
    for (a, y), r in cells.items():
        rates[age_ix[a], year_ix[y]] = r
    gaps = frozenset(
        int(y)
        for y in range(int(years_observed[0]), int(years_observed[-1]) + 1)
        if y not in year_ix
    )
    return MortalitySurface(
        country_id=country_id,
        gender=gender,
        ages=ages,
        years=years_observed,
        rates=rates,
        missing_years=gaps,
    )


def parse_mortality_table(
    text: str,
    fmt: str,
    country_id: str | None = None,
    gender: str | None = None,
) -> MortalitySurface:
    """Parse one surface from text in the given format ('hmd_1x1' or 'sparse_csv').

    For hmd_1x1 the country id must be supplied (the file does not carry one)
    and ``gender`` picks the column (default 'total'). For sparse_csv the file
    carries both; arguments act as filters only when given, and a file with
    several (country, gender) pairs and no filter is rejected.
    """
    if fmt == "hmd_1x1":
        return _parse_hmd_1x1(text, country_id or "", gender or "total")
    if fmt == "sparse_csv":
        return _parse_sparse_csv(text, country_id, gender)
    raise ValueError(f"unknown format {fmt!r}")


def _parse_hmd_1x1(text: str, country_id: str, gender: str) -> MortalitySurface:
    if gender not in GENDERS:
        raise ValueError(f"gender must be one of {GENDERS}")
    col = {"female": 2, "male": 3, "total": 4}[gender]
    cells: dict[tuple[int, int], float] = {}
    started = False
    for line_no, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if not started:
            # skip a title line and the header row before the first data row
            if not tokens[0][:1].isdigit():
                continue
            started = True
        if len(tokens) != 5:
            raise MalformedRow(line_no, f"expected 5 columns, got {len(tokens)}")
        year = _parse_year(tokens[0], line_no)
        age = _parse_age(tokens[1], line_no)
        if (age, year) in cells:
            raise DuplicateCell(age, year)
        cells[(age, year)] = _parse_rate(tokens[col], age, year)
    if not cells:
        raise MalformedRow(0, "no data rows")
    return _assemble(country_id, gender, cells)


def _parse_sparse_csv(
    text: str, country_id: str | None, gender: str | None
) -> MortalitySurface:
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise MalformedRow(0, "empty file")
    header = [tok.strip().lower() for tok in lines[0].split(",")]
    if header != ["country", "gender", "year", "age", "rate"]:
        raise MalformedRow(1, f"unexpected header {lines[0]!r}")
    cells: dict[tuple[int, int], float] = {}
    seen: set[tuple[str, str]] = set()
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        tokens = [tok.strip() for tok in raw.split(",")]
        if len(tokens) != 5:
            raise MalformedRow(line_no, f"expected 5 fields, got {len(tokens)}")
        c, g, year_tok, age_tok, rate_tok = tokens
        g = g.lower()
        if country_id is not None and c != country_id:
            continue
        if gender is not None and g != gender:
            continue
        year = _parse_year(year_tok, line_no)
        age = _parse_age(age_tok, line_no)
        seen.add((c, g))
        if len(seen) > 1:
            raise MalformedRow(line_no, f"mixed (country, gender) pairs: {sorted(seen)}")
        if (age, year) in cells:
            raise DuplicateCell(age, year)
        cells[(age, year)] = _parse_rate(rate_tok, age, year)
    if not cells:
        raise MalformedRow(0, "no rows matched the requested country/gender")
    (c, g), = seen
    return _assemble(c, g, cells)


def impute_missing_years(
    surface: MortalitySurface, window: int = DEFAULT_IMPUTE_WINDOW
) -> MortalitySurface:
    """Fill gap years with nearest-neighbor means on the rate scale.

    Each missing cell (age, year) becomes the mean of that age's observed
    rates over the ``window`` observed calendar years nearest to the missing
    year (ties broken toward the earlier year; fewer than ``window`` used
    when the record is short). Every missing year must have at least one
    observed year within floor(window/2) on each side, otherwise
    InsufficientNeighbors. Observed cells are never modified, so the
    operation is idempotent.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    observed_years = [int(y) for y in surface.years]
    observed_set = set(observed_years)
    gaps = sorted(
        y
        for y in range(observed_years[0], observed_years[-1] + 1)
        if y not in observed_set
    )
    if not gaps:
        return surface
    half = window // 2
    for y in gaps:
        left = any((y - d) in observed_set for d in range(1, half + 1))
        right = any((y + d) in observed_set for d in range(1, half + 1))
        if not (left and right):
            raise InsufficientNeighbors(y)

    all_years = np.array(sorted(observed_years + gaps), dtype=int)
    n_ages = surface.ages.size
    rates = np.full((n_ages, all_years.size), np.nan)
    old_ix = {int(y): j for j, y in enumerate(surface.years)}
    for j, y in enumerate(all_years):
        if int(y) in old_ix:
            rates[:, j] = surface.rates[:, old_ix[int(y)]]

    for y in gaps:
        j = int(np.searchsorted(all_years, y))
        for i in range(n_ages):
            donors = [
                (abs(yy - y), yy, surface.rates[i, old_ix[yy]])
                for yy in observed_years
                if np.isfinite(surface.rates[i, old_ix[yy]])
            ]
            if not donors:
                continue  # the age has no observations at all; leave the cell NaN
            donors.sort(key=lambda t: (t[0], t[1]))
            take = [v for _, _, v in donors[:window]]
            rates[i, j] = float(np.mean(take))

    return MortalitySurface(
        country_id=surface.country_id,
        gender=surface.gender,
        ages=surface.ages.copy(),
        years=all_years,
        rates=rates,
        missing_years=frozenset(gaps),
    )


def log_transform(surface: MortalitySurface) -> LogMortalitySurface:
    """Elementwise natural log; zero rates become missing cells, counted."""
    rates = surface.rates
    zero_mask = rates == 0.0
    zero_cells = int(np.count_nonzero(zero_mask))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rates = np.log(rates)
    log_rates[zero_mask] = np.nan
    return LogMortalitySurface(
        country_id=surface.country_id,
        gender=surface.gender,
        ages=surface.ages.copy(),
        years=surface.years.copy(),
        log_rates=log_rates,
        missing_years=surface.missing_years,
        zero_cells=zero_cells,
    )


def serialize_sparse_csv(surface: MortalitySurface) -> str:
    """Canonical sparse_csv text: rows sorted by (year, age), NaN cells skipped."""
    out = ["country,gender,year,age,rate"]
    for j, y in enumerate(surface.years):
        for i, a in enumerate(surface.ages):
            r = surface.rates[i, j]
            if np.isfinite(r):
                out.append(
                    f"{surface.country_id},{surface.gender},{int(y)},{int(a)},{float(r)!r}"
                )
    return "\n".join(out) + "\n"
