"""Exception taxonomy shared across the pipeline.

Three families map onto CLI exit codes: DataError (1) for anything wrong
with inputs or their geometry, ConvergenceError (2) for iterative
procedures that ran out of budget, ConfigError (3) for bad run
configuration. Library code raises the specific subclasses; the CLI only
needs the families.
"""

from __future__ import annotations


class MortrendError(Exception):
    pass


class DataError(MortrendError):
    pass


class ConvergenceError(MortrendError):
    pass


class ConfigError(MortrendError):
    pass


# -- table parsing ----------------------------------------------------------

class MalformedRow(DataError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        msg = f"malformed row at line {line_no}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class DuplicateCell(DataError):
    def __init__(self, age: int, year: int):
        self.age = age
        self.year = year
        super().__init__(f"duplicate cell for age {age}, year {year}")


class NonNumericRate(DataError):
    def __init__(self, age: int, year: int, token: str = ""):
        self.age = age
        self.year = year
        super().__init__(f"non-numeric rate at age {age}, year {year}: {token!r}")


class InsufficientNeighbors(DataError):
    def __init__(self, year: int):
        self.year = year
        super().__init__(
            f"cannot impute year {year}: no observed neighbor on one side"
        )


# -- decomposition ----------------------------------------------------------

class DegenerateSurface(DataError):
    pass


class InsufficientData(DataError):
    pass


class UnknownAge(DataError):
    def __init__(self, age: int):
        self.age = age
        super().__init__(f"age {age} not present in decomposition")


# -- smoothing --------------------------------------------------------------

class BandwidthTooSmall(DataError):
    def __init__(self, at: float):
        self.at = at
        super().__init__(f"singular local design at grid point {at}")


class TargetUnreachable(DataError):
    pass


# -- registration -----------------------------------------------------------

class OutOfDomain(DataError):
    def __init__(self, point: float):
        self.point = point
        super().__init__(f"point {point} outside curve domain")


class AllEmptyOverlap(DataError):
    pass


# -- common trend -----------------------------------------------------------

class InsufficientCoverage(DataError):
    pass


class DegenerateNormalizer(DataError):
    pass


# -- forecasting ------------------------------------------------------------

class HorizonExceedsReference(DataError):
    def __init__(self, max_feasible_h: int):
        self.max_feasible_h = max_feasible_h
        super().__init__(
            f"requested horizon runs past the reference curve; "
            f"max feasible horizon is {max_feasible_h}"
        )


class CountryMismatch(DataError):
    def __init__(self, expected: str, got: str):
        self.expected = expected
        self.got = got
        super().__init__(f"country mismatch: decomposition is {expected!r}, forecast is {got!r}")


# -- bootstrap --------------------------------------------------------------

class TooFewConverged(ConvergenceError):
    def __init__(self, n_converged: int, required: int):
        self.n_converged = n_converged
        self.required = required
        super().__init__(
            f"only {n_converged} bootstrap replicates converged "
            f"(need at least {required})"
        )
