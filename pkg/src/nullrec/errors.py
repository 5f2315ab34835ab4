"""Exception hierarchy shared across the toolkit.

Every condition that a caller can act on gets its own class; the CLI maps
them onto distinct exit codes.
"""

from __future__ import annotations


class NullrecError(Exception):
    """Base class for all toolkit errors."""


# --- finite-chain model validation -----------------------------------------

class NotStochastic(NullrecError):
    def __init__(self, row: int, row_sum: float):
        self.row = row
        self.row_sum = row_sum
        super().__init__(f"row {row} of P is not a probability vector (sum={row_sum!r})")


class MinorizationViolated(NullrecError):
    def __init__(self, i: int, j: int, deficit: float):
        self.i = i
        self.j = j
        self.deficit = deficit
        super().__init__(
            f"s[{i}]*nu[{j}] exceeds P[{i}][{j}] by {deficit:.3e}; (s, nu) is not an atom for P"
        )


class NotIrreducible(NullrecError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        super().__init__(f"transition graph splits into {len(components)} strongly "
                         f"connected components: {components}")


# --- regeneration algebra ----------------------------------------------------

class SeriesDiverges(NullrecError):
    """The taboo-kernel Neumann series does not converge (no regeneration mass)."""


class OrderTooLarge(NullrecError):
    def __init__(self, m: int, cap: int):
        self.m = m
        self.cap = cap
        super().__init__(f"moment order {m} exceeds the supported cap {cap}")


class TruncationInsufficient(NullrecError):
    def __init__(self, tail_bound: float, tol: float):
        self.tail_bound = tail_bound
        self.tol = tol
        super().__init__(f"series tail bound {tail_bound:.3e} exceeds tolerance {tol:.3e}")


class CoefficientMassDeficit(NullrecError):
    def __init__(self, mass: float, tol: float):
        self.mass = mass
        self.tol = tol
        super().__init__(
            f"regeneration-gap coefficients sum to {mass!r} < 1 - {tol!r}; "
            "the driving chain does not regenerate with probability one"
        )


class NegativeVariance(NullrecError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"computed block variance {value!r} is negative beyond "
                         "rounding tolerance; the model is inconsistent")


# --- simulation and process specs -------------------------------------------

class InvalidHalfwidth(NullrecError):
    pass


class UnknownProcessFamily(NullrecError):
    pass


class InvalidSpec(NullrecError):
    pass


class WrongFamily(NullrecError):
    pass


# --- estimation ---------------------------------------------------------------

class EmptyNeighborhood(NullrecError):
    """No observation carries positive kernel weight at the evaluation point."""


class EmptyOccupation(NullrecError):
    """The occupation count of the reference set is zero."""


class AllNeighborhoodsEmpty(NullrecError):
    pass


# --- experiments ----------------------------------------------------------------

class TooFewValues(NullrecError):
    pass


class AllRejected(NullrecError):
    pass


class IncomparableProtocols(NullrecError):
    pass


# --- CLI -------------------------------------------------------------------------

class ConfigParse(NullrecError):
    pass


class IoFailure(NullrecError):
    pass
