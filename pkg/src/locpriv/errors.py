"""Exception hierarchy shared by all locpriv modules."""


class LocPrivError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(LocPrivError, ValueError):
    pass


class NotStochastic(LocPrivError, ValueError):
    pass


class NegativeEntry(LocPrivError, ValueError):
    pass


class NoConvergence(LocPrivError, RuntimeError):
    pass


class EigenFailure(LocPrivError, RuntimeError):
    pass


class NotStationary(LocPrivError, ValueError):
    """A computation relies on the time-shift property of a stationary chain."""


class InconsistentObservation(LocPrivError, ValueError):
    """No trajectory with positive prior mass can have produced the observations."""


class ProbabilityOutOfRange(LocPrivError, ArithmeticError):
    pass


class DegenerateSpace(LocPrivError, ValueError):
    """The hamming ball covers the whole trajectory space."""


class TooLarge(LocPrivError, ValueError):
    """Instance exceeds the size cap of a brute-force routine."""


class InvalidGrid(LocPrivError, ValueError):
    pass


class EmptyInput(LocPrivError, ValueError):
    pass


class TooManyMalformed(LocPrivError, ValueError):
    def __init__(self, malformed: int, total: int, threshold: float):
        self.malformed = malformed
        self.total = total
        self.threshold = threshold
        super().__init__(
            f"{malformed} of {total} lines malformed (threshold {threshold:.2%})"
        )


class NoRecords(LocPrivError, ValueError):
    pass


class SequenceTooShort(LocPrivError, ValueError):
    pass


class TooShort(LocPrivError, ValueError):
    pass
