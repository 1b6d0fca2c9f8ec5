"""Exception hierarchy shared by all modules."""


class BilliardError(Exception):
    """Base class for every error raised by billiard_lab."""


class InvalidSpec(BilliardError, ValueError):
    pass


class NonConvex(BilliardError, ValueError):
    pass


class OutOfRange(BilliardError, ValueError):
    pass


class InvalidPhasePoint(BilliardError, ValueError):
    pass


class NoConvergence(BilliardError, RuntimeError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DegenerateChord(BilliardError, ArithmeticError):
    pass


class DegenerateSegment(BilliardError, ArithmeticError):
    pass


class OrderingViolated(BilliardError, RuntimeError):
    pass


class OrbitError(BilliardError, RuntimeError):
    """Wraps a next_collision failure with the orbit index that triggered it."""

    def __init__(self, index, cause):
        super().__init__(f"step {index}: {cause}")
        self.index = index
        self.cause = cause


class TooLarge(BilliardError, ValueError):
    pass


class InfiniteDelta(BilliardError, ValueError):
    pass


class DenominatorOverflow(BilliardError, OverflowError):
    pass


class NotFound(BilliardError, RuntimeError):
    def __init__(self, message, best_clearance=None):
        super().__init__(message)
        self.best_clearance = best_clearance


class StaleCertificate(BilliardError, ValueError):
    pass


class ParseError(BilliardError, ValueError):
    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class ValidationError(BilliardError, ValueError):
    def __init__(self, errors):
        # errors: list of (field path, reason)
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {r}" for p, r in self.errors))
