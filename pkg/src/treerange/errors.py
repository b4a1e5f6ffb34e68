"""Exception hierarchy shared by every module."""


class TreeRangeError(Exception):
    """Base class for all errors raised by treerange."""


class DomainError(TreeRangeError, ValueError):
    pass


class NotNormalized(TreeRangeError, ValueError):
    pass


class NotCritical(TreeRangeError, ValueError):
    pass


class Degenerate(TreeRangeError, ValueError):
    pass


class NotAdapted(TreeRangeError, ValueError):
    """The jump support generates a proper subgroup of Z^d."""

    def __init__(self, normal_form, message=None):
        self.normal_form = normal_form
        super().__init__(message or f"support generates a proper sublattice (invariant factors {normal_form})")


class InvalidPath(TreeRangeError, ValueError):
    pass


class CapExceeded(TreeRangeError):
    pass


class InfeasibleSize(TreeRangeError, ValueError):
    pass


class InsufficientPrefix(TreeRangeError):
    pass


class HTableMiss(TreeRangeError, KeyError):
    pass


class BoxBudgetExceeded(TreeRangeError):
    pass


class NonTransient(TreeRangeError, ValueError):
    pass


class ParityError(TreeRangeError, ValueError):
    pass


class TooFewHits(TreeRangeError):
    pass


class ConfigError(TreeRangeError, ValueError):
    pass


class ValidationError(TreeRangeError, ValueError):
    pass
