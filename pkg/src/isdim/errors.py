"""Exception types raised across the package."""


class IsdimError(Exception):
    """Base class for all errors raised by isdim."""


class DefinitenessError(IsdimError, ValueError):
    """A covariance (or variance) is not strictly positive definite."""


class DimensionError(IsdimError, ValueError):
    """Array shapes do not agree."""


class NonIntegrableError(IsdimError, ArithmeticError):
    """The second moment of the target/proposal density is infinite."""


class DegenerateWeightsError(IsdimError, ArithmeticError):
    """Every log weight is -inf, so the weights cannot be normalized."""


class NoOracleError(IsdimError, ValueError):
    """A test function has no closed-form target expectation."""


class ConsistencyError(IsdimError, ArithmeticError):
    """Two independent evaluation routes disagree beyond tolerance."""


class IllConditionedError(IsdimError, ArithmeticError):
    """A matrix is too close to singular to be inverted reliably."""


class NotApplicableError(IsdimError, ValueError):
    """A bound cannot be evaluated because a required moment is not finite."""


class DegenerateFitError(IsdimError, ValueError):
    """Too few points (or zero spread) for a regression fit."""


class ConfigError(IsdimError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
