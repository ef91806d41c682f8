"""Exception hierarchy shared by all modules."""


class AgeOptError(Exception):
    """Base class for numerical failures raised by the library."""


class DomainError(AgeOptError, ValueError):
    """A function was evaluated outside of its domain."""


class NonFiniteExpectationError(AgeOptError):
    """An expectation evaluated to inf or nan."""


class BracketError(AgeOptError):
    """A bisection bracket could not be established."""


class BudgetExceededError(AgeOptError):
    """A brute-force enumeration would exceed its combinatorial budget."""


class ConfigError(ValueError):
    """A JSON spec or experiment config could not be parsed."""
