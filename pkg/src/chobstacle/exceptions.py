"""Exception types raised by the solvers."""


class ConfigurationError(ValueError):
    """Invalid parameter or out-of-range configuration."""


class AssemblyError(RuntimeError):
    """Finite-element assembly failed (e.g. a degenerate triangle)."""


class ContractViolation(ValueError):
    """An operation was called with inputs violating its preconditions."""


class NumericalError(ArithmeticError):
    """A numerical breakdown that cannot be recovered from."""
