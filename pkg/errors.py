"""Exception types and the CLI exit codes they map to."""

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_NON_CONVERGENCE = 2
EXIT_VERIFICATION_FAILURE = 3


class KswError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_INVALID_INPUT


class InvalidInputError(KswError, ValueError):
    """Input violates a documented precondition (dimensions, positivity, energy)."""

    exit_code = EXIT_INVALID_INPUT


class NumericalFailureError(KswError, ArithmeticError):
    """A numerical routine could not reach its accuracy guarantee."""

    exit_code = EXIT_VERIFICATION_FAILURE


class SolverNonConvergence(KswError):
    """Raised at the CLI boundary when a certificate is returned unconverged."""

    exit_code = EXIT_NON_CONVERGENCE
