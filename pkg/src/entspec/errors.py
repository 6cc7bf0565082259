"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI uses when it escapes.
"""


class EntspecError(Exception):
    exit_code = 4


class ConfigError(EntspecError, ValueError):
    exit_code = 2


class InvalidDistribution(ConfigError):
    pass


class BudgetExceeded(EntspecError):
    """Raised when an exact computation would exceed the memory budget.

    Callers that have a Monte-Carlo fallback catch this and switch.
    """

    exit_code = 3


class UnstableBall(EntspecError):
    """Bounded folding did not stabilise before the maximum conjugator bound."""

    exit_code = 3


class TreeLikenessViolation(EntspecError, AssertionError):
    exit_code = 4
