"""Exception types shared across the package."""


class UsageError(ValueError):
    """A caller passed arguments that violate an operation's preconditions."""


class CapacityBudgetError(RuntimeError):
    """An enumeration or compilation would exceed its configured size cap."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or references unknown kinds."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
