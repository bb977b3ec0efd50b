"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FisVvcError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FisVvcError):
    """A rulebase, declaration or scenario configuration is invalid.

    ``line``/``col`` are 1-based when known; ``token`` is the offending text.
    """

    def __init__(self, message: str, *, line: int | None = None, col: int | None = None,
                 token: str | None = None, source: str | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.token = token
        self.source = source

    def __str__(self) -> str:
        where = []
        if self.source:
            where.append(str(self.source))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.col is not None:
            where.append(f"col {self.col}")
        prefix = ", ".join(where)
        text = f"{prefix}: {self.message}" if prefix else self.message
        if self.token is not None and f"'{self.token}'" not in text:
            text += f" (token '{self.token}')"
        return text


class RuleSyntaxError(ConfigError):
    """A rule line does not match the rule grammar."""


class RuleBaseError(ConfigError):
    """Aggregate of every problem found while cross-checking a rulebase."""

    def __init__(self, errors: list[ConfigError]):
        self.errors = list(errors)
        first = self.errors[0] if self.errors else None
        super().__init__(
            f"{len(self.errors)} rulebase error(s)",
            line=first.line if first else None,
            token=first.token if first else None,
        )

    def __str__(self) -> str:
        return "\n".join(str(e) for e in self.errors)


class PlantError(FisVvcError):
    """The plant simulator was driven outside its valid domain."""


class InvalidAction(PlantError):
    pass


class TapOutOfRange(PlantError, ValueError):
    pass


class ConvergenceError(PlantError):
    """Voltage/load fixed-point iteration did not converge."""


class MetricsError(FisVvcError, ValueError):
    pass
