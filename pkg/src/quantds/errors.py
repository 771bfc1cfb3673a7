class DomainError(ValueError):
    """An argument lies outside the domain of the function it was passed to."""


class ConfigError(ValueError):
    """Malformed user configuration (families, files, grids)."""


class ResourceLimitError(RuntimeError):
    """A computation would exceed a configured size guard."""


class InvariantViolation(AssertionError):
    """A checked mathematical invariant failed on a concrete object."""


class LemmaViolation(InvariantViolation):
    """A step that is guaranteed to succeed produced no admissible output."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class GraphValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations[:20])
        more = "" if len(self.violations) <= 20 else f"\n  ... {len(self.violations) - 20} more"
        super().__init__(f"{len(self.violations)} graph condition violation(s):\n{lines}{more}")
