"""Exception types raised across the package."""


class SwitchconsError(ValueError):
    """Base class for all package errors."""


class ValidationError(SwitchconsError):
    """Input violates a structural assumption (symmetry, reachability, dims)."""


class SynthesisError(SwitchconsError):
    """Gain synthesis or certification cannot proceed."""


class ScenarioError(SwitchconsError):
    """Scenario file could not be parsed; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
