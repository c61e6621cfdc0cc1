"""Exception types shared across the package.

Grouped so the command-line layer can map them onto exit codes:
configuration problems (bad input) versus numerical failures (the input
was legal but the computation could not complete).
"""


class CrowdsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrowdsimError):
    """A scenario or parameter set violates a documented invariant."""


class ParseError(ConfigError):
    """Scenario document could not be parsed; message carries the position."""


class ValidationError(ConfigError):
    """Scenario parsed but an invariant failed; message names the field."""


class NumericalError(CrowdsimError):
    """The computation itself failed (solver, projection, reflection)."""


class AmbiguousProjection(NumericalError):
    """Two nearest-point candidates tie beyond tolerance; caller must substep."""


class EmptyCone(NumericalError):
    """No inward normal admits an exterior disk at the queried boundary point."""


class StuckInCorner(NumericalError):
    """Reflection substepping exhausted its bisection budget."""


class SolveFailed(NumericalError):
    """Linear solve did not reach the required residual."""


class TransformRange(NumericalError):
    """Transformed navigation unknown left its admissible range."""


class OutsideDomain(NumericalError):
    """A field was evaluated at a point outside the walkable closure."""
