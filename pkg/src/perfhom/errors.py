"""Exception types shared across the package.

The CLI maps these to exit codes: configuration and solver failures exit
with 2, failed study verdicts with 1.
"""


class ParameterDomainError(ValueError):
    """Physical parameters outside the admissible domain (alpha <= 1, gamma <= 0, ...)."""


class GeometryError(ValueError):
    """Invalid particle or cell geometry (particle too large, point outside cell, ...)."""


class CellProblemError(RuntimeError):
    """Exterior Stokes solve failed (ill-conditioned collocation system)."""


class CorrectorError(RuntimeError):
    """Corrector construction or evaluation failed (degenerate annulus, bad test field)."""


class CFLError(RuntimeError):
    """Advective CFL limit exceeded; carries a suggested time step."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ConfigError(ValueError):
    """Malformed run configuration (unknown keys, missing sections, bad values)."""
