"""Exception types shared across the package.

The CLI maps these onto process exit codes: scenario and input problems
exit 2, fit problems exit 3, file problems exit 4.
"""


class ScenarioError(ValueError):
    """A scenario file or parameter set violates a validation rule."""


class FitError(RuntimeError):
    """A least-squares fit failed to converge or produced a singular result."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InsufficientDataError(FitError):
    """Too few points, or a degenerate span, for the requested fit."""
