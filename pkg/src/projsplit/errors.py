"""Exception types shared across the solver."""


class ShapeError(ValueError):
    """Structural mismatch: wrong dimension, wrong space, non-finite entries."""


class ConfigError(ValueError):
    """A parameter is outside its admissible range, or a setup is inconsistent."""


class CapabilityError(TypeError):
    """An operator was asked for an evaluation mode it does not declare."""


class HistoryError(LookupError):
    """Read of an iterate outside the bounded retention window."""


class BacktrackLimitError(RuntimeError):
    """The linesearch failed to terminate within the configured budget.

    Under continuity of the operator this cannot happen; hitting the limit
    signals a violated problem assumption rather than an unlucky run.
    """
