"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid spec, run config, or parameter set."""


class IllPosedError(ValueError):
    """An elliptic solve was requested outside its solvable class."""


class CheckpointError(IOError):
    """Checkpoint file is truncated, corrupt, or of an unknown version."""


class BlowupSuspected(RuntimeError):
    """The step controller collapsed below dt_min.

    Carries a ``diagnostics`` dict (time, dt, density sup-norm, ...) so the
    caller can turn the failure into a BLOWUP verdict instead of a crash.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
