"""Exception hierarchy shared by all modules."""


class FracSpdeError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FracSpdeError, ValueError):
    """A configuration or coefficient invariant is violated.

    ``condition`` names the mathematical hypothesis that failed, so the CLI can
    report it verbatim.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SymbolDomainError(FracSpdeError, ValueError):
    """A Fourier symbol is undefined (NaN) at some grid frequency."""


class UnsupportedError(FracSpdeError, NotImplementedError):
    """The request is outside what the implementation supports."""


class PicardDivergenceError(FracSpdeError, RuntimeError):
    """Picard iteration did not reach tolerance; carries the ratio history."""

    def __init__(self, message, history, ratios):
        super().__init__(message)
        self.history = list(history)
        self.ratios = list(ratios)
