"""Exception hierarchy.

Every error raised on purpose by the package derives from ``CryoNoiseError``
so the CLI can map it onto a stable exit code.
"""


class CryoNoiseError(Exception):
    pass


class DomainError(CryoNoiseError, ValueError):
    """Argument outside the physical domain of a formula."""


class ConfigError(DomainError):
    """Invalid or unknown configuration keys."""


class TouchstoneError(CryoNoiseError, ValueError):
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)


class GridError(CryoNoiseError, ValueError):
    """Frequency grids do not line up (or would need extrapolation)."""


class SingularError(CryoNoiseError, ArithmeticError):
    pass


class AmbiguityError(CryoNoiseError):
    """Square-root branch of the transmission tracking cannot be resolved."""


class UnderdeterminedError(CryoNoiseError, ValueError):
    pass


class QualificationError(CryoNoiseError):
    """Noise source fails the matching requirement on the calibrated port."""


class ReplayError(CryoNoiseError):
    pass
