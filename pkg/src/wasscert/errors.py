"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit status 1 and every
:class:`NumericalError` to exit status 2.
"""


class ConfigError(ValueError):
    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")


class NumericalError(RuntimeError):
    pass


class UnsupportedMarginals(NumericalError, ValueError):
    """Exact solvers need equal-size uniform marginals; use ``sinkhorn``."""


class DimensionMismatch(NumericalError, ValueError):
    pass


class SinkhornDiverged(NumericalError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class PowerIterationError(NumericalError):
    def __init__(self, message: str, best: float):
        self.best = best
        super().__init__(f"{message} (best iterate {best!r})")


class TrainingFailed(NumericalError):
    pass


class CertificateViolation(NumericalError):
    """An exact certificate failed; this signals a solver or Lipschitz bug."""


class RateFitError(NumericalError):
    pass
