"""Exception types raised by the solvers and the harness."""


class ConfigurationError(ValueError):
    """Invalid solver or experiment configuration."""


class SolverError(RuntimeError):
    """Numerical failure inside an iteration.

    ``state`` and ``report`` are filled in by the driver with whatever was
    computed before the failure.
    """

    def __init__(self, msg, *, iterate=None):
        super().__init__(msg)
        self.iterate = iterate
        self.state = None
        self.report = None


class RankDeficientError(SolverError):
    def __init__(self, msg, *, column=None, dimension=None, iterate=None):
        super().__init__(msg, iterate=iterate)
        self.column = column
        self.dimension = dimension


class QRBreakdownError(SolverError):
    pass
