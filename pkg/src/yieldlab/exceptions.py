"""Exception hierarchy shared by all yieldlab modules."""


class YieldLabError(Exception):
    """Base class for every error raised by yieldlab."""


class GridError(YieldLabError, ValueError):
    """Time grid is not strictly ascending or otherwise malformed."""


class NumericalBlowupError(YieldLabError, FloatingPointError):
    def __init__(self, path: int, step: int, message: str = ""):
        self.path = path
        self.step = step
        super().__init__(message or f"non-finite state on path {path} at step {step}")


class OrderingError(YieldLabError, ValueError):
    """Integration bounds given in the wrong order."""


class HorizonError(YieldLabError, ValueError):
    """Maturity does not lie after the valuation time."""


class DimensionError(YieldLabError, ValueError):
    pass


class SolverError(YieldLabError, ArithmeticError):
    """A numerical solve failed; the message carries grid diagnostics."""


class CoverageError(YieldLabError, ValueError):
    """Futures or books do not cover the requested horizon."""


class LifecycleError(YieldLabError, RuntimeError):
    """Tokenizer operation not allowed at the current clock."""


class ScheduleError(YieldLabError, ValueError):
    pass


class DuplicateEmissionError(YieldLabError, ValueError):
    pass


class DistributionError(YieldLabError, ValueError):
    """Distribution is not integrable under the requested utility."""


class BracketError(YieldLabError, ArithmeticError):
    """No sign change could be found for a monotone root problem."""


class ConsistencyError(YieldLabError, ValueError):
    pass


class IncentiveCompatibilityError(YieldLabError, ValueError):
    """Demand curve is not nonincreasing (bonding curve not quasiconcave)."""


class DomainError(YieldLabError, ValueError):
    pass


class AlignmentError(YieldLabError, ValueError):
    pass


class DepthError(YieldLabError, ValueError):
    """Requested fill exceeds the liquidity available in the book."""


class PartialQuoteError(DepthError):
    def __init__(self, shortfalls: dict[int, float]):
        self.shortfalls = dict(shortfalls)
        detail = ", ".join(f"future {k}: short {v:.12g}" for k, v in sorted(shortfalls.items()))
        super().__init__(f"insufficient depth ({detail})")


class StaleQuoteError(YieldLabError, RuntimeError):
    """Books changed between quote and execution; requote."""


class NoInsuranceError(YieldLabError, ValueError):
    """Slashing insurance bracket is insolvent."""


class ConfigError(YieldLabError, ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class PresetReferenceError(ConfigError):
    """Config references a preset that does not exist."""
