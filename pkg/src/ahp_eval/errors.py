"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AHPEvalError(Exception):
    """Base class for every error raised by ahp_eval."""


# numerics


class ShapeError(AHPEvalError, ValueError):
    """Array dimensions do not line up."""


class InvalidMatrixError(AHPEvalError, ValueError):
    """A pairwise matrix violates positivity, unit diagonal or reciprocity."""


class EmptyCriteriaError(AHPEvalError, ValueError):
    pass


class UnsupportedOrderError(AHPEvalError, ValueError):
    pass


class ConvergenceError(AHPEvalError, ArithmeticError):
    """Power iteration did not settle within the iteration budget."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class IncompleteJudgmentsError(AHPEvalError, ValueError):
    def __init__(self, pair: tuple[int, int]) -> None:
        super().__init__(f"no judgment for pair {pair}")
        self.pair = pair


class DuplicateJudgmentError(AHPEvalError, ValueError):
    def __init__(self, pair: tuple[int, int]) -> None:
        super().__init__(f"pair {pair} judged more than once")
        self.pair = pair


# backends


class BackendError(AHPEvalError):
    """Anything that went wrong while talking to a judge backend."""


class BackendUnavailableError(BackendError):
    pass


class CredentialError(BackendError):
    pass


class ParseFailureError(BackendError):
    """Backend output could not be mapped onto the expected answer format."""

    def __init__(self, message: str, raw: str) -> None:
        super().__init__(f"{message}: {raw[:200]!r}")
        self.raw = raw


class FixtureMissingError(BackendError, KeyError):
    pass


# data and runs


class DatasetError(AHPEvalError, ValueError):
    """Dataset file failed validation; ``location`` names the offending record."""

    def __init__(self, message: str, location: str | None = None) -> None:
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class UnsupportedDatasetError(AHPEvalError, ValueError):
    pass


class ExemplarError(AHPEvalError, ValueError):
    """Few-shot exemplars cannot be built (no ground truth)."""


class SampleTooLargeError(AHPEvalError, ValueError):
    pass


class InsufficientCriteriaError(AHPEvalError):
    def __init__(self, wanted: int, obtained: int) -> None:
        super().__init__(f"backend produced {obtained} distinct criteria, {wanted} required")
        self.wanted = wanted
        self.obtained = obtained


class TooFewResponsesError(AHPEvalError, ValueError):
    pass


class UndefinedMetricError(AHPEvalError, ValueError):
    """No ground-truth pairs qualify, so the concordance ratio has no denominator."""


class UnknownRunError(AHPEvalError, KeyError):
    pass


class ConfigMismatchError(AHPEvalError):
    def __init__(self, diffs: dict[str, tuple[str, str]]) -> None:
        summary = "; ".join(f"{k}: {a} -> {b}" for k, a, b in ((k, *v) for k, v in diffs.items()))
        super().__init__(f"persisted run does not match current inputs ({summary})")
        self.diffs = diffs


class IncompleteTensorError(AHPEvalError):
    def __init__(self, missing: int, total: int) -> None:
        super().__init__(
            f"{missing} of {total} comparisons are not cached; run `ahp-eval evaluate` first"
        )
        self.missing = missing
        self.total = total


class ConfigError(AHPEvalError, ValueError):
    pass
