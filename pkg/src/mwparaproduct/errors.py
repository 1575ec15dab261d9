"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit
it as JSON without string matching.
"""


class ToolkitError(Exception):
    code = "toolkit-error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ResolutionError(ToolkitError, ValueError):
    code = "resolution-too-coarse"


class ShapeError(ToolkitError, ValueError):
    code = "shape-error"


class InvalidExponentError(ToolkitError, ValueError):
    code = "invalid-exponent"


class InvalidWeightError(ToolkitError, ValueError):
    code = "invalid-weight"


class NonIntegrableWeightError(InvalidWeightError):
    code = "non-integrable-weight"


class InvalidInputError(ToolkitError, ValueError):
    code = "invalid-input"


class InvalidBackendError(ToolkitError, ValueError):
    code = "invalid-backend"


class DegenerateBodyError(ToolkitError, ValueError):
    code = "degenerate-body"


class NoConvergenceError(ToolkitError, RuntimeError):
    """Iteration cap exceeded; ``last_iterate`` holds the final state."""

    code = "no-convergence"

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SingularMultiplierError(ToolkitError, ValueError):
    code = "singular-multiplier"


class LambdaTooSmallError(ToolkitError, ValueError):
    code = "lambda-too-small"

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval

    def to_dict(self):
        d = super().to_dict()
        if self.interval is not None:
            d["interval"] = [self.interval.level, self.interval.index]
        return d


class NonlinearOperatorError(ToolkitError, ValueError):
    code = "nonlinear-operator"


class IndexOutOfRangeError(ToolkitError, IndexError):
    code = "index-out-of-range"


class UnknownFamilyError(ToolkitError, ValueError):
    code = "unknown-family"


class ConfigVersionError(ToolkitError, ValueError):
    code = "version-error"


class ConfigError(ToolkitError, ValueError):
    code = "config-error"
