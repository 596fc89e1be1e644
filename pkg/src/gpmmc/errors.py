"""Exception types shared across the package.

Argument validation failures raise plain ValueError; the classes here mark
failures that callers may want to catch and handle differently (fall back to
the true model, abort a run, reject a config file).
"""


class EvaluationError(RuntimeError):
    """The performance model returned a non-finite value.

    Carries the offending input point so a failed run can be diagnosed.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SurrogateError(RuntimeError):
    """Local surrogate construction failed (factorization did not succeed
    even at the maximum jitter level)."""


class ConfigError(ValueError):
    """A run configuration file or CLI argument could not be interpreted."""
