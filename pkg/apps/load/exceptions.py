"""
LoAd Platform - Error Types

All failures raised by the LoAd app derive from LoadError. Each class carries
the process exit code the management commands report for it:

    - ConfigError:  1, invalid configuration or usage
    - ShapeError:   1, tensor shape or argument contract violations
    - DataError:    2, missing/malformed datasets and files
    - NumericError: 3, NaN or Inf detected in a forward/backward pass
    - StageError:   wraps a pipeline failure with its stage tag
    - RepeatsFailed: reported after a run whose repeats did not all complete

Created:    2026
License:    MIT - See LICENSE file
"""


class LoadError(Exception):
    """Base class for every error raised by the LoAd app."""
    exit_code = 1


class ConfigError(LoadError):
    exit_code = 1

    def __init__(self, message, errors=None):
        super().__init__(message)
        # field name -> list of messages, when raised from form validation
        self.errors = errors or {}


class ShapeError(LoadError, ValueError):
    exit_code = 1


class DataError(LoadError):
    exit_code = 2


class NumericError(LoadError, FloatingPointError):
    exit_code = 3


class StageError(LoadError):
    """
    A failure inside one stage of one experiment repeat.

    The exit code follows the wrapped cause when it is itself a LoadError.
    """

    def __init__(self, stage, repeat, cause):
        self.stage = stage
        self.repeat = repeat
        self.cause = cause
        super().__init__(f"[repeat {repeat}] stage '{stage}' failed: {cause}")

    @property
    def exit_code(self):
        return getattr(self.cause, "exit_code", 1)


class RepeatsFailed(LoadError):
    """Some repeats of a run failed; the exit code is the first failure's."""

    def __init__(self, failures):
        self.failures = list(failures)
        first = self.failures[0]
        self.exit_code = first.exit_code
        super().__init__(f"{len(self.failures)} repeat(s) failed, first: {first.error}")
