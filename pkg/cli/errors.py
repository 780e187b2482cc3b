#!/usr/bin/env python3
"""Error handling system for CLI operations.

Commands run inside an error boundary that classifies the failure, reports it
in text or JSON and turns it into one of four exit codes: 0 success, 1 usage
error, 2 numerical failure, 3 verification failure.
"""

import functools
import json
import sys
from enum import Enum
from typing import Any, Callable, Dict, Optional, TextIO

from expanderlab.models import (
    ConfigError,
    ExpanderLabError,
    RangeError,
    VerificationFailure,
)


class ErrorBoundaryExit(Exception):
    """Special exception raised by ErrorBoundary to allow proper nesting."""

    def __init__(self, error_type: "ErrorType", message: str):
        self.error_type = error_type
        self.message = message
        super().__init__(message)


class ErrorType(Enum):
    """Classification of error types with corresponding exit codes."""

    SUCCESS = 0
    USAGE = 1  # Bad flags, config files or parameter ranges
    NUMERICAL = 2  # Solver failures
    VERIFICATION = 3  # A check ran and failed


def classify(exception: BaseException, default: ErrorType = ErrorType.NUMERICAL):
    """Exit-code class of an exception."""
    if isinstance(exception, VerificationFailure):
        return ErrorType.VERIFICATION
    if isinstance(exception, (ConfigError, RangeError, ValueError)):
        return ErrorType.USAGE
    if isinstance(exception, (FileNotFoundError, PermissionError)):
        return ErrorType.USAGE
    if isinstance(exception, ExpanderLabError):
        return ErrorType.NUMERICAL
    return default


HINTS = {
    ErrorType.USAGE: "check the flags and the --config file",
    ErrorType.NUMERICAL: "tighten --tol or refine --grid and rerun with --debug",
}


def describe(
    exception: BaseException, error_type: ErrorType, operation: str
) -> Dict[str, Any]:
    """Report fields for a failed operation, with a hint for its error class."""
    report = {
        "operation": operation,
        "error_type": error_type.name,
        "error_code": error_type.value,
        "message": str(exception),
        "exception_type": type(exception).__name__,
    }
    if error_type in HINTS:
        report["suggestion"] = HINTS[error_type]
    return report


class ErrorBoundary:
    """Context manager for handling errors in a consistent way.

    Example:
        ```python
        with ErrorBoundary("profile", ErrorType.NUMERICAL) as eb:
            eb.add_context("d", 3)
            profile = solve_profile(ProfileParams(d=3, alpha=0.5))
        ```
    """

    # Most recent report and its rendered text, shared by all boundaries
    last_error = None
    last_error_message = None

    def __init__(
        self,
        operation_name: str,
        error_type: ErrorType = ErrorType.NUMERICAL,
        verbose: bool = False,
        continue_on_error: bool = False,
        error_format: str = "text",
        stderr: Optional[TextIO] = None,
    ):
        """
        Args:
            operation_name: Command or stage named in the report
            error_type: Class used when classify() does not recognise the exception
            verbose: Attach the collected context to the report
            continue_on_error: Swallow the failure after reporting it
            error_format: "text" or "json"
            stderr: Report stream, sys.stderr when omitted
        """
        self.operation_name = operation_name
        self.error_type = error_type
        self.verbose = verbose
        self.continue_on_error = continue_on_error
        self.error_format = error_format
        self.stderr = stderr
        self.context: Dict[str, Any] = {}

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None and issubclass(exc_type, Exception):
            self.handle_error(exc_val)
            return self.continue_on_error
        return False

    def add_context(self, key: str, value: Any) -> "ErrorBoundary":
        """Record a parameter shown in verbose reports. Chainable."""
        self.context[key] = value
        return self

    def handle_error(self, exception: Exception) -> None:
        """Report an exception and re-raise it as ErrorBoundaryExit.

        Raises:
            ErrorBoundaryExit: Unless continue_on_error is set.
        """
        if isinstance(exception, ErrorBoundaryExit):
            # Already reported by an inner boundary
            if not self.continue_on_error:
                raise exception
            return

        error_type = classify(exception, self.error_type)
        report = describe(exception, error_type, self.operation_name)
        if self.verbose:
            report["context"] = dict(self.context)
        self.report_error(report)

        if not self.continue_on_error:
            raise ErrorBoundaryExit(error_type, str(exception)) from exception

    def report_error(self, report: Dict[str, Any]) -> None:
        ErrorBoundary.last_error = report
        if self.error_format == "json":
            self._report_json(report)
        else:
            self._report_text(report)

    def _report_json(self, report: Dict[str, Any]) -> None:
        text = json.dumps(report, indent=2, default=str)
        ErrorBoundary.last_error_message = text
        print(text, file=self.stderr or sys.stderr)

    def _report_text(self, report: Dict[str, Any]) -> None:
        lines = [f"Error in {report['operation']}: {report['message']}"]
        context = report.get("context", {}) if self.verbose else {}
        if context:
            lines += ["", "Context:"] + [f"  {k}: {v}" for k, v in context.items()]
        if "suggestion" in report:
            lines += ["", f"Suggestion: {report['suggestion']}"]
        ErrorBoundary.last_error_message = "\n".join(lines)
        print(ErrorBoundary.last_error_message, file=self.stderr or sys.stderr)


def with_error_boundary(error_type: ErrorType, operation_name: Optional[str] = None):
    """Decorator to run a command function inside an error boundary.

    The wrapped function accepts the extra keywords verbose, continue_on_error
    and error_format. A failure ends the process with the exit code of its
    class, or returns None when continue_on_error is set.

    Args:
        error_type: Fallback type for unclassified exceptions
        operation_name: Name of the operation; defaults to the function name
    """

    def decorator(func: Callable):
        name = operation_name or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            verbose = kwargs.pop("verbose", False)
            continue_on_error = kwargs.pop("continue_on_error", False)
            error_format = kwargs.pop("error_format", "text")
            try:
                with ErrorBoundary(
                    name, error_type, verbose, continue_on_error, error_format
                ):
                    return func(*args, **kwargs)
            except ErrorBoundaryExit as e:
                sys.exit(e.error_type.value)
            return None

        return wrapper

    return decorator
