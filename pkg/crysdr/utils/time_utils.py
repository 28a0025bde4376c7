"""
Timing helpers used to attach durations to service log lines.
"""

import functools
import time
from typing import Any, Callable, Dict, Optional

from crysdr.core.logging import ServiceLogger


class TimeTracker:
    """Wall-clock stopwatch."""

    def __init__(self):
        """Initialize time tracker."""
        self.start_time = time.time()

    def elapsed_ms(self) -> float:
        """Milliseconds since construction."""
        return round((time.time() - self.start_time) * 1000, 3)


def logged_operation(
    logger: ServiceLogger,
    operation: Optional[str] = None,
    summarize: Optional[Callable[[Any], Dict[str, Any]]] = None,
):
    """Wrap a service function with start/success/error log lines.

    Args:
        logger: Service logger of the owning module
        operation: Operation name, defaults to the function name
        summarize: Optional callable turning the result into a small dict
    """

    def decorator(func):
        name = operation or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            tracker = TimeTracker()
            logger.log_operation_start(name)
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.log_operation_error(name, e, tracker.elapsed_ms())
                raise
            logger.log_operation_success(
                name,
                tracker.elapsed_ms(),
                result_summary=summarize(result) if summarize else None,
            )
            return result

        return wrapper

    return decorator
