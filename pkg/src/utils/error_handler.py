import logging
import traceback
from functools import wraps
from typing import Dict, Any, Optional
import time

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = EXIT_NUMERICAL
    error_code = 'toolkit_error'


class ValidationError(ToolkitError, ValueError):
    """A parameter or precondition was violated"""
    exit_code = EXIT_VALIDATION
    error_code = 'validation_error'

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailure(ToolkitError, ArithmeticError):
    """A computation overflowed, diverged or produced non-finite state"""
    exit_code = EXIT_NUMERICAL
    error_code = 'numerical_failure'


class DensityError(ValidationError):
    error_code = 'invalid_density'


class KernelDomainError(ValidationError):
    error_code = 'kernel_domain'


class NonIntegrableKernelError(ValidationError):
    error_code = 'non_integrable_kernel'


class ConfigError(ValidationError):
    error_code = 'config_error'


class InfiniteSelfInteractionError(NumericalFailure):
    error_code = 'infinite_self_interaction'


class ExponentialOverflowError(NumericalFailure):
    error_code = 'exponential_overflow'


class NonFinitePositionError(NumericalFailure):
    error_code = 'non_finite_position'


class DerivativeUnavailableError(NumericalFailure):
    error_code = 'derivative_unavailable'


class ErrorHandler:
    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.error_counts = {}
        self.last_errors = {}

    def handle_processing_error(self, stage: str, error: Exception, data_context: Dict = None) -> Dict[str, Any]:
        """Record a failed stage and return a failure record"""
        error_key = f"{stage}_{type(error).__name__}"

        self.error_counts[error_key] = self.error_counts.get(error_key, 0) + 1
        self.last_errors[error_key] = {
            'timestamp': time.time(),
            'error': str(error),
            'traceback': traceback.format_exc()
        }

        self.logger.error(f"Processing Error in {stage}: {error}")

        if data_context:
            self.logger.debug(f"Data context: {data_context}")

        return {
            'success': False,
            'error': str(error),
            'stage': stage,
            'exit_code': self.exit_code_for(error),
            'data_context': data_context,
            'timestamp': time.time()
        }

    def exit_code_for(self, error: Exception) -> int:
        """Map an exception onto the process exit status"""
        if isinstance(error, ToolkitError):
            return error.exit_code
        if isinstance(error, (FloatingPointError, OverflowError, ZeroDivisionError)):
            return EXIT_NUMERICAL
        if isinstance(error, (ValueError, TypeError, FileNotFoundError)):
            return EXIT_VALIDATION
        return EXIT_NUMERICAL

    def format_error_line(self, error: Exception) -> str:
        """Machine-readable `error_code,message` line for the diagnostic stream"""
        code = getattr(error, 'error_code', type(error).__name__)
        message = str(error).replace('\n', ' ').replace(',', ';')
        return f"{code},{message}"

    def get_error_summary(self) -> Dict[str, Any]:
        """Summary of the errors recorded in this process"""
        return {
            error_key: {
                'count': self.error_counts.get(error_key, 0),
                'last_occurrence': info['timestamp'],
                'error_message': info['error']
            }
            for error_key, info in self.last_errors.items()
        }


def with_error_handling(error_handler: ErrorHandler, operation_name: str):
    """Decorator that turns exceptions into failure records"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                error_result = error_handler.handle_processing_error(
                    operation_name, e, {'args': str(args), 'kwargs': str(kwargs)}
                )
                logging.getLogger(func.__module__).error(f"Error in {func.__name__}: {e}")
                return error_result
        return wrapper
    return decorator

# Global error handler instance
error_handler = ErrorHandler()
