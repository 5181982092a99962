import json
from typing import Final

import numpy as np
from loguru import logger
from pydantic import ValidationError

from .errors import (
    ArgumentError,
    ConstraintError,
    ConvergenceError,
    DesignError,
    ModelError,
    NumericalError,
    SpectrumError,
)

EXIT_OK: Final = 0
EXIT_VALIDATION: Final = 2
EXIT_NUMERICAL: Final = 3
EXIT_CONVERGENCE: Final = 4

_VALIDATION_ERRORS = (
    json.JSONDecodeError,
    ModelError,
    ArgumentError,
    ConstraintError,
    DesignError,
    SpectrumError,
    ValidationError,
    FileNotFoundError,
)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, _VALIDATION_ERRORS):
        return EXIT_VALIDATION
    raise exc


def handle_error(exc: BaseException) -> int:
    """
    Log a failed command and translate the exception into its exit code.
    Unknown exceptions propagate.
    """
    code = exit_code_for(exc)
    logger.error(f"{type(exc).__name__}: {exc}")
    return code


def symmetric_power(matrix: np.ndarray, power: float) -> np.ndarray:
    """Power of a symmetric positive-definite matrix through its eigendecomposition."""
    values, vectors = np.linalg.eigh(matrix)
    if values.min() <= 0.0:
        raise ModelError("matrix is not positive definite")
    return (vectors * values**power) @ vectors.T


def symplectic_form(n_modes: int) -> np.ndarray:
    eye = np.eye(n_modes)
    zero = np.zeros((n_modes, n_modes))
    return np.block([[zero, eye], [-eye, zero]])


def fix_column_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def format_float(value: float) -> str:
    return repr(float(value))
