from typing import Callable, Optional
import logging

import numpy as np
import scipy.linalg

from rhgc.core.config import settings
from rhgc.core.errors import RhgcError

# Configure logging
logger = logging.getLogger(__name__)


def checked_solve(
    matrix: np.ndarray,
    rhs: np.ndarray,
    error: Callable[[float], RhgcError],
    assume_a: str = "gen",
    tolerance: Optional[float] = None,
) -> np.ndarray:
    """
    Solve matrix @ X = rhs and verify the relative residual.

    Args:
        matrix: Square coefficient matrix
        rhs: Right-hand side (vector or matrix)
        error: Factory building the error to raise from the measured residual
        assume_a: Structure hint forwarded to scipy.linalg.solve ("gen" or "pos")
        tolerance: Relative residual bound, defaults to settings.SOLVE_RESIDUAL_TOLERANCE

    Returns:
        The solution X
    """
    tolerance = settings.SOLVE_RESIDUAL_TOLERANCE if tolerance is None else tolerance
    try:
        solution = scipy.linalg.solve(matrix, rhs, assume_a=assume_a, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Linear solve failed: {str(e)}")
        raise error(float("inf")) from e

    scale = np.linalg.norm(matrix) * np.linalg.norm(solution) + np.linalg.norm(rhs)
    residual = float(np.linalg.norm(matrix @ solution - rhs) / max(scale, np.finfo(float).tiny))
    if not np.isfinite(residual) or residual > tolerance:
        logger.error(f"Linear solve residual {residual:.3e} exceeds {tolerance:.1e}")
        raise error(residual)
    return solution


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value."""
    return float(scipy.linalg.svdvals(np.atleast_2d(matrix))[0])
