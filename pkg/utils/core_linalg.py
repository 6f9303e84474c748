"""
Dense linear-algebra kernels shared by knockoff construction and calibration.

Everything here works on 64-bit numpy arrays and is deterministic given its inputs.
Eigenvalues come from a full symmetric eigendecomposition (LAPACK ``syevd`` through
``scipy.linalg.eigh``), and ``tol`` bounds the residual of the two extreme eigenpairs.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
from sklearn.covariance import ledoit_wolf_shrinkage

from utils.errors import (
    ConvergenceFailure,
    DimensionMismatch,
    InsufficientSamples,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
MAX_ESCALATIONS = 10


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular factor with ``lower @ lower.T == m + jitter_used * I``"""

    lower: np.ndarray
    jitter_used: float


def _as_square(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {arr.shape}")
    return arr


def symmetrize(m) -> np.ndarray:
    arr = _as_square(m)
    return 0.5 * (arr + arr.T)


def as_sym_matrix(m, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate that ``m`` is symmetric within ``tol`` and return it as float64"""
    arr = _as_square(m)
    asym = np.max(np.abs(arr - arr.T))
    if asym > tol:
        raise DimensionMismatch(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return arr


def cholesky_with_jitter(m, jitter0: float = 1e-10) -> CholFactor:
    """
    Cholesky factorization with diagonal jitter escalation.

    The jitter schedule is 0, jitter0, 10*jitter0, ... with at most ten escalations
    after the unjittered attempt.

    Args:
        m: Symmetric matrix to factorize
        jitter0: First nonzero jitter value

    Returns:
        CholFactor with the first jitter that succeeded
    """
    arr = as_sym_matrix(m)
    if jitter0 < 0:
        raise ValueError("jitter0 must be nonnegative")

    schedule = [0.0]
    if jitter0 > 0:
        schedule += [jitter0 * 10.0 ** k for k in range(MAX_ESCALATIONS)]

    eye = np.eye(arr.shape[0])
    for jitter in schedule:
        try:
            lower = scipy.linalg.cholesky(arr + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            continue
        if jitter > 0:
            logger.warning("Cholesky needed diagonal jitter %.1e (dim %d)", jitter, arr.shape[0])
        return CholFactor(lower=lower, jitter_used=float(jitter))

    raise NotPositiveDefinite(
        f"Cholesky failed after {len(schedule)} attempts (last jitter {schedule[-1]:.1e})"
    )


def sym_eig_extremes(m, tol: float = 1e-9) -> Tuple[float, float]:
    """
    Smallest and largest eigenvalue of a symmetric matrix.

    Each extreme pair must satisfy ||A v - lambda v|| <= tol * max(1, ||A||_2),
    otherwise ConvergenceFailure is raised.
    """
    arr = as_sym_matrix(m)
    try:
        eigvals, eigvecs = scipy.linalg.eigh(arr)
    except np.linalg.LinAlgError as err:
        raise ConvergenceFailure(f"symmetric eigensolver did not converge: {err}") from err
    if not np.all(np.isfinite(eigvals)):
        raise ConvergenceFailure("eigenvalues not finite")

    scale = max(1.0, float(np.max(np.abs(eigvals[[0, -1]]))))
    for k in (0, -1):
        v = eigvecs[:, k]
        residual = float(np.linalg.norm(arr @ v - eigvals[k] * v))
        if residual > tol * scale:
            raise ConvergenceFailure(f"eigen-residual {residual:.2e} exceeds tol {tol:.1e}")
    return float(eigvals[0]), float(eigvals[-1])


def solve_spd(m, rhs, ridge: float = 0.0) -> np.ndarray:
    """Solve ``(m + ridge*I) X = rhs`` through a Cholesky factorization"""
    arr = as_sym_matrix(m)
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape[0] != arr.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has dim {arr.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(arr + ridge * np.eye(arr.shape[0]), lower=True)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(f"matrix + {ridge:.1e} I is not positive definite") from err
    return scipy.linalg.cho_solve(factor, b)


def ledoit_wolf(zc, extra_shrink: float = 0.0) -> Tuple[np.ndarray, float]:
    """
    Ledoit-Wolf shrinkage towards ``mu * I`` with an additional shrinkage offset.

    Args:
        zc: Column-centered data, n x p
        extra_shrink: Added to the Ledoit-Wolf coefficient before clipping to [0, 1]

    Returns:
        (sigma_hat, alpha_prime)
    """
    z = np.asarray(zc, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D data matrix, got shape {z.shape}")
    n, p = z.shape
    if n < 2:
        raise InsufficientSamples(f"Ledoit-Wolf needs at least 2 rows, got {n}")

    offset = np.max(np.abs(z.mean(axis=0))) if p else 0.0
    if offset > 1e-8:
        logger.warning("ledoit_wolf input is not centered (max column mean %.2e)", offset)

    sample = z.T @ z / (n - 1)
    mu = np.trace(sample) / p
    alpha_lw = float(ledoit_wolf_shrinkage(z, assume_centered=True))
    alpha = float(np.clip(alpha_lw + extra_shrink, 0.0, 1.0))

    sigma = (1.0 - alpha) * sample + alpha * mu * np.eye(p)
    return 0.5 * (sigma + sigma.T), alpha
