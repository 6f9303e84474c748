"""
Knockoff construction: Gaussian (second-order), Gaussian copula and fixed-X.

All samplers are pure functions of their inputs and an explicit ``numpy.random.Generator``.
"""
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from utils.core_linalg import (
    CholFactor,
    as_sym_matrix,
    cholesky_with_jitter,
    ledoit_wolf,
    solve_spd,
    sym_eig_extremes,
    symmetrize,
)
from utils.errors import (
    DegenerateFeatureWarning,
    DimensionMismatch,
    FewSamplesWarning,
    InsufficientRows,
    InsufficientSamples,
    NonFiniteInput,
    RankDeficient,
)

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
SIGMA_RIDGE = 1e-10
SINGULAR_TOL = 1e-10


@dataclass
class KnockoffModel:
    """Equi-correlated Gaussian knockoff model for a covariance ``sigma``"""

    sigma: np.ndarray
    s: np.ndarray
    a_mat: np.ndarray
    c_factor: CholFactor

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    def to_dict(self) -> Dict:
        return {
            "format_version": SNAPSHOT_VERSION,
            "sigma": self.sigma.tolist(),
            "s": self.s.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "KnockoffModel":
        version = payload.get("format_version")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported knockoff snapshot version: {version}")
        return _model_from_s(np.asarray(payload["sigma"], dtype=np.float64),
                             np.asarray(payload["s"], dtype=np.float64))

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path) -> "KnockoffModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class CopulaTables:
    """Empirical quantile tables recorded by ``copula_gaussianize``"""

    sorted_values: np.ndarray
    grid: np.ndarray
    eps: float
    discrete: np.ndarray

    @property
    def p(self) -> int:
        return self.sorted_values.shape[1]


@dataclass
class AugmentedDesign:
    """Original features followed by their knockoffs: feature j pairs with column j + p"""

    x: np.ndarray
    x_tilde: np.ndarray
    y: np.ndarray
    feature_names: Optional[List[str]] = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.x, self.x_tilde])

    def swapped(self, j: int) -> "AugmentedDesign":
        """Copy with feature j exchanged for its knockoff"""
        x, x_tilde = self.x.copy(), self.x_tilde.copy()
        x[:, j], x_tilde[:, j] = self.x_tilde[:, j], self.x[:, j]
        return AugmentedDesign(x=x, x_tilde=x_tilde, y=self.y.copy(), feature_names=self.feature_names)


def as_generator(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _model_from_s(sigma: np.ndarray, s: np.ndarray) -> KnockoffModel:
    p = sigma.shape[0]
    if s.shape != (p,):
        raise DimensionMismatch(f"s has shape {s.shape}, expected ({p},)")
    s_mat = np.diag(s)
    a_mat = solve_spd(sigma, s_mat, ridge=SIGMA_RIDGE)
    m = symmetrize(2.0 * s_mat - s_mat @ a_mat)
    c_factor = cholesky_with_jitter(m, 1e-10)
    return KnockoffModel(sigma=sigma, s=s, a_mat=a_mat, c_factor=c_factor)


def build_gaussian_model(sigma, cap: Optional[float] = None) -> KnockoffModel:
    """
    Build the equi-correlated Gaussian knockoff model.

    Args:
        sigma: Covariance or correlation matrix
        cap: Upper bound on s. Defaults to 1 for a correlation matrix and to
            max_j sigma_jj otherwise

    Returns:
        KnockoffModel with A = sigma^-1 S and the Cholesky factor of 2S - S A
    """
    sigma = as_sym_matrix(sigma)
    diag = np.diag(sigma)
    if cap is None:
        cap = 1.0 if np.all(np.abs(diag - 1.0) <= 1e-8) else float(diag.max())

    lam_min, _ = sym_eig_extremes(sigma)
    s_val = max(0.0, min(2.0 * lam_min, cap))
    if s_val == 0.0:
        logger.warning("covariance is singular; knockoffs will equal the originals")
    return _model_from_s(sigma, np.full(sigma.shape[0], s_val))


def sample_gaussian_knockoffs(x, model: KnockoffModel, rng) -> np.ndarray:
    """X_tilde = X (I - A) + U C^T with U standard normal"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.p:
        raise DimensionMismatch(f"x has shape {x.shape}, model expects {model.p} columns")
    rng = as_generator(rng)
    u = rng.standard_normal(x.shape)
    return x @ (np.eye(model.p) - model.a_mat) + u @ model.c_factor.lower.T


def copula_gaussianize(x, eps: float = 1e-6, rng=None,
                       discrete_max_levels: int = 20) -> Tuple[np.ndarray, CopulaTables]:
    """
    Map each column to normal scores through its jittered ranks.

    Returns:
        (z, tables) with z = ndtri((rank + 1/2) / n) clipped to [eps, 1 - eps]
        before the transform
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {x.shape}")
    n, p = x.shape
    if n < 2:
        raise InsufficientSamples(f"copula transform needs at least 2 rows, got {n}")
    rng = as_generator(rng)

    std = x.std(axis=0)
    constant = std == 0
    for j in np.flatnonzero(constant):
        warnings.warn(f"column {j} is constant; ranks are random", DegenerateFeatureWarning)
    scale = 1e-10 * np.where(constant, 1.0, std)
    jittered = x + rng.standard_normal((n, p)) * scale

    ranks = np.argsort(np.argsort(jittered, axis=0, kind="stable"), axis=0, kind="stable")
    u = np.clip((ranks + 0.5) / n, eps, 1.0 - eps)
    z = ndtri(u)

    sorted_values = np.sort(x, axis=0)
    levels = np.array([np.unique(x[:, j]).size for j in range(p)])
    tables = CopulaTables(
        sorted_values=sorted_values,
        grid=(np.arange(n) + 0.5) / n,
        eps=eps,
        discrete=levels <= discrete_max_levels,
    )
    return z, tables


def copula_invert(z_tilde, tables: CopulaTables) -> np.ndarray:
    """Push normal scores back through the empirical quantile functions"""
    z_tilde = np.asarray(z_tilde, dtype=np.float64)
    if z_tilde.ndim != 2 or z_tilde.shape[1] != tables.p:
        raise DimensionMismatch(f"z_tilde has shape {z_tilde.shape}, tables have {tables.p} columns")
    n_grid = tables.grid.size
    u = ndtr(z_tilde)
    out = np.empty_like(u)
    for j in range(tables.p):
        column = tables.sorted_values[:, j]
        if tables.discrete[j]:
            # nearest grid point keeps only observed levels
            idx = np.clip(np.rint(u[:, j] * n_grid - 0.5), 0, n_grid - 1).astype(int)
            out[:, j] = column[idx]
        else:
            out[:, j] = np.interp(u[:, j], tables.grid, column)
    return out


def copula_knockoffs(x, extra_shrink: float = 0.1, rng=None, eps: float = 1e-6) -> np.ndarray:
    """Gaussian copula knockoffs with shrunk z-space covariance"""
    x = np.asarray(x, dtype=np.float64)
    rng = as_generator(rng)
    n, p = x.shape
    if n <= p:
        warnings.warn(f"copula knockoffs with n={n} <= p={p}", FewSamplesWarning)
        logger.warning("copula knockoffs with n=%d <= p=%d; covariance relies on shrinkage", n, p)

    z, tables = copula_gaussianize(x, eps=eps, rng=rng)
    mu = z.mean(axis=0)
    zc = z - mu
    sigma_hat, alpha = ledoit_wolf(zc, extra_shrink)
    logger.debug("copula shrinkage alpha'=%.3f", alpha)

    model = build_gaussian_model(sigma_hat, cap=float(np.diag(sigma_hat).max()))
    z_tilde = sample_gaussian_knockoffs(zc, model, rng) + mu
    return copula_invert(z_tilde, tables)


@dataclass
class FixedXKnockoffs:
    """Fixed-X construction on the unit-norm scale, plus the norms to undo it"""

    x_normalized: np.ndarray
    x_tilde_normalized: np.ndarray
    s: np.ndarray
    norms: np.ndarray

    @property
    def x_tilde(self) -> np.ndarray:
        return self.x_tilde_normalized * self.norms


def build_fixedx(x, rng) -> FixedXKnockoffs:
    """
    Fixed-X knockoffs with equi-correlated s = min(1, 2 lambda_min(G)).

    Requires n >= 2p so that an orthogonal complement of the column space exists.
    """
    x = np.asarray(x, dtype=np.float64)
    n, p = x.shape
    if n < 2 * p:
        raise InsufficientRows(f"fixed-X knockoffs need n >= 2p (n={n}, p={p})")
    rng = as_generator(rng)

    norms = np.linalg.norm(x, axis=0)
    zero = np.flatnonzero(norms < SINGULAR_TOL)
    if zero.size:
        raise RankDeficient(f"zero columns {zero.tolist()}", columns=zero)
    xn = x / norms

    u, d, vt = np.linalg.svd(xn, full_matrices=False)
    if d.min() < SINGULAR_TOL:
        null_dir = vt[-1]
        cols = np.flatnonzero(np.abs(null_dir) > 1e-6)
        raise RankDeficient(f"design is rank deficient on columns {cols.tolist()}", columns=cols)

    gram = xn.T @ xn
    lam_min, _ = sym_eig_extremes(symmetrize(gram))
    s_val = min(1.0, 2.0 * lam_min)
    s = np.full(p, s_val)

    # random orthonormal basis orthogonal to span(U), projected twice for accuracy
    q = rng.standard_normal((n, p))
    q -= u @ (u.T @ q)
    q, _ = np.linalg.qr(q)
    q -= u @ (u.T @ q)
    u_perp, _ = np.linalg.qr(q)

    c_diag = np.sqrt(np.clip(2.0 * s_val - s_val ** 2 / d ** 2, 0.0, None))
    x_tilde = xn - ((u / d) @ vt) * s + (u_perp * c_diag) @ vt
    return FixedXKnockoffs(x_normalized=xn, x_tilde_normalized=x_tilde, s=s, norms=norms)


def fixedx_knockoffs(x, rng) -> np.ndarray:
    return build_fixedx(x, rng).x_tilde


def augment(x, x_tilde, y, feature_names: Optional[List[str]] = None) -> AugmentedDesign:
    """Package a design with its knockoffs and response"""
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()

    if x.ndim != 2 or x_tilde.ndim != 2 or x_tilde.size == 0:
        raise DimensionMismatch("x and x_tilde must be non-empty 2-D matrices")
    if x.shape != x_tilde.shape:
        raise DimensionMismatch(f"x {x.shape} and x_tilde {x_tilde.shape} differ")
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"y has {y.shape[0]} rows, x has {x.shape[0]}")
    if feature_names is not None and len(feature_names) != x.shape[1]:
        raise DimensionMismatch(f"{len(feature_names)} names for {x.shape[1]} features")
    for name, arr in (("x", x), ("x_tilde", x_tilde), ("y", y)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput(f"{name} contains NaN or Inf")

    return AugmentedDesign(x=x, x_tilde=x_tilde, y=y,
                           feature_names=list(feature_names) if feature_names is not None else None)
