"""
Synthetic designs and responses.

- AR(1) Gaussian designs with Sigma_ij = rho^|i-j|
- single-index responses y = sin(x'beta / sqrt(|S|)) + noise at a target SNR
- MLP signal injection on fixed covariates
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import toeplitz

from utils.errors import InvalidConfig, ZeroSignalVariance
from utils.knockoffs import as_generator

logger = logging.getLogger(__name__)

MIN_SIGNAL_VAR = 1e-12


@dataclass
class SyntheticSpec:
    n: int
    p: int
    rho: float = 0.0
    support_spacing: int = 5
    snr: float = 0.2
    beta_seed: int = 0
    noise_seed: int = 1
    design_seed: int = 2

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidConfig("n and p must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidConfig(f"rho must lie in [0, 1), got {self.rho}")
        if self.support_spacing < 1:
            raise InvalidConfig("support_spacing must be >= 1")
        if self.snr <= 0:
            raise InvalidConfig("snr must be positive")
        if min(self.beta_seed, self.noise_seed, self.design_seed) < 0:
            raise InvalidConfig("seeds must be nonnegative")


@dataclass
class InjectionSpec:
    support_frac: float = 0.2
    snr: float = 0.2
    hidden_width: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.support_frac <= 1.0:
            raise InvalidConfig(f"support_frac must lie in (0, 1], got {self.support_frac}")
        if self.snr <= 0 or self.hidden_width < 1:
            raise InvalidConfig("snr and hidden_width must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be nonnegative")


@dataclass
class SyntheticData:
    x: np.ndarray
    sigma: np.ndarray
    y: np.ndarray
    beta: np.ndarray
    support: np.ndarray
    noise_var: float


def ar1_design(n: int, p: int, rho: float, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary AR(1) rows and their covariance"""
    if abs(rho) >= 1:
        raise InvalidConfig(f"|rho| must be < 1, got {rho}")
    rng = as_generator(rng)
    sigma = toeplitz(rho ** np.arange(p))
    z = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = z[:, 0]
    innovation = math.sqrt(1.0 - rho * rho)
    for k in range(1, p):
        x[:, k] = rho * x[:, k - 1] + innovation * z[:, k]
    return x, sigma


def support_grid(p: int, spacing: int) -> np.ndarray:
    if spacing < 1:
        raise InvalidConfig("spacing must be >= 1")
    return np.arange(0, p, spacing)


def single_index_response(x, support: Sequence[int], beta_rng, noise_rng,
                          snr: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Nonlinear single-index response.

    Returns:
        (y, beta, sigma2) where sigma2 = Var(signal) / snr
    """
    x = np.asarray(x, dtype=np.float64)
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise InvalidConfig("support must be nonempty")
    beta_rng, noise_rng = as_generator(beta_rng), as_generator(noise_rng)

    beta = np.zeros(x.shape[1])
    beta[support] = beta_rng.standard_normal(support.size)
    signal = np.sin(x @ beta / math.sqrt(support.size))
    var = float(np.var(signal))
    if var < MIN_SIGNAL_VAR:
        raise ZeroSignalVariance(f"signal variance {var:.2e}")

    sigma2 = var / snr
    y = signal + noise_rng.normal(0.0, math.sqrt(sigma2), size=x.shape[0])
    return y, beta, sigma2


def mlp_inject(x, support_indices: Optional[Sequence[int]], spec: InjectionSpec, rng,
               weights: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inject y = relu(X_S W1) W2 + noise on fixed covariates.

    Args:
        x: Covariate matrix
        support_indices: True support; sampled (size ceil(frac * p)) when empty or None
        spec: Injection settings
        rng: Stream for support, weights and noise
        weights: Optional (W1, W2) to use instead of random weights

    Returns:
        (y, truth) with truth sorted ascending
    """
    x = np.asarray(x, dtype=np.float64)
    rng = as_generator(rng)
    p = x.shape[1]
    if support_indices is None or len(support_indices) == 0:
        k = math.ceil(spec.support_frac * p)
        support = np.sort(rng.choice(p, size=k, replace=False))
    else:
        support = np.sort(np.asarray(support_indices, dtype=int))

    if weights is None:
        w1 = rng.standard_normal((support.size, spec.hidden_width))
        w2 = rng.standard_normal(spec.hidden_width)
    else:
        w1, w2 = (np.asarray(w, dtype=np.float64) for w in weights)

    signal = np.maximum(x[:, support] @ w1, 0.0) @ w2
    var = float(np.var(signal))
    if var < MIN_SIGNAL_VAR:
        raise ZeroSignalVariance(f"injected signal variance {var:.2e}")
    y = signal + rng.normal(0.0, math.sqrt(var / spec.snr), size=x.shape[0])
    return y, support


def generate_synthetic(spec: SyntheticSpec, design_rng=None, beta_rng=None, noise_rng=None) -> SyntheticData:
    """
    Design, support, coefficients and response.

    Streams left as None fall back to the seeds stored on ``spec``.
    """
    design_rng = spec.design_seed if design_rng is None else design_rng
    beta_rng = spec.beta_seed if beta_rng is None else beta_rng
    noise_rng = spec.noise_seed if noise_rng is None else noise_rng
    x, sigma = ar1_design(spec.n, spec.p, spec.rho, design_rng)
    support = support_grid(spec.p, spec.support_spacing)
    y, beta, noise_var = single_index_response(x, support, beta_rng, noise_rng, spec.snr)
    return SyntheticData(x=x, sigma=sigma, y=y, beta=beta, support=support, noise_var=noise_var)
