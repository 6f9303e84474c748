"""
Comparator importance scores: lasso entry time, mean absolute local derivative,
and the single-shot group lasso ablation.
"""
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path

from utils.errors import InvalidConfig, NotConvergedWarning
from utils.grip import BatchSampler, BssConfig, PersistenceScores, Schedule, bss_train, check_design
from utils.knockoffs import AugmentedDesign, as_generator
from utils.neuralnet import AdamState, NetConfig, NetParams, adam_step, init_params, input_grads, loss_and_grads

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-12


@dataclass
class LassoPathConfig:
    n_lambdas: int = 100
    eps_ratio: float = 1e-4
    lambda_grid: Optional[Sequence[float]] = None
    max_iters: int = 5000
    tol: float = 1e-7

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1 or self.n_lambdas < 2:
            raise InvalidConfig("tol, max_iters and n_lambdas must be positive (n_lambdas >= 2)")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=np.float64)
            if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise InvalidConfig("lambda_grid must be strictly descending and positive")

    def grid_for(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.lambda_grid is not None:
            return np.asarray(self.lambda_grid, dtype=np.float64)
        lam_max = np.max(np.abs(x.T @ y)) / x.shape[0]
        return lam_max * np.logspace(0.0, np.log10(self.eps_ratio), self.n_lambdas)


@dataclass
class MaldConfig:
    r: float = 1.0
    eval_batches: int = 8

    def __post_init__(self):
        if self.r <= 0:
            raise InvalidConfig(f"MALD exponent must be positive, got {self.r}")
        if self.eval_batches < 1:
            raise InvalidConfig("eval_batches must be positive")


def lasso_coefficients(x, y, grid, cfg: LassoPathConfig) -> np.ndarray:
    """Coefficients along ``grid`` (columns follow the grid order)"""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        _, coefs, _ = lasso_path(x, y, alphas=grid, max_iter=cfg.max_iters, tol=cfg.tol)
    misses = [w for w in caught if issubclass(w.category, ConvergenceWarning)]
    if misses:
        logger.warning("lasso path: %d grid points hit max_iters=%d", len(misses), cfg.max_iters)
        warnings.warn(f"{len(misses)} lasso grid points did not converge", NotConvergedWarning)
    return coefs


def lasso_entry_scores(data: AugmentedDesign, cfg: LassoPathConfig) -> np.ndarray:
    """Largest grid lambda at which each column enters the lasso path, 0 if it never does"""
    x, y = data.matrix, data.y
    means, stds = x.mean(axis=0), x.std(axis=0)
    if np.max(np.abs(means)) > 1e-6 or np.max(np.abs(stds - 1.0)) > 1e-3:
        logger.warning("lasso entry scores on non-standardized columns")

    grid = cfg.grid_for(x, y)
    coefs = lasso_coefficients(x, y, grid, cfg)
    active = np.abs(coefs) > ACTIVE_TOL
    entered = active.any(axis=1)
    first = np.argmax(active, axis=1)
    return np.where(entered, grid[first], 0.0)


def mald_scores(data: AugmentedDesign, net_cfg: NetConfig, train_steps: int, cfg: MaldConfig,
                rng, params: Optional[NetParams] = None) -> np.ndarray:
    """
    Mean absolute local derivative of an unpenalized network.

    Args:
        data: Augmented design
        net_cfg: Network configuration; deep_l2 is forced to 0
        train_steps: Adam steps with lambda = 0
        cfg: Exponent and number of evaluation batches
        rng: Stream for initialization, minibatches and evaluation rows
        params: Optional initial parameters

    Returns:
        Nonnegative score per augmented column
    """
    net_cfg = replace(net_cfg, deep_l2=0.0)
    x, y = check_design(data, net_cfg)
    rng = as_generator(rng)
    if params is None:
        params = init_params(net_cfg, rng)
    state = AdamState.zeros_like(params)
    sampler = BatchSampler(x.shape[0], net_cfg.batch_size, rng)

    for _ in range(train_steps):
        idx = sampler.next()
        _, grads = loss_and_grads(params, (x[idx], y[idx]), 0.0, 1.0, net_cfg)
        params, state = adam_step(params, state, grads, net_cfg.learning_rate)

    if sampler.size * cfg.eval_batches >= x.shape[0]:
        rows = np.arange(x.shape[0])
    else:
        rows = np.concatenate([sampler.next() for _ in range(cfg.eval_batches)])
    grads_x = input_grads(params, x[rows])
    return np.mean(np.abs(grads_x) ** cfg.r, axis=0)


def single_shot_group_lasso(data: AugmentedDesign, cfg: BssConfig, rng,
                            params: Optional[NetParams] = None) -> PersistenceScores:
    """One training run at (lambda_fix, a = 1), snapshotted every M steps"""
    fixed = replace(cfg, prior=replace(cfg.prior, schedule=Schedule.FIXED))
    return bss_train(data, fixed, rng, params=params)
