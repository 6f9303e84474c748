"""
Block stochastic sampling (BSS) over the regularization surface.

Training runs in blocks of M Adam steps. Each block draws a regime (lam, a) from the
prior, and the first-layer group norms are recorded at the end of the block. The
persistence score of a feature is the mean of its recorded norms. Two calibration
helpers set the lambda range and the block size.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import (
    CalibrationWarning,
    DegenerateGradient,
    DimensionMismatch,
    InvalidConfig,
    LengthMismatch,
    NonFiniteLoss,
)
from utils.knockoffs import AugmentedDesign, as_generator
from utils.neuralnet import (
    AdamState,
    NetConfig,
    NetParams,
    adam_step,
    clip_grads,
    group_norms,
    init_params,
    loss_and_grads,
    penalty_grad_w0,
)

logger = logging.getLogger(__name__)


class Schedule(str, Enum):
    TWO_D_BLOCK = "two_d_block"
    ONE_D_BLOCK_LAMBDA = "one_d_block_lambda"
    ONE_D_BLOCK_A = "one_d_block_a"
    FIXED = "fixed"


@dataclass
class RegularizationPrior:
    lambda_min: float
    lambda_max: float
    a_min: float = 0.1
    schedule: Schedule = Schedule.TWO_D_BLOCK

    def __post_init__(self):
        self.schedule = Schedule(self.schedule)
        if not 0 < self.lambda_min <= self.lambda_max:
            raise InvalidConfig(f"need 0 < lambda_min <= lambda_max, got [{self.lambda_min}, {self.lambda_max}]")
        if not 0 < self.a_min <= 1:
            raise InvalidConfig(f"a_min must lie in (0, 1], got {self.a_min}")

    @property
    def lambda_fix(self) -> float:
        return math.sqrt(self.lambda_min * self.lambda_max)


@dataclass
class BssConfig:
    total_steps: int
    block_size: int
    prior: RegularizationPrior
    net: NetConfig
    warmup_steps: int = 0
    ensemble_k: int = 1
    diagnostics: bool = False

    def __post_init__(self):
        if self.block_size < 1 or self.total_steps < self.block_size:
            raise InvalidConfig(f"need total_steps >= block_size >= 1 (T={self.total_steps}, M={self.block_size})")
        if self.warmup_steps < 0:
            raise InvalidConfig("warmup_steps must be nonnegative")
        if self.ensemble_k < 1 or self.total_steps // self.ensemble_k < self.block_size:
            raise InvalidConfig(f"ensemble_k={self.ensemble_k} leaves fewer than M steps per member")

    @property
    def n_blocks(self) -> int:
        return self.total_steps // self.block_size


@dataclass
class PersistenceScores:
    s_hat: np.ndarray
    snapshots_used: int
    regimes: List[Tuple[float, float]]
    diagnostics: List[Dict] = field(default_factory=list)


def sample_regime(prior: RegularizationPrior, rng) -> Tuple[float, float]:
    """Draw (lam, a) for one block according to the prior's schedule"""
    schedule = prior.schedule
    if schedule == Schedule.FIXED:
        return prior.lambda_fix, 1.0
    if schedule == Schedule.ONE_D_BLOCK_A:
        return prior.lambda_fix, float(rng.uniform(prior.a_min, 1.0))

    if prior.lambda_min == prior.lambda_max:
        lam = prior.lambda_min
    else:
        lam = float(np.exp(rng.uniform(np.log(prior.lambda_min), np.log(prior.lambda_max))))
    if schedule == Schedule.ONE_D_BLOCK_LAMBDA:
        return lam, 1.0
    return lam, float(rng.uniform(prior.a_min, 1.0))


class BatchSampler:
    """Row indices for minibatches; full batch uses every row in order"""

    def __init__(self, n: int, batch_size: Optional[int], rng: np.random.Generator):
        self.n = n
        self.size = n if batch_size is None else min(batch_size, n)
        self.rng = rng
        self._all = np.arange(n)

    def next(self) -> np.ndarray:
        if self.size == self.n:
            return self._all
        return self.rng.choice(self.n, size=self.size, replace=False)


def _train_step(params: NetParams, state: AdamState, x: np.ndarray, y: np.ndarray,
                idx: np.ndarray, lam: float, a: float, cfg: NetConfig):
    loss, grads = loss_and_grads(params, (x[idx], y[idx]), lam, a, cfg)
    if cfg.clip_max_norm is not None:
        grads = clip_grads(grads, cfg.clip_max_norm)
    params, state = adam_step(params, state, grads, cfg.learning_rate)
    return params, state, loss


def check_design(data: AugmentedDesign, net: NetConfig) -> Tuple[np.ndarray, np.ndarray]:
    x = data.matrix
    if x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"design has {x.shape[1]} columns, network expects {net.input_dim}")
    return x, data.y


def warm_up(params: NetParams, data: AugmentedDesign, cfg: NetConfig, steps: int, rng,
            state: Optional[AdamState] = None) -> Tuple[NetParams, AdamState]:
    """Run ``steps`` Adam steps without the group penalty"""
    x, y = check_design(data, cfg)
    rng = as_generator(rng)
    state = state or AdamState.zeros_like(params)
    sampler = BatchSampler(x.shape[0], cfg.batch_size, rng)
    for _ in range(steps):
        params, state, _ = _train_step(params, state, x, y, sampler.next(), 0.0, 1.0, cfg)
    return params, state


def gradient_ratio(params: NetParams, data: AugmentedDesign, lam: float, a: float,
                   cfg: NetConfig) -> float:
    """Ratio of penalty gradient to prediction-loss gradient on the first layer, full data"""
    x, y = check_design(data, cfg)
    pred_cfg = replace(cfg, deep_l2=0.0)
    _, grads = loss_and_grads(params, (x, y), 0.0, 1.0, pred_cfg)
    pred_norm = float(np.linalg.norm(grads.w0))
    if pred_norm < 1e-12:
        raise DegenerateGradient(f"prediction gradient norm {pred_norm:.2e} on the first layer")
    pen = penalty_grad_w0(params.w0, lam, a, cfg.smoothing_eps)
    return float(np.linalg.norm(pen)) / pred_norm


def bss_train(data: AugmentedDesign, cfg: BssConfig, rng,
              params: Optional[NetParams] = None) -> PersistenceScores:
    """
    Block stochastic sampling for persistence scores.

    Args:
        data: Augmented design with 2p columns
        cfg: BSS configuration; cfg.net.input_dim must equal 2p
        rng: Stream for regimes and minibatches (and initialization if params is None)
        params: Optional initial parameters

    Returns:
        PersistenceScores with one snapshot per block
    """
    x, y = check_design(data, cfg.net)
    rng = as_generator(rng)
    if params is None:
        params = init_params(cfg.net, rng)
    state = AdamState.zeros_like(params)
    sampler = BatchSampler(x.shape[0], cfg.net.batch_size, rng)

    for _ in range(cfg.warmup_steps):
        params, state, _ = _train_step(params, state, x, y, sampler.next(), 0.0, 1.0, cfg.net)

    snapshots = []
    regimes = []
    diagnostics = []
    for block in range(cfg.n_blocks):
        lam, a = sample_regime(cfg.prior, rng)
        loss = float("nan")
        for step in range(cfg.block_size):
            try:
                params, state, loss = _train_step(params, state, x, y, sampler.next(), lam, a, cfg.net)
            except NonFiniteLoss as err:
                raise NonFiniteLoss(
                    f"diverged in block {block} step {step} (lam={lam:.3e}, a={a:.3f}): {err}"
                ) from err
        snapshots.append(group_norms(params))
        regimes.append((lam, a))
        if cfg.diagnostics:
            diagnostics.append({
                "block": block,
                "lam": lam,
                "a": a,
                "loss": loss,
                "grad_ratio": gradient_ratio(params, data, lam, a, cfg.net),
            })

    s_hat = np.mean(np.vstack(snapshots), axis=0)
    logger.debug("bss_train finished: %d blocks, max score %.4f", len(snapshots), s_hat.max())
    return PersistenceScores(s_hat=s_hat, snapshots_used=len(snapshots), regimes=regimes,
                             diagnostics=diagnostics)


def ensemble_scores(runs: Sequence[PersistenceScores]) -> PersistenceScores:
    if not runs:
        raise LengthMismatch("no runs to ensemble")
    lengths = {r.s_hat.shape[0] for r in runs}
    if len(lengths) != 1:
        raise LengthMismatch(f"score vectors have different lengths: {sorted(lengths)}")
    if len(runs) == 1:
        return runs[0]
    return PersistenceScores(
        s_hat=np.mean(np.vstack([r.s_hat for r in runs]), axis=0),
        snapshots_used=sum(r.snapshots_used for r in runs),
        regimes=[reg for r in runs for reg in r.regimes],
        diagnostics=[row for r in runs for row in r.diagnostics],
    )


def run_grip(data: AugmentedDesign, cfg: BssConfig, rng,
             params: Optional[NetParams] = None) -> PersistenceScores:
    """bss_train, or an ensemble of K members sharing the step budget"""
    rng = as_generator(rng)
    if cfg.ensemble_k == 1:
        return bss_train(data, cfg, rng, params=params)

    member_cfg = replace(cfg, total_steps=cfg.total_steps // cfg.ensemble_k, ensemble_k=1)
    runs = []
    for member, child in enumerate(rng.spawn(cfg.ensemble_k)):
        logger.debug("ensemble member %d/%d", member + 1, cfg.ensemble_k)
        runs.append(bss_train(data, member_cfg, child))
    return ensemble_scores(runs)


def calibrate_lambda_range(data: AugmentedDesign, net_cfg: NetConfig, r_min: float = 0.01,
                           r_max: float = 0.2, warmup: int = 200, rng=None,
                           params: Optional[NetParams] = None) -> Tuple[float, float]:
    """
    Pick [lambda_min, lambda_max] from target gradient ratios.

    With a = 1 the penalty-to-loss gradient ratio is linear in lambda, so
    lambda = r / rho0 where rho0 is the ratio at lambda = 1.
    """
    if not 0 < r_min < r_max:
        raise InvalidConfig(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    rng = as_generator(rng)
    if params is None:
        params = init_params(net_cfg, rng)
    params, _ = warm_up(params, data, net_cfg, warmup, rng)
    rho0 = gradient_ratio(params, data, 1.0, 1.0, net_cfg)
    lam_min, lam_max = r_min / rho0, r_max / rho0
    logger.info("calibrated lambda range [%.3e, %.3e] (rho0=%.3e)", lam_min, lam_max, rho0)
    return lam_min, lam_max


def group_norm_change(prev_norms, norms) -> float:
    """Mean absolute change of the group norms between two steps"""
    prev_norms = np.asarray(prev_norms, dtype=np.float64)
    norms = np.asarray(norms, dtype=np.float64)
    return float(np.mean(np.abs(norms - prev_norms)))


def calibrate_block_size(data: AugmentedDesign, cfg: BssConfig, delta: float = 1e-3,
                         candidates: Sequence[int] = (10, 25, 50, 100), rng=None,
                         pilot_blocks: int = 4) -> int:
    """Smallest candidate M whose pilot blocks settle below ``delta`` on their last M/5 steps"""
    if not candidates:
        raise InvalidConfig("candidates must be nonempty")
    candidates = sorted(candidates)
    x, y = check_design(data, cfg.net)
    rng = as_generator(rng)
    start = init_params(cfg.net, rng)

    for m in candidates:
        params = start.copy()
        state = AdamState.zeros_like(params)
        sampler = BatchSampler(x.shape[0], cfg.net.batch_size, rng)
        window = math.ceil(m / 5)
        settled = True
        for _ in range(pilot_blocks):
            lam, a = sample_regime(cfg.prior, rng)
            norms = group_norms(params)
            changes = []
            for _ in range(m):
                params, state, _ = _train_step(params, state, x, y, sampler.next(), lam, a, cfg.net)
                new_norms = group_norms(params)
                changes.append(group_norm_change(norms, new_norms))
                norms = new_norms
            if max(changes[-window:]) >= delta:
                settled = False
        if settled:
            logger.info("block size calibration accepted M=%d", m)
            return m

    warnings.warn(f"no candidate block size settled below delta={delta}; using {candidates[-1]}",
                  CalibrationWarning)
    logger.warning("block size calibration fell back to M=%d", candidates[-1])
    return candidates[-1]
