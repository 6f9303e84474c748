"""
Numpy MLP with a first-layer group quasi-norm penalty.

The objective for one batch is

    mean loss + lam * sum_j (||w_j||^2 + eps^2)^(a/2) + gamma/2 * ||theta_deep||^2

where w_j is column j of the first-layer weight matrix and theta_deep holds the
weights of the deeper layers and the output head. Biases are never penalized.
Gradients are written out by hand; training uses Adam.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit

from utils.errors import DimensionMismatch, InvalidConfig, NonFiniteLoss

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOSS_KINDS = ("squared_error", "logistic")


@dataclass
class NetConfig:
    input_dim: int
    depth: int = 3
    width: int = 512
    activation: str = "relu"
    loss_kind: str = "squared_error"
    learning_rate: float = 1e-3
    deep_l2: float = 0.0
    smoothing_eps: float = 1e-8
    clip_max_norm: Optional[float] = None
    batch_size: Optional[int] = 256

    def __post_init__(self):
        for name in ("input_dim", "depth", "width"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be a positive integer")
        if self.activation != "relu":
            raise InvalidConfig(f"unsupported activation: {self.activation}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidConfig(f"loss_kind must be one of {LOSS_KINDS}")
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be nonnegative")
        if self.deep_l2 < 0:
            raise InvalidConfig("deep_l2 must be nonnegative")
        if self.smoothing_eps < 0:
            raise InvalidConfig("smoothing_eps must be nonnegative")
        if self.clip_max_norm is not None and self.clip_max_norm <= 0:
            raise InvalidConfig("clip_max_norm must be positive or None")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidConfig("batch_size must be positive or None (full batch)")


@dataclass
class NetParams:
    w0: np.ndarray
    b0: np.ndarray
    deep: List[Tuple[np.ndarray, np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray

    def arrays(self) -> List[np.ndarray]:
        out = [self.w0, self.b0]
        for w, b in self.deep:
            out += [w, b]
        return out + [self.head_w, self.head_b]

    @classmethod
    def from_arrays(cls, arrays: List[np.ndarray]) -> "NetParams":
        w0, b0, *rest = arrays
        head_w, head_b = rest[-2], rest[-1]
        deep = [(rest[i], rest[i + 1]) for i in range(0, len(rest) - 2, 2)]
        return cls(w0=w0, b0=b0, deep=deep, head_w=head_w, head_b=head_b)

    def map(self, fn) -> "NetParams":
        return NetParams.from_arrays([fn(a) for a in self.arrays()])

    def copy(self) -> "NetParams":
        return self.map(np.copy)

    def swap_columns(self, j: int, k: int) -> "NetParams":
        out = self.copy()
        out.w0[:, [j, k]] = out.w0[:, [k, j]]
        return out

    def save(self, path) -> Path:
        path = Path(path).with_suffix(".npz")
        arrays = {f"a{i}": a for i, a in enumerate(self.arrays())}
        np.savez(path, **arrays)
        return path

    @classmethod
    def load(cls, path) -> "NetParams":
        with np.load(path) as data:
            keys = sorted(data.files, key=lambda k: int(k[1:]))
            return cls.from_arrays([data[k] for k in keys])


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params: NetParams) -> "AdamState":
        arrays = params.arrays()
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays])


@dataclass
class _Cache:
    x: np.ndarray
    pre: List[np.ndarray] = field(default_factory=list)
    acts: List[np.ndarray] = field(default_factory=list)


def init_params(cfg: NetConfig, rng) -> NetParams:
    """He-scaled normal weights, zero biases"""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    d = cfg.width
    w0 = rng.standard_normal((d, cfg.input_dim)) * np.sqrt(2.0 / cfg.input_dim)
    deep = []
    for _ in range(cfg.depth):
        w = rng.standard_normal((d, d)) * np.sqrt(2.0 / d)
        deep.append((w, np.zeros(d)))
    head_w = rng.standard_normal(d) * np.sqrt(2.0 / d)
    return NetParams(w0=w0, b0=np.zeros(d), deep=deep, head_w=head_w, head_b=np.zeros(1))


def _pair_sum(values: np.ndarray) -> float:
    """Sum a length-2p vector as sum_j (v_j + v_{j+p}), which is unchanged by pair swaps"""
    m = values.shape[0]
    if m % 2:
        return float(np.sum(values))
    half = m // 2
    return float(np.sum(values[:half] + values[half:]))


def _pair_halves(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(x_j + x_{j+p}, x_j - x_{j+p}) column blocks"""
    half = x.shape[1] // 2
    xa, xb = x[:, :half], x[:, half:]
    return xa + xb, xa - xb


def _first_layer(x: np.ndarray, w0: np.ndarray, b0: np.ndarray) -> np.ndarray:
    # in the sum/difference basis a feature/knockoff swap leaves the sums unchanged and
    # negates both differences, so every pre-activation stays bit-identical
    if x.shape[1] % 2:
        return x @ w0.T + b0
    xs, xd = _pair_halves(x)
    ws, wd = _pair_halves(w0)
    return 0.5 * (xs @ ws.T + xd @ wd.T) + b0


def _check_input(params: NetParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.w0.shape[1]:
        raise DimensionMismatch(f"batch has shape {x.shape}, network expects {params.w0.shape[1]} inputs")
    return x


def _forward(params: NetParams, x: np.ndarray) -> Tuple[np.ndarray, _Cache]:
    cache = _Cache(x=x)
    z = _first_layer(x, params.w0, params.b0)
    h = np.maximum(z, 0.0)
    cache.pre.append(z)
    cache.acts.append(h)
    for w, b in params.deep:
        z = h @ w.T + b
        h = np.maximum(z, 0.0)
        cache.pre.append(z)
        cache.acts.append(h)
    out = h @ params.head_w + params.head_b[0]
    return out, cache


def forward(params: NetParams, x_batch) -> np.ndarray:
    x = _check_input(params, x_batch)
    out, _ = _forward(params, x)
    return out


def _backward(params: NetParams, cache: _Cache, dout: np.ndarray,
              with_input: bool = False) -> Tuple[NetParams, Optional[np.ndarray]]:
    g_head_w = cache.acts[-1].T @ dout
    g_head_b = np.array([dout.sum()])
    dh = np.multiply.outer(dout, params.head_w)

    g_deep = []
    for layer in range(len(params.deep) - 1, -1, -1):
        w, _ = params.deep[layer]
        dz = dh * (cache.pre[layer + 1] > 0)
        g_deep.append((dz.T @ cache.acts[layer], dz.sum(axis=0)))
        dh = dz @ w
    g_deep.reverse()

    dz0 = dh * (cache.pre[0] > 0)
    if cache.x.shape[1] % 2:
        g_w0 = dz0.T @ cache.x
    else:
        xs, xd = _pair_halves(cache.x)
        g_s, g_d = dz0.T @ xs, dz0.T @ xd
        g_w0 = 0.5 * np.hstack([g_s + g_d, g_s - g_d])

    grads = NetParams(w0=g_w0, b0=dz0.sum(axis=0), deep=g_deep, head_w=g_head_w, head_b=g_head_b)
    dx = dz0 @ params.w0 if with_input else None
    return grads, dx


def group_norms(params: NetParams) -> np.ndarray:
    return np.sqrt(np.sum(params.w0 * params.w0, axis=0))


def penalty(params: NetParams, lam: float, a: float, eps: float) -> float:
    """lam * sum_j (||w_j||^2 + eps^2)^(a/2)"""
    if not 0.0 < a <= 1.0:
        raise ValueError(f"a must lie in (0, 1], got {a}")
    sq = np.sum(params.w0 * params.w0, axis=0)
    return lam * _pair_sum((sq + eps * eps) ** (a / 2.0))


def penalty_grad_w0(w0: np.ndarray, lam: float, a: float, eps: float) -> np.ndarray:
    sq = np.sum(w0 * w0, axis=0) + eps * eps
    factor = np.zeros_like(sq)
    positive = sq > 0
    factor[positive] = lam * a * sq[positive] ** (a / 2.0 - 1.0)
    return w0 * factor


def _deep_sq_norm(params: NetParams) -> float:
    total = 0.0
    for w, _ in params.deep:
        total += float(np.sum(w * w))
    return total + float(np.sum(params.head_w * params.head_w))


def _prediction_loss(out: np.ndarray, y: np.ndarray, loss_kind: str) -> Tuple[float, np.ndarray]:
    n = y.shape[0]
    if loss_kind == "squared_error":
        resid = out - y
        return float(np.mean(resid * resid)), 2.0 * resid / n
    loss = np.logaddexp(0.0, out) - y * out
    return float(np.mean(loss)), (expit(out) - y) / n


def loss_and_grads(params: NetParams, batch, lam: float, a: float,
                   cfg: NetConfig) -> Tuple[float, NetParams]:
    """
    Full objective and its analytic gradients on one batch.

    Args:
        params: Current network parameters
        batch: (x, y) pair
        lam: Group penalty strength
        a: Quasi-norm exponent in (0, 1]
        cfg: Network configuration (loss kind, deep_l2, smoothing)

    Returns:
        (loss, grads) with grads shaped like params
    """
    x, y = batch
    x = _check_input(params, x)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] == 0 or y.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"batch has {x.shape[0]} rows and {y.shape[0]} targets")

    out, cache = _forward(params, x)
    pred_loss, dout = _prediction_loss(out, y, cfg.loss_kind)
    grads, _ = _backward(params, cache, dout)

    loss = pred_loss
    if lam != 0.0:
        loss += penalty(params, lam, a, cfg.smoothing_eps)
        grads.w0 = grads.w0 + penalty_grad_w0(params.w0, lam, a, cfg.smoothing_eps)
    if cfg.deep_l2 != 0.0:
        gamma = cfg.deep_l2
        loss += 0.5 * gamma * _deep_sq_norm(params)
        grads.deep = [(gw + gamma * w, gb) for (gw, gb), (w, _) in zip(grads.deep, params.deep)]
        grads.head_w = grads.head_w + gamma * params.head_w

    if not np.isfinite(loss):
        raise NonFiniteLoss(f"objective is {loss}")
    return loss, grads


def global_norm(grads: NetParams) -> float:
    total = _pair_sum(np.sum(grads.w0 * grads.w0, axis=0))
    for arr in grads.arrays()[1:]:
        total += float(np.sum(arr * arr))
    return float(np.sqrt(total))


def clip_grads(grads: NetParams, max_norm: float) -> NetParams:
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return grads.map(lambda g: g * scale)
    return grads


def adam_step(params: NetParams, state: AdamState, grads: NetParams,
              lr: float) -> Tuple[NetParams, AdamState]:
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(m=new_m, v=new_v, t=t, beta1=b1, beta2=b2, eps=state.eps)
    return NetParams.from_arrays(new_params), new_state


def input_grads(params: NetParams, x_batch) -> np.ndarray:
    """Per-sample gradient of the network output with respect to each input"""
    x = _check_input(params, x_batch)
    out, cache = _forward(params, x)
    _, dx = _backward(params, cache, np.ones_like(out), with_input=True)
    return dx
