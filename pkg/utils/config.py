"""
Experiment configuration: presets, YAML/JSON loading, canonical digests and
purpose-tagged random streams.
"""
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml

from utils.baselines import LassoPathConfig, MaldConfig
from utils.datagen import InjectionSpec, SyntheticSpec
from utils.errors import InvalidConfig
from utils.grip import BssConfig, RegularizationPrior, Schedule
from utils.neuralnet import NetConfig

logger = logging.getLogger(__name__)

PROFILES = ("synthetic", "semireal", "real")
METHODS = ("grip2", "grip1", "grip1a", "gr", "lapa", "mald")
KNOCKOFF_KINDS = ("gaussian", "copula", "fixedx")

METHOD_SCHEDULES = {
    "grip2": Schedule.TWO_D_BLOCK,
    "grip1": Schedule.ONE_D_BLOCK_LAMBDA,
    "grip1a": Schedule.ONE_D_BLOCK_A,
    "gr": Schedule.FIXED,
}

# fixed codes so stream keys never depend on dict ordering
PURPOSES = {
    "design": 1,
    "noise": 2,
    "knockoff": 3,
    "init": 4,
    "schedule": 5,
    "beta": 6,
    "support": 7,
    "inject": 8,
    "eval": 9,
}


@dataclass
class DataSource:
    """File-backed design for the semireal and real profiles"""

    x_path: Optional[str] = None
    y_path: Optional[str] = None
    y_column: Optional[str] = None
    truth_path: Optional[str] = None
    na_values: Tuple[str, ...] = ("NA",)
    preprocess: bool = True
    dedup_threshold: Optional[float] = 0.98
    cluster_threshold: Optional[float] = 0.90
    binary_filter: bool = False
    min_count: int = 3
    log_response: bool = False


@dataclass
class CalibrationConfig:
    enabled: bool = False
    r_min: float = 0.01
    r_max: float = 0.2
    warmup: int = 200
    delta: float = 1e-3
    candidates: Tuple[int, ...] = (10, 25, 50, 100)


@dataclass
class ExperimentConfig:
    """
    One experiment: profile, method, knockoff construction and all nested settings.

    ``bss.net.input_dim`` is a placeholder; it is set to 2p once the design is known.
    """

    profile: str
    bss: BssConfig
    method: str = "grip2"
    knockoff_kind: str = "gaussian"
    q_grid: Tuple[float, ...] = (0.05, 0.1, 0.2)
    trials: int = 50
    base_seed: int = 0
    offset: int = 1
    extra_shrink: float = 0.1
    synthetic: Optional[SyntheticSpec] = None
    injection: Optional[InjectionSpec] = None
    data: DataSource = field(default_factory=DataSource)
    lasso: LassoPathConfig = field(default_factory=LassoPathConfig)
    mald: MaldConfig = field(default_factory=MaldConfig)
    mald_train_steps: Optional[int] = None
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)

    def __post_init__(self):
        self.q_grid = tuple(float(q) for q in self.q_grid)
        if self.profile not in PROFILES:
            raise InvalidConfig(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.method not in METHODS:
            raise InvalidConfig(f"method must be one of {METHODS}, got {self.method!r}")
        if self.knockoff_kind not in KNOCKOFF_KINDS:
            raise InvalidConfig(f"knockoff_kind must be one of {KNOCKOFF_KINDS}, got {self.knockoff_kind!r}")
        if not self.q_grid or list(self.q_grid) != sorted(set(self.q_grid)):
            raise InvalidConfig(f"q_grid must be nonempty and strictly ascending, got {self.q_grid}")
        if any(not 0.0 < q < 1.0 for q in self.q_grid):
            raise InvalidConfig("every q must lie in (0, 1)")
        if self.trials < 1:
            raise InvalidConfig("trials must be >= 1")
        if self.profile == "synthetic" and self.synthetic is None:
            raise InvalidConfig("synthetic profile needs a synthetic spec")

    @property
    def schedule(self) -> Optional[Schedule]:
        return METHOD_SCHEDULES.get(self.method)


def default_profiles() -> Dict[str, ExperimentConfig]:
    """Fresh copies of the three presets"""
    synthetic = ExperimentConfig(
        profile="synthetic",
        synthetic=SyntheticSpec(n=20000, p=500, rho=0.4, support_spacing=5, snr=0.2),
        knockoff_kind="gaussian",
        bss=BssConfig(
            total_steps=5000,
            block_size=25,
            prior=RegularizationPrior(lambda_min=1e-4, lambda_max=1e-1),
            net=NetConfig(input_dim=2, depth=3, width=512, learning_rate=1e-3,
                          deep_l2=1e-4, clip_max_norm=None, batch_size=256),
        ),
    )
    semireal = ExperimentConfig(
        profile="semireal",
        injection=InjectionSpec(support_frac=0.2, snr=0.2, hidden_width=16),
        knockoff_kind="copula",
        bss=BssConfig(
            total_steps=10000,
            block_size=25,
            prior=RegularizationPrior(lambda_min=1.0, lambda_max=100.0),
            net=NetConfig(input_dim=2, depth=3, width=512, learning_rate=1e-3,
                          deep_l2=1e-7, clip_max_norm=1.0, batch_size=256),
        ),
    )
    real = ExperimentConfig(
        profile="real",
        knockoff_kind="fixedx",
        q_grid=(0.05,),
        data=DataSource(preprocess=False, dedup_threshold=None, cluster_threshold=None,
                        binary_filter=True, min_count=3, log_response=True),
        bss=BssConfig(
            total_steps=5000,
            block_size=50,
            prior=RegularizationPrior(lambda_min=1e-3, lambda_max=4e-2),
            net=NetConfig(input_dim=2, depth=1, width=1, learning_rate=1e-3,
                          deep_l2=1e-2, clip_max_norm=1.0, batch_size=None),
        ),
    )
    return {"synthetic": synthetic, "semireal": semireal, "real": real}


_OPTIONAL_NESTED = {"synthetic": SyntheticSpec, "injection": InjectionSpec}


def _merge(instance, overrides: Dict[str, Any]):
    if not isinstance(overrides, dict):
        raise InvalidConfig(f"expected a mapping for {type(instance).__name__}, got {overrides!r}")
    known = {f.name for f in dataclasses.fields(instance)}
    changes = {}
    for key, value in overrides.items():
        if key not in known:
            raise InvalidConfig(f"unknown field {type(instance).__name__}.{key}")
        current = getattr(instance, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            value = _merge(current, value)
        elif current is None and key in _OPTIONAL_NESTED and isinstance(value, dict):
            value = _OPTIONAL_NESTED[key](**value)
        elif isinstance(current, tuple) and isinstance(value, (list, tuple)):
            value = tuple(value)
        changes[key] = value
    try:
        return replace(instance, **changes)
    except TypeError as err:
        raise InvalidConfig(str(err)) from err


def override(cfg: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """Field-by-field override; nested mappings recurse into nested configs"""
    return _merge(cfg, overrides)


def config_from_dict(payload: Dict[str, Any]) -> ExperimentConfig:
    payload = dict(payload)
    profile = payload.pop("profile", "synthetic")
    presets = default_profiles()
    if profile not in presets:
        raise InvalidConfig(f"unknown profile {profile!r}")
    return override(presets[profile], payload)


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON config file on top of its profile preset"""
    path = Path(path)
    with open(path) as f:
        if path.suffix.lower() == ".json":
            payload = json.load(f)
        else:
            payload = yaml.safe_load(f) or {}
    logger.info("Loaded config %s (profile %s)", path, payload.get("profile", "synthetic"))
    return config_from_dict(payload)


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    return _plain(cfg)


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(cfg)).encode("utf-8")).hexdigest()


def derive_seed(base_seed: int, purpose: str, trial_id: Optional[int] = None, *extra: int) -> int:
    """
    Independent 64-bit seed for one (purpose, trial) stream.

    The purpose code and trial id enter the SeedSequence spawn key, so changing one
    stream never shifts another.
    """
    if purpose not in PURPOSES:
        raise InvalidConfig(f"unknown stream purpose {purpose!r}")
    key = (PURPOSES[purpose],) + (() if trial_id is None else (int(trial_id),)) + tuple(int(e) for e in extra)
    seq = np.random.SeedSequence(int(base_seed), spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_rng(base_seed: int, purpose: str, trial_id: Optional[int] = None, *extra: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, purpose, trial_id, *extra))
