"""
Experiment pipeline for GRIP knockoff selection.

Orchestrates the full workflow for one trial (data, knockoffs, importance scores,
knockoff filter) and runs many seeded trials, aggregating and persisting results.
"""
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from utils import __version__
from utils.baselines import lasso_entry_scores, mald_scores, single_shot_group_lasso
from utils.config import (
    ExperimentConfig,
    canonical_json,
    config_digest,
    config_to_dict,
    derive_rng,
)
from utils.core_linalg import ledoit_wolf
from utils.datagen import generate_synthetic, mlp_inject
from utils.errors import InvalidConfig, TrialFailure
from utils.grip import BssConfig, calibrate_lambda_range, run_grip
from utils.ingest import (
    cluster_representatives,
    dedup_features,
    filter_binary_design,
    load_table,
    load_xy,
    preprocess_mixed,
    transform_response,
)
from utils.knockoff_filter import SelectionResult, select_from_scores
from utils.knockoffs import (
    AugmentedDesign,
    augment,
    build_gaussian_model,
    copula_knockoffs,
    fixedx_knockoffs,
    sample_gaussian_knockoffs,
)
from utils.metrics import TrialOutcome, aggregate_by_group, outcomes_frame, summaries_frame
from utils.neuralnet import init_params

logger = logging.getLogger(__name__)


def run_step(step_name: str, step_function, *args, **kwargs):
    """Run a pipeline step with error handling and timing"""
    print(f"\n🚀 {step_name}...")
    start_time = time.time()

    try:
        result = step_function(*args, **kwargs)
        elapsed = time.time() - start_time
        print(f"  ✅ {step_name} completed in {elapsed:.1f}s")
        return result, True
    except Exception as e:
        elapsed = time.time() - start_time
        print(f"  ❌ {step_name} failed after {elapsed:.1f}s: {e}")
        logger.debug("step %s failed", step_name, exc_info=True)
        return None, False


@dataclass
class PreparedData:
    """File-backed design after preprocessing, shared by every trial"""

    x: np.ndarray
    names: List[str]
    y: Optional[np.ndarray] = None
    truth: Optional[List[int]] = None
    cluster_map: Dict[str, List[str]] = field(default_factory=dict)


@dataclass
class TrialResult:
    trial_id: int
    outcomes: List[TrialOutcome]
    scores: np.ndarray
    diagnostics: List[Dict] = field(default_factory=list)


@dataclass
class ResultRecord:
    config_digest: str
    config: Dict
    outcomes: List[TrialOutcome]
    summaries: List
    failures: List[Dict]
    wall_clock: Dict[int, float]
    software_version: str = __version__
    diagnostics: List[Dict] = field(default_factory=list)

    def to_dict(self, include_wall_clock: bool = True) -> Dict:
        payload = {
            "config_digest": self.config_digest,
            "config": self.config,
            "outcomes": [asdict(o) for o in sorted(self.outcomes, key=lambda o: (o.method_name, o.q, o.trial_id))],
            "summaries": [_json_safe(s.to_row()) for s in self.summaries],
            "failures": self.failures,
            "software_version": self.software_version,
        }
        if include_wall_clock:
            payload["wall_clock"] = {str(k): v for k, v in sorted(self.wall_clock.items())}
        return payload

    def to_json(self, include_wall_clock: bool = True) -> str:
        return json.dumps(self.to_dict(include_wall_clock), indent=2, sort_keys=True)


def _json_safe(row: Dict) -> Dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}


def _read_truth(path: Optional[str], names: Sequence[str]) -> Optional[List[int]]:
    if not path:
        return None
    wanted = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    index = {name: j for j, name in enumerate(names)}
    truth = sorted(index[w] for w in wanted if w in index)
    skipped = [w for w in wanted if w not in index]
    if skipped:
        logger.warning("%d truth features are not in the processed design: %s", len(skipped), skipped[:5])
    return truth


def prepare_dataset(cfg: ExperimentConfig) -> Optional[PreparedData]:
    """Load and preprocess a file-backed design once per experiment"""
    if cfg.profile == "synthetic":
        return None
    src = cfg.data
    if not src.x_path:
        raise InvalidConfig(f"profile {cfg.profile} needs data.x_path")

    if src.y_path:
        table, y = load_xy(src.x_path, src.y_path, src.y_column, na_values=src.na_values)
    elif cfg.profile == "real":
        raise InvalidConfig("real profile needs data.y_path")
    else:
        table, y = load_table(src.x_path, na_values=src.na_values), None

    if src.preprocess:
        x, names = preprocess_mixed(table)
    else:
        x, names = table.frame.to_numpy(dtype=np.float64), table.names
    if src.binary_filter:
        x, names = filter_binary_design(x, names, src.min_count)
    if src.dedup_threshold:
        x, names, _ = dedup_features(x, names, src.dedup_threshold)
    cluster_map = {}
    if src.cluster_threshold:
        x, names, cluster_map = cluster_representatives(x, names, src.cluster_threshold)

    if y is not None:
        y = transform_response(y, src.log_response)
    logger.info("Prepared design: %d rows x %d features", x.shape[0], x.shape[1])
    return PreparedData(x=x, names=names, y=y, truth=_read_truth(src.truth_path, names),
                        cluster_map=cluster_map)


def _rho_code(rho: float) -> int:
    return int(round(rho * 1e6))


def _trial_data(cfg: ExperimentConfig, trial_id: int, prepared: Optional[PreparedData]):
    """Design, response, truth and (when known) the design covariance for one trial"""
    seed = cfg.base_seed
    if cfg.profile == "synthetic":
        spec = cfg.synthetic
        data = generate_synthetic(
            spec,
            design_rng=derive_rng(seed, "design", trial_id, spec.design_seed),
            beta_rng=derive_rng(seed, "beta", None, _rho_code(spec.rho), spec.beta_seed),
            noise_rng=derive_rng(seed, "noise", trial_id, spec.noise_seed),
        )
        return data.x, data.y, data.support.tolist(), data.sigma, None

    if cfg.profile == "semireal":
        spec = cfg.injection
        if spec is None:
            raise InvalidConfig("semireal profile needs an injection spec")
        p = prepared.x.shape[1]
        support_rng = derive_rng(seed, "support", None, spec.seed)
        support = np.sort(support_rng.choice(p, size=math.ceil(spec.support_frac * p), replace=False))
        y, truth = mlp_inject(prepared.x, support, spec, derive_rng(seed, "inject", trial_id, spec.seed))
        return prepared.x, y, truth.tolist(), None, prepared.names

    return prepared.x, prepared.y, prepared.truth, None, prepared.names


def build_knockoffs(x: np.ndarray, kind: str, rng, sigma: Optional[np.ndarray] = None,
                    extra_shrink: float = 0.1) -> np.ndarray:
    """Knockoff copy of ``x`` by the requested construction"""
    if kind == "copula":
        return copula_knockoffs(x, extra_shrink=extra_shrink, rng=rng)
    if kind == "fixedx":
        return fixedx_knockoffs(x, rng)
    if sigma is not None:
        return sample_gaussian_knockoffs(x, build_gaussian_model(sigma), rng)
    # estimated covariance, sampled around the column means
    mean = x.mean(axis=0)
    sigma_hat, _ = ledoit_wolf(x - mean, extra_shrink)
    return sample_gaussian_knockoffs(x - mean, build_gaussian_model(sigma_hat), rng) + mean


def trial_design(cfg: ExperimentConfig, trial_id: int, prepared: Optional[PreparedData]):
    """Augmented design and truth set for one trial"""
    x, y, truth, sigma, names = _trial_data(cfg, trial_id, prepared)
    x_tilde = build_knockoffs(x, cfg.knockoff_kind, derive_rng(cfg.base_seed, "knockoff", trial_id),
                              sigma=sigma, extra_shrink=cfg.extra_shrink)
    return augment(x, x_tilde, y, feature_names=names), truth


def bss_for(cfg: ExperimentConfig, p: int) -> BssConfig:
    net = replace(cfg.bss.net, input_dim=2 * p)
    prior = cfg.bss.prior
    if cfg.schedule is not None:
        prior = replace(prior, schedule=cfg.schedule)
    return replace(cfg.bss, net=net, prior=prior)


def method_scores(design: AugmentedDesign, cfg: ExperimentConfig, trial_id: int):
    """
    Importance score for every augmented column.

    Returns:
        (scores, diagnostics) with scores of length 2p
    """
    seed = cfg.base_seed
    bss = bss_for(cfg, design.p)
    init_rng = derive_rng(seed, "init", trial_id)
    schedule_rng = derive_rng(seed, "schedule", trial_id)

    if cfg.method == "lapa":
        return lasso_entry_scores(design, cfg.lasso), []

    if cfg.method == "mald":
        steps = cfg.mald_train_steps or bss.total_steps
        k = bss.ensemble_k
        if k == 1:
            params = init_params(bss.net, init_rng)
            return mald_scores(design, bss.net, steps, cfg.mald, schedule_rng, params=params), []
        members = [mald_scores(design, bss.net, steps // k, cfg.mald, child) for child in schedule_rng.spawn(k)]
        return np.mean(np.vstack(members), axis=0), []

    if cfg.calibration.enabled:
        cal = cfg.calibration
        lam_min, lam_max = calibrate_lambda_range(
            design, bss.net, cal.r_min, cal.r_max, cal.warmup, rng=derive_rng(seed, "eval", trial_id)
        )
        bss = replace(bss, prior=replace(bss.prior, lambda_min=lam_min, lambda_max=lam_max))

    params = init_params(bss.net, init_rng) if bss.ensemble_k == 1 else None
    if cfg.method == "gr":
        scores = single_shot_group_lasso(design, bss, schedule_rng, params=params)
    else:
        scores = run_grip(design, bss, schedule_rng, params=params)
    diagnostics = [dict(row, trial_id=trial_id) for row in scores.diagnostics]
    return scores.s_hat, diagnostics


def filter_all_q(scores: np.ndarray, p: int, cfg: ExperimentConfig) -> List[SelectionResult]:
    return [select_from_scores(scores, p, q, cfg.offset) for q in cfg.q_grid]


def run_trial(cfg: ExperimentConfig, trial_id: int, prepared: Optional[PreparedData] = None) -> TrialResult:
    """
    One trial: data, knockoffs, scores and the filter at every q.

    Raises:
        TrialFailure wrapping any error, with the trial id attached
    """
    try:
        if prepared is None and cfg.profile != "synthetic":
            prepared = prepare_dataset(cfg)
        design, truth = trial_design(cfg, trial_id, prepared)
        scores, diagnostics = method_scores(design, cfg, trial_id)
        results = filter_all_q(scores, design.p, cfg)
    except Exception as err:
        raise TrialFailure(trial_id, f"{type(err).__name__}: {err}") from err

    outcomes = [
        TrialOutcome(selected=[int(j) for j in r.selected], truth=truth, trial_id=trial_id,
                     method_name=cfg.method, q=r.stats.q)
        for r in results
    ]
    return TrialResult(trial_id=trial_id, outcomes=outcomes, scores=scores, diagnostics=diagnostics)


def _safe_trial(cfg: ExperimentConfig, trial_id: int, prepared: Optional[PreparedData]):
    start = time.time()
    try:
        result = run_trial(cfg, trial_id, prepared)
        return result, None, time.time() - start
    except TrialFailure as err:
        logger.error("%s", err)
        return None, str(err), time.time() - start


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out_dir=None,
                   progress: bool = True, prepared: Optional[PreparedData] = None) -> ResultRecord:
    """
    Run every trial (optionally in parallel), aggregate per (method, q) and persist.

    Failed trials are recorded with their error and excluded from aggregation.
    """
    if prepared is None:
        prepared = prepare_dataset(cfg)
    trial_ids = range(cfg.trials)
    if progress:
        trial_ids = tqdm(trial_ids, desc=f"{cfg.method} trials", unit="trial")

    runs = Parallel(n_jobs=workers)(delayed(_safe_trial)(cfg, t, prepared) for t in trial_ids)

    outcomes, failures, wall_clock, diagnostics = [], [], {}, []
    for trial_id, (result, error, seconds) in enumerate(runs):
        wall_clock[trial_id] = seconds
        if error is not None:
            failures.append({"trial_id": trial_id, "error": error})
            continue
        outcomes.extend(result.outcomes)
        diagnostics.extend(result.diagnostics)

    if failures:
        logger.warning("%d of %d trials failed", len(failures), cfg.trials)
    record = ResultRecord(
        config_digest=config_digest(cfg),
        config=config_to_dict(cfg),
        outcomes=outcomes,
        summaries=aggregate_by_group(outcomes) if outcomes else [],
        failures=failures,
        wall_clock=wall_clock,
        diagnostics=diagnostics,
    )
    if out_dir is not None:
        write_outputs(record, out_dir)
    return record


def write_outputs(record: ResultRecord, out_dir) -> Path:
    """results.csv, trials.csv, record.json (and diagnostics.csv when recorded)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    summaries_frame(record.summaries).to_csv(out_dir / "results.csv", index=False)
    trials = outcomes_frame(record.outcomes)
    trials.to_csv(out_dir / "trials.csv", index=False)
    with open(out_dir / "record.json", "w", encoding="utf-8") as f:
        f.write(record.to_json())
    if record.diagnostics:
        pd.DataFrame(record.diagnostics).to_csv(out_dir / "diagnostics.csv", index=False)

    logger.info("Wrote results to %s", out_dir)
    return out_dir


def record_digest(record: ResultRecord) -> str:
    """Hash of the record without wall-clock times"""
    return hashlib.sha256(canonical_json(record.to_dict(include_wall_clock=False)).encode("utf-8")).hexdigest()


def select_features(prepared: PreparedData, cfg: ExperimentConfig, seed: Optional[int] = None):
    """
    One-shot selection on a loaded design.

    Returns:
        (design, scores, results) with one SelectionResult per q
    """
    if prepared.y is None:
        raise InvalidConfig("selection needs a response")
    if seed is not None:
        cfg = replace(cfg, base_seed=seed)
    x_tilde = build_knockoffs(prepared.x, cfg.knockoff_kind, derive_rng(cfg.base_seed, "knockoff", 0),
                              extra_shrink=cfg.extra_shrink)
    design = augment(prepared.x, x_tilde, prepared.y, feature_names=prepared.names)
    scores, _ = method_scores(design, cfg, 0)
    return design, scores, filter_all_q(scores, design.p, cfg)


def print_summary(record: ResultRecord) -> None:
    """Framed console summary of an experiment"""
    print("\n" + "=" * 60)
    print("📊 EXPERIMENT SUMMARY")
    print("=" * 60)
    print(f"🔑 Config digest: {record.config_digest[:16]}")
    n_trials = len(record.wall_clock)
    print(f"✅ Successful trials: {n_trials - len(record.failures)}/{n_trials}")
    for s in record.summaries:
        print(f"  {s.method:7s} q={s.q:<5g} power={s.power:.3f} ({s.power_se:.3f}) "
              f"fdr={s.fdr:.3f} ({s.fdr_se:.3f}) stability={s.stability:.3f}")
    for f in record.failures:
        print(f"  ❌ trial {f['trial_id']}: {f['error']}")
    print("=" * 60)
