#!/usr/bin/env python3
"""
Tests for the trial runner, the experiment harness and the command line
"""
import json
import sys

import numpy as np
import pandas as pd
import pytest
import yaml

import run_grip
from utils.baselines import single_shot_group_lasso
from utils.config import default_profiles, derive_rng, override
from utils.errors import TrialFailure
from utils.grip import Schedule
from utils.main_pipeline import (
    PreparedData,
    bss_for,
    method_scores,
    prepare_dataset,
    record_digest,
    run_experiment,
    run_trial,
    select_features,
    trial_design,
)
from utils.neuralnet import init_params

TINY = {
    "trials": 2,
    "synthetic": {"n": 200, "p": 10, "snr": 1.0},
    "bss": {"total_steps": 50, "block_size": 25, "net": {"depth": 1, "width": 8, "batch_size": 64}},
}


def _tiny(**extra):
    return override(override(default_profiles()["synthetic"], TINY), extra)


def test_run_trial_is_deterministic():
    cfg = _tiny()
    first, second = run_trial(cfg, 1), run_trial(cfg, 1)
    np.testing.assert_array_equal(first.scores, second.scores)
    assert [o.selected for o in first.outcomes] == [o.selected for o in second.outcomes]
    assert [o.q for o in first.outcomes] == [0.05, 0.1, 0.2]
    assert first.outcomes[0].truth == [0, 5]


def test_knockoff_stream_does_not_touch_design():
    gaussian, _ = trial_design(_tiny(), 0, None)
    copula, _ = trial_design(_tiny(knockoff_kind="copula"), 0, None)
    np.testing.assert_array_equal(gaussian.x, copula.x)
    np.testing.assert_array_equal(gaussian.y, copula.y)
    assert not np.array_equal(gaussian.x_tilde, copula.x_tilde)


def test_trials_resample_the_design():
    first, _ = trial_design(_tiny(), 0, None)
    second, _ = trial_design(_tiny(), 1, None)
    assert not np.array_equal(first.x, second.x)


def test_method_wiring():
    cfg = _tiny(method="gr")
    assert bss_for(cfg, 10).prior.schedule == Schedule.FIXED
    assert bss_for(cfg, 10).net.input_dim == 20
    for method in ("lapa", "mald", "grip1"):
        result = run_trial(_tiny(method=method, mald_train_steps=20), 0)
        assert result.scores.shape == (20,)


def test_failed_trials_are_recorded():
    cfg = _tiny(knockoff_kind="fixedx", synthetic={"n": 15})
    with pytest.raises(TrialFailure) as info:
        run_trial(cfg, 0)
    assert info.value.trial_id == 0

    record = run_experiment(cfg, progress=False)
    assert len(record.failures) == 2
    assert record.summaries == []
    assert "InsufficientRows" in record.failures[0]["error"]


def test_experiment_outputs_and_determinism(tmp_path):
    cfg = _tiny()
    first = run_experiment(cfg, out_dir=tmp_path / "a", progress=False)
    second = run_experiment(cfg, out_dir=tmp_path / "b", progress=False)

    assert len(first.summaries) == 3
    for name in ("results.csv", "trials.csv", "record.json"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert record_digest(first) == record_digest(second)


def test_parallel_matches_serial():
    cfg = _tiny()
    serial = run_experiment(cfg, workers=1, progress=False)
    parallel = run_experiment(cfg, workers=2, progress=False)
    assert record_digest(serial) == record_digest(parallel)


def _write_binary_stand_in(tmp_path, n=800, p=150, seed=0):
    rng = np.random.default_rng(seed)
    x = (rng.random((n, p)) < 0.3).astype(int)
    beta = np.zeros(p)
    beta[:10] = 1.0
    y = np.exp(0.3 * (x @ beta) + 0.3 * rng.standard_normal(n))
    pd.DataFrame(x, columns=[f"m{j}" for j in range(p)]).to_csv(tmp_path / "X.csv", index=False)
    pd.DataFrame({"resistance": y}).to_csv(tmp_path / "y.csv", index=False)
    (tmp_path / "truth.txt").write_text("\n".join(f"m{j}" for j in range(10)))
    return tmp_path / "X.csv", tmp_path / "y.csv", tmp_path / "truth.txt"


def test_real_pipeline_on_binary_stand_in(tmp_path):
    x_path, y_path, truth_path = _write_binary_stand_in(tmp_path)
    cfg = override(default_profiles()["real"], {
        "bss": {"total_steps": 100},
        "data": {"x_path": str(x_path), "y_path": str(y_path), "truth_path": str(truth_path)},
    })
    prepared = prepare_dataset(cfg)
    assert prepared.x.shape == (800, 150)
    assert prepared.truth == list(range(10))

    design, scores, results = select_features(prepared, cfg)
    assert design.p == 150
    assert scores.shape == (300,)
    assert len(results) == 1
    result = results[0]
    assert result.stats.q == 0.05
    assert set(result.selected.tolist()) <= set(range(150))
    assert np.all(result.stats.w[result.selected] >= result.threshold)


def test_cli_select(tmp_path):
    x_path, y_path, _ = _write_binary_stand_in(tmp_path)
    out = tmp_path / "out"
    code = run_grip.main(["select", "--profile", "real", "--x", str(x_path), "--y", str(y_path),
                          "--steps", "100", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "selection.json").read_text())
    assert payload[0]["q"] == 0.05
    scores = pd.read_csv(out / "scores.csv")
    assert len(scores) == 150
    np.testing.assert_allclose(scores["w"], scores["score"] - scores["knockoff_score"])


def test_cli_knockoffs_with_model_snapshot(tmp_path):
    x_path, _, _ = _write_binary_stand_in(tmp_path, n=200, p=12)
    out = tmp_path / "out"
    code = run_grip.main(["knockoffs", "--profile", "real", "--knockoffs", "gaussian", "--x", str(x_path),
                          "--save-model", "--out", str(out)])
    assert code == 0
    knock = pd.read_csv(out / "knockoffs.csv")
    assert knock.shape == (200, 12)
    assert knock.columns[0] == "m0_tilde"
    assert (out / "knockoff_model.json").exists()


def _tiny_config_file(tmp_path):
    payload = dict(TINY, profile="synthetic", trials=1,
                   calibration={"warmup": 20, "candidates": [5, 10]})
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(payload))
    return path


def test_cli_simulate_rho_sweep(tmp_path):
    out = tmp_path / "sweep"
    code = run_grip.main(["simulate", "--config", str(_tiny_config_file(tmp_path)), "--rho", "0.0", "0.4",
                          "--q", "0.1", "0.2", "--out", str(out)])
    assert code == 0
    frame = pd.read_csv(out / "results.csv")
    assert sorted(frame["rho"].unique().tolist()) == [0.0, 0.4]
    assert len(frame) == 4
    assert (out / "rho_0.4" / "record.json").exists()


def test_cli_benchmark_and_calibrate(tmp_path):
    config = _tiny_config_file(tmp_path)
    out = tmp_path / "bench"
    assert run_grip.main(["benchmark", "--config", str(config), "--methods", "gr", "lapa",
                          "--out", str(out)]) == 0
    frame = pd.read_csv(out / "results.csv")
    assert sorted(frame["method"].unique().tolist()) == ["gr", "lapa"]
    assert run_grip.main(["calibrate", "--config", str(config)]) == 0

def test_synthetic_seed_fields_select_streams():
    base, _ = trial_design(_tiny(), 0, None)
    design, _ = trial_design(_tiny(synthetic={"design_seed": 7}), 0, None)
    beta, _ = trial_design(_tiny(synthetic={"beta_seed": 7}), 0, None)
    noise, _ = trial_design(_tiny(synthetic={"noise_seed": 7}), 0, None)

    assert not np.array_equal(design.x, base.x)
    for changed in (beta, noise):
        np.testing.assert_array_equal(changed.x, base.x)
        assert not np.array_equal(changed.y, base.y)


def test_injection_seed_selects_support():
    rng = np.random.default_rng(0)
    prepared = PreparedData(x=rng.standard_normal((100, 30)), names=[f"c{j}" for j in range(30)])
    cfg = override(default_profiles()["semireal"], {"injection": {"support_frac": 0.2}})
    supports = {tuple(trial_design(override(cfg, {"injection": {"seed": s}}), 0, prepared)[1]) for s in range(4)}
    assert len(supports) > 1


def test_gr_uses_single_shot_group_lasso():
    cfg = _tiny(method="gr")
    design, _ = trial_design(cfg, 0, None)
    scores, _ = method_scores(design, cfg, 0)
    bss = bss_for(cfg, design.p)
    expected = single_shot_group_lasso(design, bss, derive_rng(cfg.base_seed, "schedule", 0),
                                       params=init_params(bss.net, derive_rng(cfg.base_seed, "init", 0)))
    np.testing.assert_array_equal(scores, expected.s_hat)
    assert len(set(expected.regimes)) == 1



if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
