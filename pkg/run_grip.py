#!/usr/bin/env python3
"""
Command-line runner for GRIP knockoff selection experiments.

Subcommands:
    simulate   synthetic AR(1) sweep over rho and q
    inject     semi-real signal injection on a covariate CSV
    select     one-shot selection on X.csv / y.csv
    knockoffs  write a knockoff copy of X as CSV
    calibrate  print calibrated lambda range and block size
    benchmark  multi-method comparison with a combined metrics CSV
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from utils.config import default_profiles, derive_rng, load_config, override
from utils.core_linalg import ledoit_wolf
from utils.environment import check_dependencies, configure_logging, env_default
from utils.grip import calibrate_block_size, calibrate_lambda_range
from utils.ingest import load_table, preprocess_mixed
from utils.knockoffs import build_gaussian_model
from utils.main_pipeline import (
    build_knockoffs,
    bss_for,
    prepare_dataset,
    print_summary,
    run_experiment,
    run_step,
    select_features,
    trial_design,
)
from utils.metrics import outcomes_frame, summaries_frame

ALL_METHODS = ["grip2", "grip1", "grip1a", "gr", "lapa", "mald"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="GRIP knockoff feature selection")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--profile", choices=["synthetic", "semireal", "real"])
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--trials", type=int)
    common.add_argument("--q", type=float, nargs="+", help="target FDR levels")
    common.add_argument("--workers", type=int, default=int(env_default("WORKERS", 1)))
    common.add_argument("--out", default=env_default("OUT_DIR", "results"))
    common.add_argument("--method", choices=ALL_METHODS)
    common.add_argument("--knockoffs", dest="knockoff_kind", choices=["gaussian", "copula", "fixedx"])
    common.add_argument("--steps", type=int, help="total training steps T")
    common.add_argument("--x", dest="x_path", help="design CSV/XLSX")
    common.add_argument("--y", dest="y_path", help="response CSV")
    common.add_argument("--y-column")
    common.add_argument("--truth", dest="truth_path", help="file with true feature names")
    common.add_argument("--log-level")

    simulate = sub.add_parser("simulate", parents=[common], help="synthetic sweep over rho and q")
    simulate.add_argument("--rho", type=float, nargs="+", default=None)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--p", type=int)

    sub.add_parser("inject", parents=[common], help="semi-real injection on a covariate CSV")
    sub.add_parser("select", parents=[common], help="one-shot selection on X.csv / y.csv")

    knock = sub.add_parser("knockoffs", parents=[common], help="write knockoffs of X as CSV")
    knock.add_argument("--save-model", action="store_true", help="also save the Gaussian model snapshot")

    sub.add_parser("calibrate", parents=[common], help="calibrate lambda range and block size")

    bench = sub.add_parser("benchmark", parents=[common], help="multi-method comparison")
    bench.add_argument("--methods", nargs="+", choices=ALL_METHODS, default=ALL_METHODS)
    return parser


def resolve_config(args, default_profile: str):
    """Config file (or preset) with command-line overrides applied"""
    if args.config:
        cfg = load_config(args.config)
        if args.profile and args.profile != cfg.profile:
            print(f"⚠️ --profile {args.profile} ignored; {args.config} sets profile {cfg.profile}")
    else:
        cfg = default_profiles()[args.profile or default_profile]

    overrides = {}
    for key in ("method", "knockoff_kind", "trials"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.q:
        overrides["q_grid"] = sorted(args.q)
    if args.steps is not None:
        overrides["bss"] = {"total_steps": args.steps}
    data = {k: getattr(args, k) for k in ("x_path", "y_path", "y_column", "truth_path") if getattr(args, k)}
    if data:
        overrides["data"] = data
    if getattr(args, "n", None) or getattr(args, "p", None):
        overrides["synthetic"] = {k: getattr(args, k) for k in ("n", "p") if getattr(args, k)}
    return override(cfg, overrides)


def cmd_simulate(args) -> int:
    cfg = resolve_config(args, "synthetic")
    rhos = args.rho if args.rho else [cfg.synthetic.rho]
    out = Path(args.out)
    frames = []
    for rho in rhos:
        cfg_rho = override(cfg, {"synthetic": {"rho": rho}})
        record, ok = run_step(f"Synthetic experiment rho={rho}", run_experiment, cfg_rho,
                              workers=args.workers, out_dir=out / f"rho_{rho:g}")
        if not ok:
            return 1
        print_summary(record)
        frame = summaries_frame(record.summaries)
        frame.insert(0, "rho", rho)
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(out / "results.csv", index=False)
    print(f"📁 Sweep results saved to {out / 'results.csv'}")
    return 0


def cmd_inject(args) -> int:
    cfg = resolve_config(args, "semireal")
    record, ok = run_step("Semi-real injection experiment", run_experiment, cfg,
                          workers=args.workers, out_dir=args.out)
    if ok:
        print_summary(record)
    return 0 if ok else 1


def cmd_select(args) -> int:
    cfg = resolve_config(args, "real")
    prepared, ok = run_step("Loading data", prepare_dataset, cfg)
    if not ok:
        return 1
    result, ok = run_step(f"Selecting with {cfg.method} on {cfg.knockoff_kind} knockoffs",
                          select_features, prepared, cfg)
    if not ok:
        return 1
    design, scores, results = result

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = [r.to_json(design.feature_names) for r in results]
    with open(out / "selection.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    p = design.p
    pd.DataFrame({
        "feature": design.feature_names,
        "score": scores[:p],
        "knockoff_score": scores[p:],
        "w": scores[:p] - scores[p:],
    }).to_csv(out / "scores.csv", index=False)

    print("\n" + "=" * 60)
    for entry in payload:
        print(f"🎯 q={entry['q']}: {len(entry['selected'])} selected")
        for name in entry["selected_names"][:20]:
            print(f"   - {name}")
    print("=" * 60)
    print(f"📁 Selection saved to {out / 'selection.json'}")
    return 0


def cmd_knockoffs(args) -> int:
    cfg = resolve_config(args, "real")
    if not cfg.data.x_path:
        print("❌ --x is required")
        return 1
    table = load_table(cfg.data.x_path, na_values=cfg.data.na_values)
    if cfg.data.preprocess:
        x, names = preprocess_mixed(table)
    else:
        x, names = table.frame.to_numpy(dtype=np.float64), table.names

    rng = derive_rng(cfg.base_seed, "knockoff", 0)
    x_tilde, ok = run_step(f"Building {cfg.knockoff_kind} knockoffs", build_knockoffs, x,
                           cfg.knockoff_kind, rng, extra_shrink=cfg.extra_shrink)
    if not ok:
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(x_tilde, columns=[f"{n}_tilde" for n in names]).to_csv(out / "knockoffs.csv", index=False)
    print(f"📁 Knockoffs saved to {out / 'knockoffs.csv'}")

    if args.save_model:
        if cfg.knockoff_kind != "gaussian":
            print("⚠️ Model snapshots exist only for gaussian knockoffs")
        else:
            sigma_hat, _ = ledoit_wolf(x - x.mean(axis=0), cfg.extra_shrink)
            path = build_gaussian_model(sigma_hat).save(out / "knockoff_model.json")
            print(f"📁 Model snapshot saved to {path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args, "synthetic")
    prepared = prepare_dataset(cfg)
    design, _ = trial_design(cfg, 0, prepared)
    bss = bss_for(cfg, design.p)
    cal = cfg.calibration
    rng = derive_rng(cfg.base_seed, "eval", 0)

    lam_range, ok = run_step("Calibrating lambda range", calibrate_lambda_range, design, bss.net,
                             cal.r_min, cal.r_max, cal.warmup, rng)
    if not ok:
        return 1
    bss = replace(bss, prior=replace(bss.prior, lambda_min=lam_range[0], lambda_max=lam_range[1]))
    block, ok = run_step("Calibrating block size", calibrate_block_size, design, bss,
                         cal.delta, tuple(cal.candidates), rng)
    if not ok:
        return 1

    print("\n" + "=" * 60)
    print(f"📏 lambda range: [{lam_range[0]:.4e}, {lam_range[1]:.4e}]")
    print(f"🧱 block size M: {block}")
    print("=" * 60)
    return 0


def cmd_benchmark(args) -> int:
    cfg = resolve_config(args, "synthetic")
    out = Path(args.out)
    prepared = prepare_dataset(cfg)
    summaries, outcomes = [], []
    for method in args.methods:
        cfg_m = override(cfg, {"method": method})
        record, ok = run_step(f"Benchmark {method}", run_experiment, cfg_m, workers=args.workers,
                              out_dir=out / method, prepared=prepared)
        if not ok:
            continue
        summaries.extend(record.summaries)
        outcomes.extend(record.outcomes)
        print_summary(record)

    out.mkdir(parents=True, exist_ok=True)
    summaries_frame(summaries).to_csv(out / "results.csv", index=False)
    outcomes_frame(outcomes).to_csv(out / "trials.csv", index=False)
    print(f"📁 Benchmark results saved to {out / 'results.csv'}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "inject": cmd_inject,
    "select": cmd_select,
    "knockoffs": cmd_knockoffs,
    "calibrate": cmd_calibrate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if check_dependencies():
        return 1

    print("=" * 60)
    print(f"🎯 GRIP KNOCKOFF SELECTION: {args.command.upper()}")
    print("=" * 60)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
