"""End-to-end demo: train a toy CNN, prune it through the engine, finetune.

The pruning engine is consumed strictly through its public surfaces: the
FMAP/manifest files, the ``gramprune`` command line, and the mask-plan
document it writes.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from pathlib import Path

import torch

from .data import stratified_batch, synthetic_dataset
from .extract import extract_features
from .finetune import evaluate, finetune_smoke, train
from .models import ToyConvNet
from .surgery import apply_masks, count_parameters, load_plan


def run_engine(features: Path, manifest: Path, out: Path, keep: float,
               band: float, extra: list[str] | None = None) -> int:
    cfg = out / "budget.json"
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_text(json.dumps({"metric": "params", "global_keep": keep,
                               "band": band, "skip_layers": []}))
    cmd = [sys.executable, "-m", "gramprune", "prune-model",
           "--features", str(features), "--manifest", str(manifest),
           "--out", str(out), "--budget-config", str(cfg)]
    cmd += extra or []
    proc = subprocess.run(cmd, capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    sys.stderr.write(proc.stderr)
    return proc.returncode


def kept_params_from_report(report_csv: Path) -> int:
    total = 0
    with open(report_csv) as fh:
        for row in csv.DictReader(fh):
            total += int(row["kept_params"])
    return total


def cmd_demo(args) -> int:
    torch.manual_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_x, train_y = synthetic_dataset(args.train_samples, seed=args.seed)
    test_x, test_y = synthetic_dataset(args.test_samples, seed=args.seed + 1)

    model = ToyConvNet()
    print("training baseline...")
    train(model, train_x, train_y, epochs=args.epochs, seed=args.seed)
    baseline = evaluate(model, test_x, test_y)
    print(f"baseline accuracy: {baseline:.4f}  params: {count_parameters(model)}")

    feat_dir = out / "features"
    batch = stratified_batch(train_x, train_y, args.bs, seed=args.seed)
    traced = extract_features(model, batch, feat_dir, model_name="toy-convnet")

    engine_out = out / "engine"
    # linear kernel keeps channel-energy differences visible and a constant
    # tree height keeps the leaf terms alive on highly correlated channels
    rc = run_engine(feat_dir, feat_dir / "manifest.json", engine_out,
                    args.keep, args.band,
                    ["--method", "stlp", "--kernel", "linear",
                     "--tree-height", "0.9",
                     "--tol", "1e-7", "--max-iter", str(args.solver_iters),
                     "--temperature", "1e-3", "--seed", str(args.seed)])
    if rc == 1:
        print("engine failed", file=sys.stderr)
        return 1

    plan = load_plan(engine_out / "maskplan.json")
    pruned = apply_masks(model, plan, traced)
    recount = count_parameters(pruned)
    reported = kept_params_from_report(engine_out / "report.csv")
    print(f"pruned params: {recount} (engine reported {reported})")
    if recount != reported:
        print("recount mismatch!", file=sys.stderr)
        return 1

    result = finetune_smoke(pruned, (train_x, train_y), (test_x, test_y),
                            epochs=args.finetune_epochs, seed=args.seed)
    print(f"pruned accuracy before finetune: {result['accuracy_before']:.4f}")
    print(f"pruned accuracy after finetune:  {result['accuracy_after']:.4f}")
    drop = baseline - result["accuracy_after"]
    print(f"accuracy drop vs baseline: {drop * 100:.2f}%")
    summary = {
        "baseline_accuracy": baseline,
        "pruned_accuracy": result["accuracy_after"],
        "params_before": count_parameters(model),
        "params_after": recount,
        "engine_exit_code": rc,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1,
                                                 sort_keys=True) + "\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gramprune-adapter")
    sub = parser.add_subparsers(dest="command", required=True)
    demo = sub.add_parser("demo", help="full extract/prune/surgery/finetune loop")
    demo.add_argument("--out", required=True)
    demo.add_argument("--keep", type=float, default=0.5)
    demo.add_argument("--band", type=float, default=0.1)
    demo.add_argument("--bs", type=int, default=128)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--epochs", type=int, default=4)
    demo.add_argument("--finetune-epochs", type=int, default=3)
    demo.add_argument("--train-samples", type=int, default=1200)
    demo.add_argument("--test-samples", type=int, default=600)
    demo.add_argument("--solver-iters", type=int, default=600)
    demo.set_defaults(func=cmd_demo)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
