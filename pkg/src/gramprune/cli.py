"""Command-line driver for the pruning pipeline.

Feature-map batches are read from ``<features>/<layer_id>.in.fmap`` and
``<features>/<layer_id>.out.fmap``; results, mask plans and reports are
written as JSON/CSV documents. Exit codes: 0 success, 1 error, 2 infeasible
budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .budget import (
    LayerBudget,
    PruneResult,
    adaptive_search,
    expand_budget,
    layer_flops,
    layer_params,
    model_totals,
)
from .formats import ModelManifest, parse_manifest, read_tensor
from .gram import FeatureBatch, KernelConfig, build_design
from .maskplan import MaskPlan, build_plan
from .solver import GraphPenalty, SolverConfig, TreePenalty
from .structure import build_graph, build_tree, node_weights

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["sglp", "stlp"], default="stlp",
                   help="graph-fused (sglp) or tree-guided (stlp) penalty")
    p.add_argument("--kernel", choices=["linear", "gaussian", "sigmoid", "laplacian"],
                   default="laplacian")
    p.add_argument("--sigma", type=float, default=None,
                   help="kernel bandwidth; default: median heuristic per channel")
    p.add_argument("--th", type=float, default=0.6,
                   help="correlation threshold for the fusion graph")
    p.add_argument("--mu", type=float, default=None,
                   help="fusion weight; default 0.5 * lambda at each probe")
    p.add_argument("--tree-height", default="dissimilarity",
                   help="node height h: 'dissimilarity' or a constant in (0,1)")
    p.add_argument("--metric", choices=["params", "flops", "channels"],
                   default="params")
    p.add_argument("--keep", type=float, default=0.5,
                   help="global retained fraction target")
    p.add_argument("--band", type=float, default=0.05,
                   help="half-width of the acceptable keep band")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--temperature", default="auto",
                   help="smoothing temperature (float or 'auto')")
    p.add_argument("--seed", type=int, default=0,
                   help="recorded in outputs; the engine itself is deterministic")
    p.add_argument("--jobs", type=int, default=1,
                   help="layer-level parallelism for prune-model")


def _solver_config(args) -> SolverConfig:
    temp = args.temperature
    if temp != "auto":
        temp = float(temp)
    return SolverConfig(tol=args.tol, max_iter=args.max_iter,
                        smoothing_temperature=temp)


def _kernel_config(args) -> KernelConfig:
    return KernelConfig(kind=args.kernel, sigma=args.sigma)


def _load_layer_features(features: Path, layer_id: str):
    fin = features / f"{layer_id}.in.fmap"
    fout = features / f"{layer_id}.out.fmap"
    for p in (fin, fout):
        if not p.exists():
            raise FileNotFoundError(f"missing feature file: {p}")
    return (FeatureBatch.from_tensor(read_tensor(fin)),
            FeatureBatch.from_tensor(read_tensor(fout)))


def _penalty_builder(args, y_cols):
    if args.method == "sglp":
        graph = build_graph(y_cols, th=args.th)

        def build(lam):
            mu = 0.5 * lam if args.mu is None else args.mu
            return GraphPenalty(graph=graph, lam=lam, mu=mu)

        return build
    height = args.tree_height
    if height != "dissimilarity":
        height = float(height)
    tree = build_tree(y_cols, node_height=height)
    weights = node_weights(tree)

    def build(lam):
        return TreePenalty(tree=tree, weights=weights, lam=lam)

    return build


def _prune_one_layer(args, manifest: ModelManifest, layer_id: str,
                     budget: LayerBudget) -> PruneResult:
    spec = manifest.layer(layer_id)
    x_batch, y_batch = _load_layer_features(Path(args.features), layer_id)
    if x_batch.channels != spec.in_channels or y_batch.channels != spec.out_channels:
        raise ValueError(
            f"{layer_id}: feature channels ({x_batch.channels} in, "
            f"{y_batch.channels} out) disagree with the manifest "
            f"({spec.in_channels} in, {spec.out_channels} out)"
        )
    design = build_design(x_batch, y_batch, _kernel_config(args))
    builder = _penalty_builder(args, design.y_cols)
    return adaptive_search(design.x_cols, design.y_cols, builder, budget,
                           _solver_config(args), layer_spec=spec,
                           layer_id=layer_id)


def _write_result(result: PruneResult, out_dir: Path, args) -> None:
    doc = result.to_dict()
    doc["seed"] = args.seed
    doc["method"] = args.method
    path = out_dir / f"{result.layer_id}.result.json"
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _write_trace(result: PruneResult, solution_trace, survivor_trace,
                 out_dir: Path) -> None:
    path = out_dir / f"{result.layer_id}.trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "survivors"])
        for i, (obj, surv) in enumerate(zip(solution_trace, survivor_trace)):
            w.writerow([i, repr(obj), surv])


def cmd_prune_layer(args) -> int:
    manifest = parse_manifest(args.manifest)
    if args.layer not in manifest:
        raise ValueError(f"layer {args.layer!r} not in manifest")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    budget = LayerBudget(
        e_lower=max(args.keep - args.band, 1e-6),
        e_upper=min(args.keep + args.band, 1.0),
        metric=args.metric,
    )
    spec = manifest.layer(args.layer)
    x_batch, y_batch = _load_layer_features(Path(args.features), args.layer)
    design = build_design(x_batch, y_batch, _kernel_config(args))
    builder = _penalty_builder(args, design.y_cols)
    cfg = _solver_config(args)
    # re-solve at the chosen lambda only to export the full trace
    from .solver import LassoProblem, solve_spg

    result = adaptive_search(design.x_cols, design.y_cols, builder, budget,
                             cfg, layer_spec=spec, layer_id=args.layer)
    solution = solve_spg(
        LassoProblem(design.x_cols, design.y_cols, builder(result.lambda_star)), cfg
    )
    _write_result(result, out_dir, args)
    _write_trace(result, solution.objective_trace, solution.survivor_trace, out_dir)
    print(f"{args.layer}: kept {int(result.survivors.sum())}/{len(result.survivors)} "
          f"channels (fraction {result.retained_fraction:.4f}, "
          f"lambda {result.lambda_star:.6g}, feasible={result.feasible})")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


_REPORT_COLUMNS = ["layer_id", "orig_params", "kept_params", "orig_flops",
                   "kept_flops", "retained_fraction", "lambda_star",
                   "iterations", "feasible"]


def _report_rows(manifest: ModelManifest, plan: MaskPlan,
                 results: dict[str, dict]) -> list[dict]:
    rows = []
    for spec in manifest.layers:
        mask = plan.masks.get(spec.id)
        kept_in = int(np.sum(mask.in_keep)) if mask else spec.in_channels
        kept_out = int(np.sum(mask.out_keep)) if mask else spec.out_channels
        res = results.get(spec.id, {})
        rows.append({
            "layer_id": spec.id,
            "orig_params": layer_params(spec, spec.in_channels, spec.out_channels),
            "kept_params": layer_params(spec, kept_in, kept_out),
            "orig_flops": layer_flops(spec, spec.in_channels, spec.out_channels),
            "kept_flops": layer_flops(spec, kept_in, kept_out),
            "retained_fraction": res.get("retained_fraction",
                                         kept_out / spec.out_channels),
            "lambda_star": res.get("lambda_star", ""),
            "iterations": res.get("solve_iterations", ""),
            "feasible": res.get("feasible", ""),
        })
    return rows


def _write_report(manifest: ModelManifest, plan: MaskPlan,
                  results: dict[str, dict], out_dir: Path) -> str:
    rows = _report_rows(manifest, plan, results)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_REPORT_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    full = model_totals(manifest)
    kept = model_totals(manifest, plan)
    p_drop = 100.0 * (1.0 - kept["params"] / full["params"])
    f_drop = 100.0 * (1.0 - kept["flops"] / full["flops"])
    lines = [
        f"model: {manifest.model_name}",
        f"params: {full['params']} -> {kept['params']}  (Params ↓ {p_drop:.1f}%)",
        f"flops:  {full['flops']} -> {kept['flops']}  (FLOPs ↓ {f_drop:.1f}%)",
    ]
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    return text


def cmd_prune_model(args) -> int:
    manifest = parse_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = None
    if args.budget_config:
        with open(args.budget_config) as fh:
            config = json.load(fh)
    budgets = expand_budget(manifest, config, global_keep=args.keep,
                            band=args.band, metric=args.metric)
    targets = [lid for lid, b in budgets.items() if b is not None]

    errors: list[str] = []
    results: dict[str, PruneResult] = {}

    def run(lid: str):
        return lid, _prune_one_layer(args, manifest, lid, budgets[lid])

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        for future in [pool.submit(run, lid) for lid in targets]:
            try:
                lid, result = future.result()
                results[lid] = result
            except Exception as exc:  # collected; partial plans are never written
                errors.append(str(exc))

    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR

    selections = {lid: r.survivors for lid, r in results.items()}
    plan = build_plan(manifest, selections)
    (out_dir / "maskplan.json").write_text(plan.dumps() + "\n")
    result_docs = {lid: r.to_dict() for lid, r in results.items()}
    meta = {"seed": args.seed, "method": args.method, "version": __version__,
            "results": result_docs}
    (out_dir / "results.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    text = _write_report(manifest, plan, result_docs, out_dir)
    print(text, end="")
    infeasible = [lid for lid, r in results.items() if not r.feasible]
    if infeasible:
        print(f"infeasible budgets: {', '.join(sorted(infeasible))}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_report(args) -> int:
    manifest = parse_manifest(args.manifest)
    plan = MaskPlan.loads(Path(args.plan).read_text())
    results: dict[str, dict] = {}
    if args.results:
        doc = json.loads(Path(args.results).read_text())
        results = doc.get("results", {})
    rows = _report_rows(manifest, plan, results)
    full = model_totals(manifest)
    kept = model_totals(manifest, plan)
    print(f"model: {manifest.model_name}")
    print(f"{'layer':24s} {'kept/out':>12s} {'fraction':>9s}")
    for spec in manifest.layers:
        mask = plan.masks.get(spec.id)
        kept_out = int(np.sum(mask.out_keep)) if mask else spec.out_channels
        frac = kept_out / spec.out_channels
        print(f"{spec.id:24s} {kept_out:5d}/{spec.out_channels:<6d} {frac:9.4f}")
    p_drop = 100.0 * (1.0 - kept["params"] / full["params"])
    f_drop = 100.0 * (1.0 - kept["flops"] / full["flops"])
    print(f"params: {full['params']} -> {kept['params']}  (Params ↓ {p_drop:.1f}%)")
    print(f"flops:  {full['flops']} -> {kept['flops']}  (FLOPs ↓ {f_drop:.1f}%)")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=_REPORT_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramprune",
        description="Channel pruning via structured-lasso regression on Gram features",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_layer = sub.add_parser("prune-layer", help="prune a single layer")
    p_layer.add_argument("--features", required=True)
    p_layer.add_argument("--manifest", required=True)
    p_layer.add_argument("--layer", required=True)
    p_layer.add_argument("--out", required=True)
    _add_common_flags(p_layer)
    p_layer.set_defaults(func=cmd_prune_layer)

    p_model = sub.add_parser("prune-model", help="prune every budgeted layer")
    p_model.add_argument("--features", required=True)
    p_model.add_argument("--manifest", required=True)
    p_model.add_argument("--out", required=True)
    p_model.add_argument("--budget-config", default=None,
                         help="JSON budget document with overrides/skip list")
    _add_common_flags(p_model)
    p_model.set_defaults(func=cmd_prune_model)

    p_report = sub.add_parser("report", help="summarize a mask plan")
    p_report.add_argument("--manifest", required=True)
    p_report.add_argument("--plan", required=True)
    p_report.add_argument("--results", default=None)
    p_report.add_argument("--csv", default=None)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "--debug" in (argv or sys.argv):
            traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
