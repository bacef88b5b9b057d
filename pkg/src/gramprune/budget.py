"""Parameter/FLOPs accounting and the adaptive per-layer sparsity search.

Accounting counts one multiply-accumulate as one FLOP, plus one FLOP per
output element for a bias add and per element combined at an add-junction.
Manifests describe inference-time (normalization-folded) convolutions, so
their bias flags carry the folded affine term; under this convention the
totals of the standard reference architectures match the published baselines
within 1%.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .formats import LayerSpec, ModelManifest
from .exceptions import MaskConsistencyError
from .solver import (
    LassoProblem,
    Penalty,
    SolverConfig,
    nnz_columns,
    solve_spg,
)

METRICS = ("params", "flops", "channels")


def layer_params(spec: LayerSpec, kept_in: int, kept_out: int) -> int:
    """Parameter count of one layer at the given kept channel counts."""
    _check_kept(spec, kept_in, kept_out)
    if spec.kind == "conv":
        p = spec.kernel_h * spec.kernel_w * kept_in * kept_out
        return p + (kept_out if spec.has_bias else 0)
    if spec.kind == "linear":
        return kept_in * kept_out + (kept_out if spec.has_bias else 0)
    return 0


def layer_flops(spec: LayerSpec, kept_in: int, kept_out: int) -> int:
    """FLOPs of one layer (1 MAC = 1 FLOP; elementwise ops cost 1 each)."""
    _check_kept(spec, kept_in, kept_out)
    spatial = spec.out_spatial_h * spec.out_spatial_w
    if spec.kind == "conv":
        macs = spatial * spec.kernel_h * spec.kernel_w * kept_in * kept_out
        return macs + (spatial * kept_out if spec.has_bias else 0)
    if spec.kind == "linear":
        return kept_in * kept_out + (kept_out if spec.has_bias else 0)
    if spec.kind == "add-junction":
        return spatial * kept_out * max(len(spec.predecessors) - 1, 1)
    return 0  # concat moves data, no arithmetic


def _check_kept(spec: LayerSpec, kept_in: int, kept_out: int) -> None:
    if kept_in < 0 or kept_out < 0:
        raise ValueError("kept counts must be >= 0")
    if kept_in > spec.in_channels or kept_out > spec.out_channels:
        raise ValueError(
            f"layer {spec.id!r}: kept ({kept_in}, {kept_out}) exceeds declared "
            f"({spec.in_channels}, {spec.out_channels})"
        )


def model_totals(manifest: ModelManifest, plan=None) -> dict[str, int]:
    """Summed params/FLOPs, honoring a mask plan when given."""
    params = 0
    flops = 0
    for spec in manifest.layers:
        if plan is None:
            kept_in, kept_out = spec.in_channels, spec.out_channels
        else:
            mask = plan.masks.get(spec.id)
            if mask is None:
                kept_in, kept_out = spec.in_channels, spec.out_channels
            else:
                if len(mask.out_keep) != spec.out_channels or len(mask.in_keep) != spec.in_channels:
                    raise MaskConsistencyError(
                        f"mask for {spec.id!r} does not match declared channel counts"
                    )
                kept_in = int(np.sum(mask.in_keep))
                kept_out = int(np.sum(mask.out_keep))
        params += layer_params(spec, kept_in, kept_out)
        flops += layer_flops(spec, kept_in, kept_out)
    return {"params": params, "flops": flops}


@dataclass(frozen=True)
class LayerBudget:
    """Target band of retained fraction for one layer's search."""

    e_lower: float
    e_upper: float
    metric: str = "channels"
    lambda_bracket: tuple[float, float] | None = None  # log-space; None derives from lambda_max
    max_search_iter: int = 60

    def __post_init__(self) -> None:
        if not 0 < self.e_lower < self.e_upper <= 1:
            raise ValueError("need 0 < e_lower < e_upper <= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.lambda_bracket is not None and not self.lambda_bracket[0] < self.lambda_bracket[1]:
            raise ValueError("lambda bracket must be increasing")
        if self.max_search_iter < 1:
            raise ValueError("max_search_iter must be >= 1")


@dataclass
class PruneResult:
    layer_id: str
    lambda_star: float
    survivors: np.ndarray
    retained_fraction: float
    solve_iterations: int
    feasible: bool
    beta: np.ndarray
    probes: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "layer_id": self.layer_id,
            "lambda_star": self.lambda_star,
            "survivors": [int(v) for v in self.survivors],
            "retained_fraction": self.retained_fraction,
            "solve_iterations": self.solve_iterations,
            "feasible": self.feasible,
            "probes": self.probes,
            "converged": self.converged,
        }


def metric_fraction(spec: LayerSpec | None, kept_out: int, out_channels: int,
                    metric: str) -> float:
    """Retained fraction of one layer under a metric, inputs unpruned.

    Layer-wise searches run before cross-layer reconciliation, so the input
    side stays at its declared width here.
    """
    if metric == "channels" or spec is None:
        return kept_out / out_channels
    if metric == "params":
        full = layer_params(spec, spec.in_channels, spec.out_channels)
        kept = layer_params(spec, spec.in_channels, kept_out)
    else:
        full = layer_flops(spec, spec.in_channels, spec.out_channels)
        kept = layer_flops(spec, spec.in_channels, kept_out)
    return kept / full if full else 0.0


def lambda_max_for(x: np.ndarray, y: np.ndarray) -> float:
    """Smallest l1 weight that zeroes a plain lasso: max |X'Y|."""
    v = float(np.max(np.abs(x.T @ y)))
    return v if v > 0 else 1.0


def adaptive_search(
    x: np.ndarray,
    y: np.ndarray,
    penalty_builder: Callable[[float], Penalty],
    budget: LayerBudget,
    solver_cfg: SolverConfig = SolverConfig(),
    layer_spec: LayerSpec | None = None,
    layer_id: str = "",
) -> PruneResult:
    """Bisect lambda (in log space) until the retained fraction lands in band.

    The bracket holds logs of the true regularization weight; each probe is
    ``log(0.5 * (exp(lo) + exp(hi)))``, which always lies strictly inside the
    bracket. A fraction below the band means the probe was too harsh and
    shrinks the upper end; above the band raises the lower end. The search
    declares infeasibility when the bracket collapses below 1e-9 or the probe
    budget runs out, returning the closest result seen.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out_channels = y.shape[1]
    lam_max = lambda_max_for(x, y)
    if budget.lambda_bracket is not None:
        lo, hi = budget.lambda_bracket
    else:
        lo, hi = math.log(1e-6 * lam_max), math.log(10.0 * lam_max)

    best: PruneResult | None = None
    best_dist = math.inf
    fallback: PruneResult | None = None  # closest overall, even if unusable
    fallback_dist = math.inf
    probes = 0
    while probes < budget.max_search_iter:
        probe_log = math.log(0.5 * (math.exp(lo) + math.exp(hi)))
        lam = math.exp(probe_log)
        probes += 1
        solution = solve_spg(LassoProblem(x, y, penalty_builder(lam)), solver_cfg)
        eps = solver_cfg.resolve_zero_eps(solution.beta)
        kept, flags = nnz_columns(solution.beta, eps)
        fraction = metric_fraction(layer_spec, kept, out_channels, budget.metric)
        result = PruneResult(
            layer_id=layer_id,
            lambda_star=lam,
            survivors=flags,
            retained_fraction=fraction,
            solve_iterations=solution.iterations,
            feasible=budget.e_lower <= fraction <= budget.e_upper,
            beta=solution.beta,
            probes=probes,
            converged=solution.converged,
        )
        dist = max(budget.e_lower - fraction, fraction - budget.e_upper, 0.0)
        if dist < fallback_dist:
            fallback, fallback_dist = result, dist
        # pruning every filter of a layer is never a valid outcome, so a
        # zero-survivor probe cannot become the reported closest result
        if kept > 0 and dist < best_dist:
            best, best_dist = result, dist
        if fraction < budget.e_lower:
            hi = probe_log
        elif fraction > budget.e_upper:
            lo = probe_log
        else:
            return result
        if hi - lo < 1e-9:
            break
    best = best if best is not None else fallback
    assert best is not None
    best.feasible = False
    best.probes = probes
    return best


def select_channels(
    beta: np.ndarray, target_count: int | None = None, zero_eps: float = 0.0
) -> np.ndarray:
    """Column keep flags; a target count reconciles by nnz then l1 ranking."""
    beta = np.asarray(beta)
    above = np.abs(beta) > zero_eps
    flags = np.any(above, axis=0)
    if target_count is None:
        return flags
    k = beta.shape[1]
    if target_count > k:
        raise ValueError(f"target_count {target_count} exceeds {k} columns")
    nnz = above.sum(axis=0)
    l1 = np.abs(beta).sum(axis=0)
    # lexicographic: most nonzeros first, then largest l1, then lowest index
    order = sorted(range(k), key=lambda i: (-nnz[i], -l1[i], i))
    keep = np.zeros(k, dtype=bool)
    keep[order[:target_count]] = True
    return keep


def expand_budget(
    manifest: ModelManifest,
    config: Mapping | None = None,
    global_keep: float = 0.5,
    band: float = 0.05,
    metric: str = "params",
    max_search_iter: int = 60,
) -> dict[str, LayerBudget | None]:
    """Per-layer budget map from a global target plus optional overrides.

    Config document: ``{"metric", "global_keep", "band", "overrides":
    {layer_id: {"E_l", "E_u"}}, "skip_layers": [ids]}``. When skip_layers is
    absent the first four prunable layers are exempt; an explicit list (even
    empty) replaces that default.
    """
    config = dict(config or {})
    metric = config.get("metric", metric)
    global_keep = float(config.get("global_keep", global_keep))
    band = float(config.get("band", band))
    overrides = config.get("overrides", {})
    prunable = [l.id for l in manifest.layers if l.prunable]
    if "skip_layers" in config:
        skip = set(config["skip_layers"])
    else:
        skip = set(prunable[:4])

    e_l = max(global_keep - band, 1e-6)
    e_u = min(global_keep + band, 1.0)
    if not e_l < e_u:
        raise ValueError("global keep band is empty after clipping")
    budgets: dict[str, LayerBudget | None] = {}
    for lid in prunable:
        if lid in skip:
            budgets[lid] = None
            continue
        if lid in overrides:
            o = overrides[lid]
            budgets[lid] = LayerBudget(
                e_lower=float(o["E_l"]), e_upper=float(o["E_u"]),
                metric=metric, max_search_iter=max_search_iter,
            )
        else:
            budgets[lid] = LayerBudget(
                e_lower=e_l, e_upper=e_u, metric=metric,
                max_search_iter=max_search_iter,
            )
    return budgets
