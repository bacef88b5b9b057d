"""Channel pruning for CNNs via structured-lasso regression on Gram features."""

__version__ = "0.1.0"

from .budget import (
    LayerBudget,
    PruneResult,
    adaptive_search,
    expand_budget,
    layer_flops,
    layer_params,
    model_totals,
    select_channels,
)
from .estimators import (
    AdaptiveChannelPruner,
    GramFeatures,
    GraphFusedLasso,
    TreeGuidedLasso,
)
from .formats import (
    LayerSpec,
    ModelManifest,
    TensorFile,
    manifest_from_dict,
    manifest_to_dict,
    parse_manifest,
    read_tensor,
    write_manifest,
    write_tensor,
)
from .gram import (
    FeatureBatch,
    GramDesign,
    KernelConfig,
    build_design,
    center_gram,
    channel_gram,
    gram_columns,
    kernel_eval,
)
from .maskplan import (
    ChannelMask,
    MaskPlan,
    build_plan,
    plan_inception,
    plan_residual,
    plan_sequential,
)
from .solver import (
    GraphPenalty,
    LassoProblem,
    Solution,
    SolverConfig,
    TreePenalty,
    nnz_columns,
    objective_eval,
    smooth_penalty_grad,
    smooth_penalty_value,
    solve_spg,
)
from .structure import (
    CorrelationGraph,
    HierTree,
    TreeNode,
    build_graph,
    build_tree,
    node_weights,
    pearson,
)

__all__ = [
    "AdaptiveChannelPruner",
    "ChannelMask",
    "CorrelationGraph",
    "FeatureBatch",
    "GramDesign",
    "GramFeatures",
    "GraphFusedLasso",
    "GraphPenalty",
    "HierTree",
    "KernelConfig",
    "LassoProblem",
    "LayerBudget",
    "LayerSpec",
    "MaskPlan",
    "ModelManifest",
    "PruneResult",
    "Solution",
    "SolverConfig",
    "TensorFile",
    "TreeGuidedLasso",
    "TreeNode",
    "TreePenalty",
    "adaptive_search",
    "build_design",
    "build_graph",
    "build_plan",
    "build_tree",
    "center_gram",
    "channel_gram",
    "expand_budget",
    "gram_columns",
    "kernel_eval",
    "layer_flops",
    "layer_params",
    "manifest_from_dict",
    "manifest_to_dict",
    "model_totals",
    "nnz_columns",
    "node_weights",
    "objective_eval",
    "parse_manifest",
    "pearson",
    "plan_inception",
    "plan_residual",
    "plan_sequential",
    "read_tensor",
    "select_channels",
    "smooth_penalty_grad",
    "smooth_penalty_value",
    "solve_spg",
    "write_manifest",
    "write_tensor",
]
