"""Shared fixtures: random problem instances, toy manifests, feature files."""

from __future__ import annotations

import numpy as np

from gramprune.formats import LayerSpec, ModelManifest, TensorFile, write_tensor
from gramprune.solver import GraphPenalty, LassoProblem, TreePenalty
from gramprune.structure import CorrelationGraph, build_tree, node_weights


def rand_graph_problem(rng, n=30, j=8, k=6, n_edges=3, lam_scale=0.15,
                       mu_factor=0.5):
    x = rng.normal(size=(n, j))
    y = rng.normal(size=(n, k))
    lam = lam_scale * float(np.max(np.abs(x.T @ y)))
    edges, seen = [], set()
    while len(edges) < n_edges:
        l, m = sorted(rng.choice(k, size=2, replace=False))
        if (l, m) in seen:
            continue
        seen.add((l, m))
        f = float(rng.choice([-1, 1]) * rng.uniform(0.65, 1.0))
        edges.append((int(l), int(m), f))
    graph = CorrelationGraph(n_nodes=k, edges=tuple(edges), threshold=0.6)
    return LassoProblem(x, y, GraphPenalty(graph=graph, lam=lam,
                                           mu=mu_factor * lam))


def rand_tree_problem(rng, n=30, j=8, k=6, lam_scale=0.15):
    x = rng.normal(size=(n, j))
    y = rng.normal(size=(n, k))
    lam = lam_scale * float(np.max(np.abs(x.T @ y)))
    tree = build_tree(rng.normal(size=(4 * k, k)))
    return LassoProblem(x, y, TreePenalty(tree=tree, weights=node_weights(tree),
                                          lam=lam))


def two_leaf_tree(h_root=0.5):
    from gramprune.structure import HierTree, TreeNode

    nodes = (
        TreeNode(id=0, children=(), group=(0,), h=None),
        TreeNode(id=1, children=(), group=(1,), h=None),
        TreeNode(id=2, children=(0, 1), group=(0, 1), h=h_root,
                 dissimilarity=1.0),
    )
    return HierTree(nodes=nodes, root=2, n_leaves=2)


def toy_chain_manifest(widths=(8, 12, 16), spatial=8) -> ModelManifest:
    layers = []
    cin, prev = 3, []
    for i, w in enumerate(widths, start=1):
        lid = f"conv{i}"
        layers.append(LayerSpec(
            id=lid, kind="conv", in_channels=cin, out_channels=w,
            kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
            out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
            predecessors=tuple(prev), prunable=True,
        ))
        cin, prev = w, [lid]
    layers.append(LayerSpec(
        id="fc", kind="linear", in_channels=widths[-1], out_channels=4,
        out_spatial_h=1, out_spatial_w=1, has_bias=True,
        predecessors=tuple(prev), prunable=False,
    ))
    return ModelManifest(model_name="toy-chain", layers=tuple(layers),
                         input_shape=(3, spatial, spatial))


def toy_residual_manifest(n_blocks=3, width=16, spatial=8) -> ModelManifest:
    layers = [LayerSpec(
        id="stem", kind="conv", in_channels=3, out_channels=width,
        kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
        out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
        predecessors=(), prunable=False,
    )]
    prev = "stem"
    for b in range(1, n_blocks + 1):
        c1, c2, add = f"b{b}_conv1", f"b{b}_conv2", f"b{b}_add"
        layers.append(LayerSpec(
            id=c1, kind="conv", in_channels=width, out_channels=width,
            kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
            out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
            predecessors=(prev,), prunable=True,
        ))
        layers.append(LayerSpec(
            id=c2, kind="conv", in_channels=width, out_channels=width,
            kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
            out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
            predecessors=(c1,), prunable=True,
        ))
        layers.append(LayerSpec(
            id=add, kind="add-junction", in_channels=width, out_channels=width,
            out_spatial_h=spatial, out_spatial_w=spatial,
            predecessors=(prev, c2), prunable=False,
        ))
        prev = add
    layers.append(LayerSpec(
        id="fc", kind="linear", in_channels=width, out_channels=4,
        out_spatial_h=1, out_spatial_w=1, has_bias=True,
        predecessors=(prev,), prunable=False,
    ))
    return ModelManifest(model_name="toy-residual", layers=tuple(layers),
                         input_shape=(3, spatial, spatial))


def toy_projection_manifest(width_in=8, width_out=16, spatial=8) -> ModelManifest:
    layers = [
        LayerSpec(id="stem", kind="conv", in_channels=3, out_channels=width_in,
                  kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
                  out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
                  predecessors=(), prunable=False),
        LayerSpec(id="conv1", kind="conv", in_channels=width_in,
                  out_channels=width_out, kernel_h=3, kernel_w=3,
                  stride_h=1, stride_w=1, out_spatial_h=spatial,
                  out_spatial_w=spatial, has_bias=True,
                  predecessors=("stem",), prunable=True),
        LayerSpec(id="conv2", kind="conv", in_channels=width_out,
                  out_channels=width_out, kernel_h=3, kernel_w=3,
                  stride_h=1, stride_w=1, out_spatial_h=spatial,
                  out_spatial_w=spatial, has_bias=True,
                  predecessors=("conv1",), prunable=True),
        LayerSpec(id="proj", kind="conv", in_channels=width_in,
                  out_channels=width_out, kernel_h=1, kernel_w=1,
                  stride_h=1, stride_w=1, out_spatial_h=spatial,
                  out_spatial_w=spatial, has_bias=True,
                  predecessors=("stem",), prunable=False),
        LayerSpec(id="add", kind="add-junction", in_channels=width_out,
                  out_channels=width_out, out_spatial_h=spatial,
                  out_spatial_w=spatial, predecessors=("proj", "conv2"),
                  prunable=False),
        LayerSpec(id="fc", kind="linear", in_channels=width_out, out_channels=4,
                  out_spatial_h=1, out_spatial_w=1, has_bias=True,
                  predecessors=("add",), prunable=False),
    ]
    return ModelManifest(model_name="toy-projection", layers=tuple(layers),
                         input_shape=(3, spatial, spatial))


def toy_inception_manifest(spatial=8) -> ModelManifest:
    layers = [
        LayerSpec(id="stem", kind="conv", in_channels=3, out_channels=8,
                  kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
                  out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
                  predecessors=(), prunable=False),
        LayerSpec(id="br1", kind="conv", in_channels=8, out_channels=8,
                  kernel_h=1, kernel_w=1, stride_h=1, stride_w=1,
                  out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
                  predecessors=("stem",), prunable=True),
        LayerSpec(id="br2", kind="conv", in_channels=8, out_channels=8,
                  kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
                  out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
                  predecessors=("stem",), prunable=True),
        LayerSpec(id="cat", kind="concat-junction", in_channels=16,
                  out_channels=16, out_spatial_h=spatial, out_spatial_w=spatial,
                  predecessors=("br1", "br2"), prunable=False),
        LayerSpec(id="head", kind="conv", in_channels=16, out_channels=8,
                  kernel_h=3, kernel_w=3, stride_h=1, stride_w=1,
                  out_spatial_h=spatial, out_spatial_w=spatial, has_bias=True,
                  predecessors=("cat",), prunable=True),
        LayerSpec(id="fc", kind="linear", in_channels=8, out_channels=4,
                  out_spatial_h=1, out_spatial_w=1, has_bias=True,
                  predecessors=("head",), prunable=False),
    ]
    return ModelManifest(model_name="toy-inception", layers=tuple(layers),
                         input_shape=(3, spatial, spatial))


def write_layer_features(directory, manifest: ModelManifest, bs=8, spatial=4,
                         seed=0) -> None:
    """Random but structured feature files for every prunable conv layer.

    Output channels mix the input maps at geometrically decaying amplitudes
    against a fixed noise floor, so survivor counts respond gradually to the
    regularization weight.
    """
    rng = np.random.default_rng(seed)
    for spec in manifest.layers:
        if spec.kind != "conv" or not spec.prunable:
            continue
        x = rng.normal(size=(bs, spatial, spatial, spec.in_channels))
        mix = rng.normal(size=(spec.in_channels, spec.out_channels))
        amps = np.geomspace(1.0, 0.05, spec.out_channels)
        y = amps * np.einsum("bhwi,io->bhwo", x, mix) / np.sqrt(spec.in_channels)
        y += 0.02 * rng.normal(size=y.shape)
        write_tensor(TensorFile.from_array(x.astype(np.float64),
                                           layer_id=spec.id),
                     f"{directory}/{spec.id}.in.fmap")
        write_tensor(TensorFile.from_array(y.astype(np.float64),
                                           layer_id=spec.id),
                     f"{directory}/{spec.id}.out.fmap")
