"""Derive an architecture manifest from a PyTorch model via torch.fx.

Convolutions and linears become manifest layers; elementwise adds and
channel concatenations become junctions; normalization, activations,
pooling, flatten and dropout are transparent and only shift spatial sizes.
The manifest id of a layer is its fx node name, which is also the stem of
its feature-map file names.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn
from torch.fx import symbolic_trace
from torch.fx.passes.shape_prop import ShapeProp

_ADD_TARGETS = {operator.add, torch.add, operator.iadd}
_CAT_TARGETS = {torch.cat, torch.concat}


@dataclass
class TracedLayer:
    layer_id: str
    kind: str
    module_path: str | None  # None for junctions
    entry: dict
    norm_paths: list[str] = field(default_factory=list)  # BN modules fed by this layer


@dataclass
class TracedModel:
    layers: list[TracedLayer]
    input_shape: tuple[int, int, int]
    model_name: str

    def manifest_dict(self) -> dict:
        return {
            "v": 1,
            "model_name": self.model_name,
            "input_shape": list(self.input_shape),
            "layers": [t.entry for t in self.layers],
        }

    def write_manifest(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def layer(self, layer_id: str) -> TracedLayer:
        for t in self.layers:
            if t.layer_id == layer_id:
                return t
        raise KeyError(layer_id)

    def prunable_ids(self) -> list[str]:
        return [t.layer_id for t in self.layers if t.entry.get("prunable")]


def _shape_of(node) -> tuple[int, ...]:
    meta = node.meta.get("tensor_meta")
    if meta is None:
        raise ValueError(f"node {node.name} carries no shape metadata")
    return tuple(meta.shape)


def trace_model(model: nn.Module, sample: torch.Tensor,
                model_name: str = "model") -> TracedModel:
    """Build the manifest layer graph for a CNN.

    ``sample`` must be a (N, C, H, W) batch; shapes are propagated through
    the traced graph to size every layer.
    """
    model = model.eval()
    traced = symbolic_trace(model)
    ShapeProp(traced).propagate(sample)
    modules = dict(traced.named_modules())

    producer: dict[str, str | None] = {}  # fx node -> manifest layer id
    layers: list[TracedLayer] = []
    by_id: dict[str, TracedLayer] = {}

    def tensor_args(node):
        out = []
        for a in node.args:
            if isinstance(a, torch.fx.Node):
                out.append(a)
            elif isinstance(a, (list, tuple)):
                out.extend(x for x in a if isinstance(x, torch.fx.Node))
        return out

    def preds_of(node):
        ids = []
        for a in tensor_args(node):
            p = producer.get(a.name)
            if p is not None:
                ids.append(p)
        return ids

    def add_layer(t: TracedLayer):
        layers.append(t)
        by_id[t.layer_id] = t

    for node in traced.graph.nodes:
        if node.op == "placeholder":
            producer[node.name] = None
        elif node.op == "call_module":
            mod = modules[node.target]
            if isinstance(mod, nn.Conv2d):
                if mod.groups != 1:
                    raise ValueError(f"{node.target}: grouped conv not supported")
                shape = _shape_of(node)
                entry = {
                    "id": node.name, "kind": "conv",
                    "in_channels": mod.in_channels,
                    "out_channels": mod.out_channels,
                    "kernel": [mod.kernel_size[0], mod.kernel_size[1]],
                    "stride": [mod.stride[0], mod.stride[1]],
                    "out_spatial": [int(shape[2]), int(shape[3])],
                    "has_bias": mod.bias is not None,
                    "predecessors": preds_of(node),
                    "prunable": True,
                }
                add_layer(TracedLayer(node.name, "conv", str(node.target), entry))
                producer[node.name] = node.name
            elif isinstance(mod, nn.Linear):
                entry = {
                    "id": node.name, "kind": "linear",
                    "in_channels": mod.in_features,
                    "out_channels": mod.out_features,
                    "out_spatial": [1, 1],
                    "has_bias": mod.bias is not None,
                    "predecessors": preds_of(node),
                    "prunable": False,
                }
                add_layer(TracedLayer(node.name, "linear", str(node.target), entry))
                producer[node.name] = node.name
            elif isinstance(mod, (nn.BatchNorm2d, nn.BatchNorm1d)):
                feeders = preds_of(node)
                if len(feeders) == 1:
                    by_id[feeders[0]].norm_paths.append(str(node.target))
                producer[node.name] = feeders[0] if feeders else None
            else:
                # activations, pooling, dropout, identity: transparent
                feeders = preds_of(node)
                producer[node.name] = feeders[0] if feeders else None
        elif node.op == "call_function" or node.op == "call_method":
            if node.op == "call_function" and node.target in _ADD_TARGETS:
                shape = _shape_of(node)
                entry = {
                    "id": node.name, "kind": "add-junction",
                    "in_channels": int(shape[1]), "out_channels": int(shape[1]),
                    "out_spatial": [int(shape[2]), int(shape[3])],
                    "has_bias": False,
                    "predecessors": preds_of(node),
                    "prunable": False,
                }
                add_layer(TracedLayer(node.name, "add-junction", None, entry))
                producer[node.name] = node.name
            elif node.op == "call_function" and node.target in _CAT_TARGETS:
                dim = node.kwargs.get("dim", node.args[1] if len(node.args) > 1 else 0)
                if dim != 1:
                    raise ValueError(f"{node.name}: only channel concat supported")
                shape = _shape_of(node)
                entry = {
                    "id": node.name, "kind": "concat-junction",
                    "in_channels": int(shape[1]), "out_channels": int(shape[1]),
                    "out_spatial": [int(shape[2]), int(shape[3])],
                    "has_bias": False,
                    "predecessors": preds_of(node),
                    "prunable": False,
                }
                add_layer(TracedLayer(node.name, "concat-junction", None, entry))
                producer[node.name] = node.name
            else:
                feeders = preds_of(node)
                producer[node.name] = feeders[0] if feeders else None
        elif node.op == "output":
            pass
        else:  # get_attr and friends
            producer[node.name] = None

    shape = tuple(sample.shape)
    return TracedModel(layers=layers,
                       input_shape=(int(shape[1]), int(shape[2]), int(shape[3])),
                       model_name=model_name)
