"""Weight surgery: slice model parameters according to a mask plan."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .tracing import TracedModel


def load_plan(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("v") != 1:
        raise ValueError(f"unsupported mask plan version {doc.get('v')!r}")
    return doc


def _mask_indices(flags) -> torch.Tensor:
    arr = np.asarray(flags, dtype=bool)
    if not arr.any():
        raise ValueError("mask keeps zero channels")
    return torch.as_tensor(np.flatnonzero(arr), dtype=torch.long)


def _set_module(root: nn.Module, path: str, new: nn.Module) -> None:
    parts = path.split(".")
    parent = root
    for p in parts[:-1]:
        parent = getattr(parent, p)
    setattr(parent, parts[-1], new)


def _slice_conv(conv: nn.Conv2d, in_idx: torch.Tensor,
                out_idx: torch.Tensor) -> nn.Conv2d:
    new = nn.Conv2d(
        in_channels=len(in_idx), out_channels=len(out_idx),
        kernel_size=conv.kernel_size, stride=conv.stride,
        padding=conv.padding, dilation=conv.dilation,
        bias=conv.bias is not None,
    )
    with torch.no_grad():
        new.weight.copy_(conv.weight[out_idx][:, in_idx])
        if conv.bias is not None:
            new.bias.copy_(conv.bias[out_idx])
    return new


def _slice_linear(lin: nn.Linear, in_idx: torch.Tensor,
                  out_idx: torch.Tensor) -> nn.Linear:
    new = nn.Linear(len(in_idx), len(out_idx), bias=lin.bias is not None)
    with torch.no_grad():
        new.weight.copy_(lin.weight[out_idx][:, in_idx])
        if lin.bias is not None:
            new.bias.copy_(lin.bias[out_idx])
    return new


def _slice_bn(bn: nn.modules.batchnorm._BatchNorm, idx: torch.Tensor):
    new = type(bn)(len(idx), eps=bn.eps, momentum=bn.momentum,
                   affine=bn.affine, track_running_stats=bn.track_running_stats)
    with torch.no_grad():
        if bn.affine:
            new.weight.copy_(bn.weight[idx])
            new.bias.copy_(bn.bias[idx])
        if bn.track_running_stats:
            new.running_mean.copy_(bn.running_mean[idx])
            new.running_var.copy_(bn.running_var[idx])
            new.num_batches_tracked.copy_(bn.num_batches_tracked)
    return new


def apply_masks(model: nn.Module, plan: dict, traced: TracedModel) -> nn.Module:
    """A new model with channels sliced per the plan; the input is untouched.

    Normalization layers fed by a pruned layer are sliced to match; pooling
    and activations need no changes.
    """
    masks = plan["masks"]
    pruned = copy.deepcopy(model)
    modules = dict(pruned.named_modules())
    for layer in traced.layers:
        mask = masks.get(layer.layer_id)
        if mask is None:
            continue
        if layer.module_path is not None:
            mod = modules[layer.module_path]
            in_idx = _mask_indices(mask["in_keep"])
            out_idx = _mask_indices(mask["out_keep"])
            if isinstance(mod, nn.Conv2d):
                if len(mask["in_keep"]) != mod.in_channels or \
                        len(mask["out_keep"]) != mod.out_channels:
                    raise ValueError(f"{layer.layer_id}: mask does not match module")
                _set_module(pruned, layer.module_path,
                            _slice_conv(mod, in_idx, out_idx))
            elif isinstance(mod, nn.Linear):
                if len(mask["in_keep"]) != mod.in_features or \
                        len(mask["out_keep"]) != mod.out_features:
                    raise ValueError(f"{layer.layer_id}: mask does not match module")
                _set_module(pruned, layer.module_path,
                            _slice_linear(mod, in_idx, out_idx))
        out_idx = _mask_indices(mask["out_keep"])
        for norm_path in layer.norm_paths:
            _set_module(pruned, norm_path, _slice_bn(modules[norm_path], out_idx))
    return pruned


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
