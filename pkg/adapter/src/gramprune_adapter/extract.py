"""Export per-layer feature-map batches in the engine's file formats."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .fmap import write_fmap
from .tracing import TracedModel, trace_model


@dataclass
class ExtractionSession:
    model: nn.Module
    traced: TracedModel

    @classmethod
    def for_model(cls, model: nn.Module, sample: torch.Tensor,
                  model_name: str = "model") -> "ExtractionSession":
        return cls(model=model, traced=trace_model(model, sample, model_name))


def extract_features(model: nn.Module, batch: torch.Tensor, out_dir: str | Path,
                     model_name: str = "model") -> TracedModel:
    """Write one manifest plus .in/.out FMAP files per prunable conv layer.

    ``batch`` is an (N, C, H, W) tensor with N >= 2 (pairwise centering is
    degenerate on a single sample). Feature maps are stored in
    (batch, height, width, channel) axis order.
    """
    if batch.ndim != 4:
        raise ValueError(f"expected a 4-D batch, got shape {tuple(batch.shape)}")
    if batch.shape[0] < 2:
        raise ValueError("batch size must be >= 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traced = trace_model(model, batch, model_name)
    traced.write_manifest(out_dir / "manifest.json")

    captures: dict[str, tuple[torch.Tensor, torch.Tensor]] = {}
    hooks = []
    model = model.eval()
    modules = dict(model.named_modules())
    for layer in traced.layers:
        if layer.kind != "conv" or not layer.entry["prunable"]:
            continue
        mod = modules[layer.module_path]

        def hook(m, inputs, output, lid=layer.layer_id):
            captures[lid] = (inputs[0].detach(), output.detach())

        hooks.append(mod.register_forward_hook(hook))
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for h in hooks:
            h.remove()

    for layer in traced.layers:
        if layer.kind != "conv" or not layer.entry["prunable"]:
            continue
        x, y = captures[layer.layer_id]
        entry = layer.entry
        if x.shape[1] != entry["in_channels"] or y.shape[1] != entry["out_channels"]:
            raise ValueError(f"{layer.layer_id}: captured channels disagree with manifest")
        if list(y.shape[2:]) != entry["out_spatial"]:
            raise ValueError(f"{layer.layer_id}: captured spatial size disagrees with manifest")
        # NCHW -> (bs, h, w, c)
        write_fmap(x.permute(0, 2, 3, 1).contiguous().numpy(),
                   out_dir / f"{layer.layer_id}.in.fmap", label=layer.layer_id)
        write_fmap(y.permute(0, 2, 3, 1).contiguous().numpy(),
                   out_dir / f"{layer.layer_id}.out.fmap", label=layer.layer_id)
    return traced
