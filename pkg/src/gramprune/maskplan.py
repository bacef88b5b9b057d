"""Reconcile per-layer channel selections into a consistent mask plan.

Layer-wise selections ignore cross-layer constraints, so residual shortcuts
and concat branches need repair work: a projection shortcut is pruned to match
the block's final convolution, an identity shortcut cannot change channel
sets and therefore forces that convolution onto the block input's keep set.
Every reconciliation that changes a selection is recorded in the plan notes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exceptions import EmptyMaskError, MaskConsistencyError
from .formats import LayerSpec, ModelManifest
from .validation import check_keep_flags


@dataclass
class ChannelMask:
    layer_id: str
    out_keep: np.ndarray
    in_keep: np.ndarray


@dataclass
class MaskPlan:
    masks: dict[str, ChannelMask]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "masks": {
                lid: {
                    "out_keep": [int(v) for v in m.out_keep],
                    "in_keep": [int(v) for v in m.in_keep],
                }
                for lid, m in self.masks.items()
            },
            "notes": list(self.notes),
        }

    def dumps(self) -> str:
        """Canonical byte-stable serialization."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MaskPlan":
        if not isinstance(doc, Mapping) or doc.get("v") != 1:
            raise MaskConsistencyError("unsupported mask plan document")
        try:
            masks = {
                lid: ChannelMask(
                    layer_id=lid,
                    out_keep=np.asarray(m["out_keep"], dtype=bool),
                    in_keep=np.asarray(m["in_keep"], dtype=bool),
                )
                for lid, m in doc["masks"].items()
            }
            notes = [str(n) for n in doc.get("notes", [])]
        except (KeyError, TypeError) as exc:
            raise MaskConsistencyError(f"malformed mask plan: {exc}") from exc
        return cls(masks=masks, notes=notes)

    @classmethod
    def loads(cls, text: str) -> "MaskPlan":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MaskConsistencyError(f"invalid mask plan JSON: {exc}") from exc
        return cls.from_dict(doc)


def _ancestors(manifest: ModelManifest, start: str) -> set[str]:
    seen: set[str] = set()
    stack = [start]
    while stack:
        lid = stack.pop()
        for p in manifest.layer(lid).predecessors:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def _is_projection(manifest: ModelManifest, pred: str, other: str) -> bool:
    """True when ``pred`` is a conv fed directly by an ancestor of ``other``."""
    spec = manifest.layer(pred)
    if spec.kind != "conv" or len(spec.predecessors) != 1:
        return False
    source = spec.predecessors[0]
    return source == other or source in _ancestors(manifest, other)


def build_plan(
    manifest: ModelManifest, selections: Mapping[str, np.ndarray]
) -> MaskPlan:
    """Compute globally consistent masks from per-layer selections.

    Unselected or non-prunable layers keep every output channel. Raises
    EmptyMaskError when any selection keeps nothing.
    """
    effective: dict[str, np.ndarray] = {}
    notes: list[str] = []
    cleaned: dict[str, np.ndarray] = {}
    for lid, flags in selections.items():
        if lid not in manifest:
            raise MaskConsistencyError(f"selection for unknown layer {lid!r}")
        spec = manifest.layer(lid)
        flags = check_keep_flags(flags, spec.out_channels, f"selection[{lid}]")
        if not flags.any():
            raise EmptyMaskError(f"selection for {lid!r} keeps zero channels")
        cleaned[lid] = flags

    order = manifest.topological_order()
    for lid in order:
        spec = manifest.layer(lid)
        if spec.kind in ("conv", "linear"):
            if spec.prunable and lid in cleaned:
                effective[lid] = cleaned[lid].copy()
            else:
                if lid in cleaned and not spec.prunable:
                    notes.append(f"{lid}: selection ignored (layer not prunable)")
                effective[lid] = np.ones(spec.out_channels, dtype=bool)
        elif spec.kind == "concat-junction":
            effective[lid] = np.concatenate(
                [effective[p] for p in spec.predecessors]
            )
        else:  # add-junction
            effective[lid] = _reconcile_add(manifest, spec, effective, notes)

    masks: dict[str, ChannelMask] = {}
    for lid in order:
        spec = manifest.layer(lid)
        out_keep = effective[lid]
        if not out_keep.any():
            raise EmptyMaskError(f"layer {lid!r} would keep zero channels")
        if not spec.predecessors:
            in_keep = np.ones(spec.in_channels, dtype=bool)
        elif spec.kind == "add-junction":
            in_keep = effective[spec.predecessors[0]].copy()
        else:
            cat = np.concatenate([effective[p] for p in spec.predecessors])
            if cat.size == spec.in_channels:
                in_keep = cat
            elif spec.in_channels % cat.size == 0:
                # spatial flatten between conv and linear: channel-major repeat
                in_keep = np.repeat(cat, spec.in_channels // cat.size)
            else:
                raise MaskConsistencyError(
                    f"layer {lid!r}: cannot map {cat.size} predecessor channels "
                    f"onto {spec.in_channels} inputs"
                )
        masks[lid] = ChannelMask(layer_id=lid, out_keep=out_keep.copy(),
                                 in_keep=in_keep)
    return MaskPlan(masks=masks, notes=notes)


def _reconcile_add(
    manifest: ModelManifest,
    spec: LayerSpec,
    effective: dict[str, np.ndarray],
    notes: list[str],
) -> np.ndarray:
    preds = list(spec.predecessors)
    if len(preds) == 1:
        return effective[preds[0]].copy()
    if len(preds) == 2:
        p1, p2 = preds
        anc1 = _ancestors(manifest, p1) | {p1}
        anc2 = _ancestors(manifest, p2) | {p2}
        identity, main = None, None
        if p1 in anc2:
            identity, main = p1, p2
        elif p2 in anc1:
            identity, main = p2, p1
        if identity is not None:
            # identity shortcut: channel sets cannot change across it
            forced = effective[identity]
            if not np.array_equal(effective[main], forced):
                notes.append(
                    f"{main}: selection overridden to the identity-shortcut keep "
                    f"set at {spec.id}"
                )
                effective[main] = forced.copy()
            return forced.copy()
        proj, main = None, None
        if _is_projection(manifest, p1, p2) and not _is_projection(manifest, p2, p1):
            proj, main = p1, p2
        elif _is_projection(manifest, p2, p1) and not _is_projection(manifest, p1, p2):
            proj, main = p2, p1
        if proj is not None:
            if not np.array_equal(effective[proj], effective[main]):
                notes.append(
                    f"{proj}: projection shortcut pruned to match {main} at {spec.id}"
                )
                effective[proj] = effective[main].copy()
            return effective[main].copy()
    # no recognizable shortcut: keep the union so no information is dropped
    union = effective[preds[0]].copy()
    for p in preds[1:]:
        union |= effective[p]
    for p in preds:
        if not np.array_equal(effective[p], union):
            notes.append(f"{p}: widened to the union keep set at {spec.id}")
            effective[p] = union.copy()
    return union


def plan_sequential(manifest: ModelManifest, selections) -> MaskPlan:
    """Plan for chain models: each in_keep follows the predecessor's out_keep."""
    return build_plan(manifest, selections)


def plan_residual(manifest: ModelManifest, selections) -> MaskPlan:
    """Plan for models with add-junction shortcuts (projection or identity)."""
    return build_plan(manifest, selections)


def plan_inception(manifest: ModelManifest, selections) -> MaskPlan:
    """Plan for models with concat-junction branch merges."""
    return build_plan(manifest, selections)
