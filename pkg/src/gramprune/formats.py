"""File formats exchanged with model adapters.

Two artifacts cross the process boundary:

* FMAP, a self-contained binary tensor format for feature-map batches.
  Layout: magic ``b"FMAP1\\n"``, little-endian u32 ndim, ndim little-endian
  u64 extents, u8 dtype code (0 = f32, 1 = f64), u16 label length plus UTF-8
  label, then the raw row-major payload in little-endian floats.
* A JSON architecture manifest (schema version 1) describing layers, their
  shapes and the predecessor graph.

Both are bit-exact contracts: adapters in any language re-implement them
against this module's behaviour.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .exceptions import (
    BadMagicError,
    CycleError,
    DanglingPredecessorError,
    DimsOverflowError,
    InvalidTensorError,
    JunctionChannelError,
    ManifestParseError,
    TruncatedDataError,
    UnknownDtypeError,
)

MAGIC = b"FMAP1\n"
MAX_ELEMENTS = 2**48

_DTYPE_CODES = {"f32": 0, "f64": 1}
_CODE_DTYPES = {0: "f32", 1: "f64"}
_NUMPY_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

JUNCTION_KINDS = ("add-junction", "concat-junction")
LAYER_KINDS = ("conv", "linear") + JUNCTION_KINDS


@dataclass(frozen=True)
class TensorFile:
    """A dense row-major tensor with a text label.

    ``data`` is kept flat (C order); ``dims`` carries the logical shape.
    """

    dims: tuple[int, ...]
    dtype: str
    data: np.ndarray
    layer_id: str = ""

    def validate(self) -> None:
        if not self.dims:
            raise InvalidTensorError("dims must be non-empty")
        if any(d < 1 for d in self.dims):
            raise InvalidTensorError(f"every extent must be >= 1, got {self.dims}")
        n = int(np.prod(self.dims, dtype=np.int64))
        if n > MAX_ELEMENTS:
            raise DimsOverflowError(f"{n} elements exceed the 2**48 bound")
        if self.dtype not in _DTYPE_CODES:
            raise UnknownDtypeError(f"unsupported dtype {self.dtype!r}")
        if self.data.size != n:
            raise InvalidTensorError(
                f"payload holds {self.data.size} elements, dims imply {n}"
            )

    def as_array(self) -> np.ndarray:
        """The payload reshaped to ``dims`` (a view when possible)."""
        return self.data.reshape(self.dims)

    @classmethod
    def from_array(cls, arr: np.ndarray, layer_id: str = "") -> "TensorFile":
        arr = np.asarray(arr)
        dtype = "f64" if arr.dtype == np.float64 else "f32"
        flat = np.ascontiguousarray(arr, dtype=_NUMPY_DTYPES[dtype]).reshape(-1)
        return cls(dims=tuple(int(d) for d in arr.shape), dtype=dtype,
                   data=flat, layer_id=layer_id)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedDataError(f"file ends inside {what} ({len(buf)}/{n} bytes)")
    return buf


def read_tensor(path: str | Path) -> TensorFile:
    """Read an FMAP file, rejecting malformed or truncated content."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagicError(f"{path}: not an FMAP file")
        (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
        if ndim == 0:
            raise InvalidTensorError(f"{path}: dims must be non-empty")
        dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dims"))
        if any(d < 1 for d in dims):
            raise InvalidTensorError(f"{path}: zero extent in dims {dims}")
        n = 1
        for d in dims:
            n *= d
            if n > MAX_ELEMENTS:
                raise DimsOverflowError(f"{path}: dims {dims} overflow 2**48 elements")
        (code,) = struct.unpack("<B", _read_exact(fh, 1, "dtype"))
        if code not in _CODE_DTYPES:
            raise UnknownDtypeError(f"{path}: unknown dtype code {code}")
        dtype = _CODE_DTYPES[code]
        (label_len,) = struct.unpack("<H", _read_exact(fh, 2, "label length"))
        label = _read_exact(fh, label_len, "label").decode("utf-8")
        np_dtype = _NUMPY_DTYPES[dtype]
        payload = _read_exact(fh, n * np_dtype.itemsize, "payload")
        if fh.read(1):
            raise InvalidTensorError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(payload, dtype=np_dtype).copy()
    return TensorFile(dims=tuple(int(d) for d in dims), dtype=dtype,
                      data=data, layer_id=label)


def write_tensor(t: TensorFile, path: str | Path) -> None:
    """Write ``t`` so that :func:`read_tensor` yields bit-equal content."""
    t.validate()
    label = t.layer_id.encode("utf-8")
    if len(label) > 0xFFFF:
        raise InvalidTensorError("layer_id exceeds 65535 UTF-8 bytes")
    payload = np.ascontiguousarray(t.data, dtype=_NUMPY_DTYPES[t.dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(t.dims)))
        fh.write(struct.pack(f"<{len(t.dims)}Q", *t.dims))
        fh.write(struct.pack("<B", _DTYPE_CODES[t.dtype]))
        fh.write(struct.pack("<H", len(label)))
        fh.write(label)
        fh.write(payload)


@dataclass(frozen=True)
class LayerSpec:
    """One entry of the architecture manifest.

    Junction kinds omit kernel/stride; ``out_spatial`` is the spatial extent
    of the layer's output feature map and is used for FLOPs accounting.
    """

    id: str
    kind: str
    in_channels: int
    out_channels: int
    kernel_h: int | None = None
    kernel_w: int | None = None
    stride_h: int | None = None
    stride_w: int | None = None
    out_spatial_h: int = 1
    out_spatial_w: int = 1
    has_bias: bool = False
    predecessors: tuple[str, ...] = ()
    prunable: bool = False

    @property
    def is_junction(self) -> bool:
        return self.kind in JUNCTION_KINDS

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ManifestParseError(f"layer {self.id!r}: unknown kind {self.kind!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ManifestParseError(f"layer {self.id!r}: channel counts must be >= 1")
        if self.out_spatial_h < 1 or self.out_spatial_w < 1:
            raise ManifestParseError(f"layer {self.id!r}: out_spatial must be >= 1")
        if self.kind == "conv":
            for name in ("kernel_h", "kernel_w", "stride_h", "stride_w"):
                v = getattr(self, name)
                if v is None or v < 1:
                    raise ManifestParseError(f"layer {self.id!r}: {name} must be >= 1")


@dataclass(frozen=True)
class ModelManifest:
    model_name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {l.id: l for l in self.layers})

    def layer(self, layer_id: str) -> LayerSpec:
        return self._by_id[layer_id]

    def __contains__(self, layer_id: str) -> bool:
        return layer_id in self._by_id

    def successors(self) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {l.id: [] for l in self.layers}
        for l in self.layers:
            for p in l.predecessors:
                succ[p].append(l.id)
        return succ

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; raises CycleError when no order exists."""
        indeg = {l.id: len(l.predecessors) for l in self.layers}
        succ = self.successors()
        ready = [l.id for l in self.layers if indeg[l.id] == 0]
        order: list[str] = []
        while ready:
            lid = ready.pop(0)
            order.append(lid)
            for s in succ[lid]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if len(order) != len(self.layers):
            raise CycleError("layer graph contains a cycle")
        return order

    def validate(self) -> None:
        if len({l.id for l in self.layers}) != len(self.layers):
            raise ManifestParseError("duplicate layer ids")
        for l in self.layers:
            l.validate()
            for p in l.predecessors:
                if p not in self._by_id:
                    raise DanglingPredecessorError(
                        f"layer {l.id!r} references unknown predecessor {p!r}"
                    )
        self.topological_order()
        for l in self.layers:
            if l.kind == "add-junction":
                outs = {self._by_id[p].out_channels for p in l.predecessors}
                if len(outs) > 1:
                    raise JunctionChannelError(
                        f"add-junction {l.id!r} predecessors disagree on channels: {sorted(outs)}"
                    )
                if outs and outs != {l.out_channels}:
                    raise JunctionChannelError(
                        f"add-junction {l.id!r} declares {l.out_channels} channels, "
                        f"predecessors carry {outs.pop()}"
                    )
            elif l.kind == "concat-junction":
                total = sum(self._by_id[p].out_channels for p in l.predecessors)
                if total != l.out_channels:
                    raise JunctionChannelError(
                        f"concat-junction {l.id!r} declares {l.out_channels} channels, "
                        f"predecessors sum to {total}"
                    )
        self._check_roots()

    def _check_roots(self) -> None:
        # union-find over the undirected layer graph; each component needs
        # exactly one input-adjacent (predecessor-free) layer
        parent = {l.id: l.id for l in self.layers}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for l in self.layers:
            for p in l.predecessors:
                parent[find(l.id)] = find(p)
        roots_per_comp: dict[str, int] = {}
        for l in self.layers:
            comp = find(l.id)
            roots_per_comp.setdefault(comp, 0)
            if not l.predecessors:
                roots_per_comp[comp] += 1
        for comp, n in roots_per_comp.items():
            if n != 1:
                raise ManifestParseError(
                    f"component containing {comp!r} has {n} input-adjacent layers, expected 1"
                )


def _layer_from_dict(d: Mapping) -> LayerSpec:
    try:
        kind = d["kind"]
        kernel = d.get("kernel")
        stride = d.get("stride")
        spatial = d["out_spatial"]
        return LayerSpec(
            id=str(d["id"]),
            kind=str(kind),
            in_channels=int(d["in_channels"]),
            out_channels=int(d["out_channels"]),
            kernel_h=None if kernel is None else int(kernel[0]),
            kernel_w=None if kernel is None else int(kernel[1]),
            stride_h=None if stride is None else int(stride[0]),
            stride_w=None if stride is None else int(stride[1]),
            out_spatial_h=int(spatial[0]),
            out_spatial_w=int(spatial[1]),
            has_bias=bool(d.get("has_bias", False)),
            predecessors=tuple(str(p) for p in d.get("predecessors", [])),
            prunable=bool(d.get("prunable", False)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ManifestParseError(f"malformed layer entry: {exc}") from exc


def manifest_from_dict(doc: Mapping) -> ModelManifest:
    if not isinstance(doc, Mapping):
        raise ManifestParseError("manifest document must be a JSON object")
    if doc.get("v") != 1:
        raise ManifestParseError(f"unsupported manifest version {doc.get('v')!r}")
    try:
        shape = doc["input_shape"]
        manifest = ModelManifest(
            model_name=str(doc["model_name"]),
            layers=tuple(_layer_from_dict(l) for l in doc["layers"]),
            input_shape=(int(shape[0]), int(shape[1]), int(shape[2])),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ManifestParseError(f"malformed manifest: {exc}") from exc
    manifest.validate()
    return manifest


def manifest_to_dict(m: ModelManifest) -> dict:
    layers = []
    for l in m.layers:
        entry: dict = {
            "id": l.id,
            "kind": l.kind,
            "in_channels": l.in_channels,
            "out_channels": l.out_channels,
            "out_spatial": [l.out_spatial_h, l.out_spatial_w],
            "has_bias": l.has_bias,
            "predecessors": list(l.predecessors),
            "prunable": l.prunable,
        }
        if l.kernel_h is not None:
            entry["kernel"] = [l.kernel_h, l.kernel_w]
        if l.stride_h is not None:
            entry["stride"] = [l.stride_h, l.stride_w]
        layers.append(entry)
    return {
        "v": 1,
        "model_name": m.model_name,
        "input_shape": list(m.input_shape),
        "layers": layers,
    }


def parse_manifest(path: str | Path) -> ModelManifest:
    """Load and validate a manifest JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_dict(doc)


def write_manifest(m: ModelManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(m), fh, indent=1, sort_keys=True)
        fh.write("\n")
