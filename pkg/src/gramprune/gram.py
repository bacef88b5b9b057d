"""Centered per-channel Gram features.

Each channel of a feature-map batch is summarized by the double-centered
kernel matrix over its ``bs`` flattened spatial maps. Flattening those
``bs x bs`` matrices column-wise yields one design column per input channel
and one response column per output channel, so a whole layer becomes a
``(bs**2, in_channels)`` regression onto ``(bs**2, out_channels)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .formats import TensorFile
from .validation import check_feature_array

KERNEL_KINDS = ("linear", "gaussian", "sigmoid", "laplacian")

# Gram columns of exactly-constant channels are snapped to 0 below this
# relative magnitude; centering annihilates constants up to rounding noise.
_SNAP_RTOL = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family and hyperparameters.

    ``sigma=None`` requests the median heuristic: the bandwidth of each
    channel is set to the median pairwise distance of its maps (falling back
    to 1.0 for constant channels).
    """

    kind: str = "laplacian"
    c: float = 0.0
    sigma: float | None = None
    a: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        for name in ("c", "a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"kernel parameter {name} must be finite")
        if self.sigma is not None:
            if not math.isfinite(self.sigma) or self.sigma <= 0:
                raise ValueError("sigma must be finite and > 0")


@dataclass(frozen=True)
class FeatureBatch:
    """A batch of feature maps for one layer boundary.

    ``values`` has shape ``(bs, channels, h*w)``: sample-major, one flattened
    spatial map per channel.
    """

    values: np.ndarray
    h: int
    w: int

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ValueError("values must be (bs, channels, h*w)")
        if self.values.shape[0] < 2:
            raise ValueError("batch size must be >= 2 (centering is degenerate at 1)")
        if self.values.shape[2] != self.h * self.w:
            raise ValueError("spatial extents disagree with flattened map length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    @property
    def bs(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FeatureBatch":
        """Build from a ``(bs, h, w, channels)`` array."""
        arr = check_feature_array(arr)
        bs, h, w, c = arr.shape
        values = np.ascontiguousarray(
            arr.reshape(bs, h * w, c).transpose(0, 2, 1), dtype=np.float64
        )
        return cls(values=values, h=h, w=w)

    @classmethod
    def from_tensor(cls, t: TensorFile) -> "FeatureBatch":
        if len(t.dims) != 4:
            raise ValueError(f"expected a (bs, h, w, c) tensor, got dims {t.dims}")
        return cls.from_array(t.as_array().astype(np.float64))


@dataclass(frozen=True)
class GramDesign:
    """Design/response columns of one layer in Gram space, stored f64."""

    bs: int
    x_cols: np.ndarray  # (bs**2, in_channels)
    y_cols: np.ndarray  # (bs**2, out_channels)

    @property
    def n_rows(self) -> int:
        return self.bs * self.bs


def kernel_eval(x: Sequence[float], y: Sequence[float], cfg: KernelConfig) -> float:
    """Evaluate the configured kernel on a pair of flattened maps."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError(f"vectors must share one dimension, got {xv.shape} and {yv.shape}")
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(yv))):
        raise ValueError("kernel inputs must be finite")
    if cfg.kind == "linear":
        return float(xv @ yv + cfg.c)
    if cfg.kind == "sigmoid":
        return float(np.tanh(cfg.a * (xv @ yv) + cfg.c))
    if cfg.sigma is None:
        raise ValueError(f"{cfg.kind} kernel needs a resolved sigma")
    dist = float(np.linalg.norm(xv - yv))
    if cfg.kind == "gaussian":
        return float(np.exp(-(dist * dist) / (2.0 * cfg.sigma * cfg.sigma)))
    return float(np.exp(-dist / cfg.sigma))


def median_bandwidth(maps: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the rows; 1.0 when degenerate."""
    d2 = _pairwise_sq_dists(maps)
    iu = np.triu_indices(maps.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0 else 1.0


def _pairwise_sq_dists(maps: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", maps, maps)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (maps @ maps.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def channel_gram(batch: FeatureBatch, channel: int, cfg: KernelConfig) -> np.ndarray:
    """Pairwise kernel matrix of one channel's maps across the batch."""
    if not 0 <= channel < batch.channels:
        raise IndexError(f"channel {channel} out of range ({batch.channels} channels)")
    maps = np.asarray(batch.values[:, channel, :], dtype=np.float64)
    if cfg.kind == "linear":
        k = maps @ maps.T + cfg.c
    elif cfg.kind == "sigmoid":
        k = np.tanh(cfg.a * (maps @ maps.T) + cfg.c)
    else:
        sigma = cfg.sigma if cfg.sigma is not None else median_bandwidth(maps)
        d2 = _pairwise_sq_dists(maps)
        if cfg.kind == "gaussian":
            k = np.exp(-d2 / (2.0 * sigma * sigma))
        else:
            k = np.exp(-np.sqrt(d2) / sigma)
    return (k + k.T) / 2.0


def center_gram(k: np.ndarray) -> np.ndarray:
    """Double-center a square matrix: rows and columns sum to ~0 afterwards."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {k.shape}")
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    return k - row - col + k.mean()


def gram_columns(batch: FeatureBatch, cfg: KernelConfig) -> np.ndarray:
    bs = batch.bs
    cols = np.empty((bs * bs, batch.channels), dtype=np.float64)
    for ch in range(batch.channels):
        raw = channel_gram(batch, ch, cfg)
        centered = center_gram(raw)
        # constant channels leave only rounding noise after centering
        if np.max(np.abs(centered)) <= _SNAP_RTOL * max(1.0, float(np.max(np.abs(raw)))):
            centered = np.zeros_like(centered)
        cols[:, ch] = centered.reshape(-1)
    return cols


def build_design(
    x_batch: FeatureBatch, y_batch: FeatureBatch, cfg: KernelConfig
) -> GramDesign:
    """Centered Gram columns for a layer's input and output batches.

    Both batches must come from the same samples in the same order; only the
    batch size is checkable here.
    """
    if x_batch.bs != y_batch.bs:
        raise ValueError(
            f"batch sizes disagree: {x_batch.bs} inputs vs {y_batch.bs} outputs"
        )
    return GramDesign(
        bs=x_batch.bs,
        x_cols=gram_columns(x_batch, cfg),
        y_cols=gram_columns(y_batch, cfg),
    )
