"""Deterministic synthetic image dataset for smoke-scale experiments.

Images are class templates (fixed random low-frequency patterns) plus
Gaussian noise, so a small CNN separates them within a couple of epochs on a
CPU and no external downloads are needed.
"""

from __future__ import annotations

import numpy as np
import torch


def synthetic_dataset(n_samples: int, n_classes: int = 3, size: int = 12,
                      channels: int = 3, noise: float = 0.5, seed: int = 0,
                      template_seed: int = 42):
    """Return (images, labels) tensors with equal class counts.

    ``template_seed`` fixes the class patterns; ``seed`` drives the per-split
    noise, so train/test splits share classes but not samples.
    """
    template_rng = np.random.default_rng(template_seed)
    base = template_rng.normal(size=(n_classes, channels, 4, 4))
    templates = np.stack([
        np.kron(base[c], np.ones((size // 4, size // 4)))
        for c in range(n_classes)
    ])
    rng = np.random.default_rng(seed)
    per_class = n_samples // n_classes
    images, labels = [], []
    for c in range(n_classes):
        x = templates[c][None] + noise * rng.normal(
            size=(per_class, channels, size, size))
        images.append(x)
        labels.append(np.full(per_class, c))
    images = np.concatenate(images).astype(np.float32)
    labels = np.concatenate(labels).astype(np.int64)
    order = rng.permutation(len(labels))
    return torch.from_numpy(images[order]), torch.from_numpy(labels[order])


def stratified_batch(images: torch.Tensor, labels: torch.Tensor, bs: int,
                     seed: int = 0) -> torch.Tensor:
    """Class-balanced sample: equal per-class counts, random within class."""
    rng = np.random.default_rng(seed)
    classes = torch.unique(labels).tolist()
    per_class = bs // len(classes)
    if per_class < 1:
        raise ValueError(f"batch size {bs} smaller than class count {len(classes)}")
    picks = []
    for c in classes:
        idx = torch.nonzero(labels == c).flatten().numpy()
        picks.append(rng.choice(idx, size=per_class, replace=False))
    chosen = np.concatenate(picks)
    rng.shuffle(chosen)
    return images[torch.from_numpy(chosen)]
