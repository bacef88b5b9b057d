"""Smoke-scale training and evaluation helpers.

The schedule here is fixed for the synthetic demo and makes no attempt to
reproduce published training recipes.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def evaluate(model: nn.Module, images: torch.Tensor,
             labels: torch.Tensor, batch: int = 256) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(labels), batch):
            logits = model(images[i:i + batch])
            correct += int((logits.argmax(dim=1) == labels[i:i + batch]).sum())
    return correct / len(labels)


def train(model: nn.Module, images: torch.Tensor, labels: torch.Tensor,
          epochs: int = 3, batch: int = 64, lr: float = 0.05,
          seed: int = 0) -> None:
    torch.manual_seed(seed)
    model.train()
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=0.9)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=max(epochs // 2, 1),
                                            gamma=0.3)
    loss_fn = nn.CrossEntropyLoss()
    n = len(labels)
    for _ in range(epochs):
        perm = torch.randperm(n)
        for i in range(0, n, batch):
            idx = perm[i:i + batch]
            opt.zero_grad()
            loss = loss_fn(model(images[idx]), labels[idx])
            loss.backward()
            opt.step()
        sched.step()


def finetune_smoke(model: nn.Module, train_data, test_data,
                   epochs: int = 3, lr: float = 0.02, seed: int = 0) -> dict:
    """Short finetune; returns accuracy before and after.

    Rejects models with zero-width layers up front (an empty layer cannot
    carry gradients anywhere).
    """
    for name, mod in model.named_modules():
        if isinstance(mod, nn.Conv2d) and (mod.out_channels == 0 or mod.in_channels == 0):
            raise ValueError(f"{name}: zero-channel layer, refusing to train")
        if isinstance(mod, nn.Linear) and (mod.out_features == 0 or mod.in_features == 0):
            raise ValueError(f"{name}: zero-width layer, refusing to train")
    tr_x, tr_y = train_data
    te_x, te_y = test_data
    before = evaluate(model, te_x, te_y)
    train(model, tr_x, tr_y, epochs=epochs, lr=lr, seed=seed)
    after = evaluate(model, te_x, te_y)
    return {"accuracy_before": before, "accuracy_after": after,
            "epochs": epochs}
