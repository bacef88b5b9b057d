"""Small CNNs used by the demo and tests."""

from __future__ import annotations

import torch
import torch.nn as nn


class ToyConvNet(nn.Module):
    """Four conv layers, global average pooling, one classifier layer."""

    def __init__(self, n_classes: int = 3, widths=(16, 32, 32, 24),
                 in_channels: int = 3):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.conv1 = nn.Conv2d(in_channels, w1, 3, padding=1)
        self.conv2 = nn.Conv2d(w1, w2, 3, padding=1)
        self.conv3 = nn.Conv2d(w2, w3, 3, padding=1)
        self.conv4 = nn.Conv2d(w3, w4, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.head = nn.Linear(w4, n_classes)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        x = self.pool(torch.relu(self.conv2(x)))
        x = torch.relu(self.conv3(x))
        x = self.pool(torch.relu(self.conv4(x)))
        x = torch.flatten(x.mean(dim=(2, 3)), 1)
        return self.head(x)


class ToyResidualNet(nn.Module):
    """Stem conv, two identity-shortcut blocks, classifier."""

    def __init__(self, n_classes: int = 3, width: int = 16,
                 in_channels: int = 3):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, width, 3, padding=1)
        self.b1_conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.b1_conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.b2_conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.b2_conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.head = nn.Linear(width, n_classes)

    def forward(self, x):
        x = torch.relu(self.stem(x))
        y = torch.relu(self.b1_conv1(x))
        x = torch.relu(x + self.b1_conv2(y))
        y = torch.relu(self.b2_conv1(x))
        x = torch.relu(x + self.b2_conv2(y))
        x = torch.flatten(x.mean(dim=(2, 3)), 1)
        return self.head(x)


class ToyProjectionNet(nn.Module):
    """One residual block whose shortcut is a 1x1 projection conv."""

    def __init__(self, n_classes: int = 3, width_in: int = 8,
                 width_out: int = 16, in_channels: int = 3):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, width_in, 3, padding=1)
        self.conv1 = nn.Conv2d(width_in, width_out, 3, padding=1)
        self.conv2 = nn.Conv2d(width_out, width_out, 3, padding=1)
        self.proj = nn.Conv2d(width_in, width_out, 1)
        self.head = nn.Linear(width_out, n_classes)

    def forward(self, x):
        x = torch.relu(self.stem(x))
        y = torch.relu(self.conv1(x))
        x = torch.relu(self.proj(x) + self.conv2(y))
        x = torch.flatten(x.mean(dim=(2, 3)), 1)
        return self.head(x)
