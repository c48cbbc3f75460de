"""Small convolutional multi-label classifier."""
from __future__ import annotations

import torch
from torch import nn


class SmallConvNet(nn.Module):
    """Four stride-2 conv stages, global average pooling, five logits.

    Batch normalisation is essential here, not incidental: rendered pages
    share an almost identical grid background, so per-sample normalisation
    erases the tiny cross-sample differences that carry the labels, while
    cross-batch normalisation rescales them to unit size at every stage.
    """

    def __init__(self, n_labels: int = 5):
        super().__init__()
        widths = (16, 32, 48, 64)
        layers: list[nn.Module] = []
        c_in = 3
        for c_out in widths:
            layers += [
                nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
            c_in = c_out
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(widths[-1], n_labels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.pool(self.features(x)).flatten(1)
        return self.head(feats)
