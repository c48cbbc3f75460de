"""Dataset loading: manifest + PNGs to cached tensors."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ecgpaper import positive_weights, read_manifest, resolve_image

from .errors import EmptyPool

INPUT_WIDTH = 512
INPUT_HEIGHT = 256


@dataclass
class ImageSet:
    """All images of a manifest as one cached tensor, in manifest order."""

    ids: tuple[str, ...]
    images: torch.Tensor  # (n, 3, INPUT_HEIGHT, INPUT_WIDTH) float32 in [0, 1]
    labels: torch.Tensor  # (n, 5) float32
    folds: tuple[int | None, ...]

    def __len__(self) -> int:
        return len(self.ids)


def load_dataset(manifest_path: str | Path) -> ImageSet:
    """Read a manifest and its PNGs, downscaled to the model input size."""
    manifest = read_manifest(manifest_path)
    if len(manifest) == 0:
        raise EmptyPool(f"manifest {manifest_path} has no entries")
    ids, folds, images, labels = [], [], [], []
    for entry in manifest:
        with Image.open(resolve_image(manifest_path, entry)) as im:
            small = im.convert("RGB").resize(
                (INPUT_WIDTH, INPUT_HEIGHT), Image.BILINEAR)
        images.append(np.asarray(small, dtype=np.float32) / 255.0)
        labels.append(entry.labels.as_array())
        ids.append(entry.id)
        folds.append(entry.fold)
    stack = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()
    return ImageSet(tuple(ids), stack,
                    torch.from_numpy(np.stack(labels)).to(torch.float32),
                    tuple(folds))


def class_weights(labels: torch.Tensor) -> torch.Tensor:
    """Inverse-positive-rate weights for the five labels.

    Labels with no positive example in the set get weight 1.0 (their weight
    multiplies an empty positive term), obtained by substituting the total
    for the zero count.
    """
    counts = labels.sum(dim=0).to(torch.int64).tolist()
    total = int(labels.shape[0])
    safe = tuple(c if c > 0 else total for c in counts)
    return torch.tensor(positive_weights(safe, total).weights,
                        dtype=torch.float64)
