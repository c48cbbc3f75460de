"""Training configuration and checkpoint containers."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser, schedule, and budget settings shared by both stages.

    Stage two fine-tunes from a stage-one checkpoint at a reduced learning
    rate (lr * stage2_lr_scale). Early stopping monitors macro AUROC by
    default; set monitor="loss" to track validation loss instead.
    """

    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 32
    stage1_epochs: int = 50
    stage2_epochs: int = 30
    patience: int = 5
    num_cycles: float = 0.5
    seed: int = 0
    stage2_lr_scale: float = 0.5
    monitor: str = "auroc"

    def __post_init__(self):
        positive = {
            "lr": self.lr, "weight_decay": self.weight_decay,
            "batch_size": self.batch_size, "stage1_epochs": self.stage1_epochs,
            "stage2_epochs": self.stage2_epochs, "patience": self.patience,
            "num_cycles": self.num_cycles, "stage2_lr_scale": self.stage2_lr_scale,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.patience >= self.stage1_epochs:
            raise ValueError("patience must be smaller than the stage-one budget")
        if self.monitor not in ("auroc", "loss"):
            raise ValueError("monitor must be 'auroc' or 'loss'")

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    """Trained parameters plus the training history that produced them.

    `state` holds the best-validation weights. `history` records per-epoch
    means of the batch losses, the validation metric, the realised
    learning-rate trace (one value per optimiser step), the planned step
    total, and the best/stopped epoch numbers (1-based).
    """

    state: dict[str, torch.Tensor]
    history: dict
    fingerprint: str

    def __post_init__(self):
        n_epochs = len(self.history.get("train_loss", ()))
        budget = int(self.history.get("max_epochs", n_epochs))
        if n_epochs > budget:
            raise ValueError(
                f"history covers {n_epochs} epochs, over the budget of {budget}")
        if len(self.fingerprint) != 64:
            raise ValueError("fingerprint must be a sha256 hex digest")

    def save(self, path: str | Path) -> None:
        torch.save({"state": self.state, "history": self.history,
                    "fingerprint": self.fingerprint}, Path(path))

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        doc = torch.load(Path(path), map_location="cpu", weights_only=False)
        return cls(doc["state"], doc["history"], doc["fingerprint"])
