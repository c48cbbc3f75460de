"""Two-stage training loop, early stopping, and ensemble prediction."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR

from ecgpaper import auroc, cosine_lambda, derive_seed, hard_vote, write_predictions

from .config import Checkpoint, TrainConfig
from .data import ImageSet, class_weights, load_dataset
from .errors import Divergence, EmptyPool, MissingFolds, ShapeMismatch
from .model import SmallConvNet

_SEED_MASK = (1 << 63) - 1
_EVAL_BATCH = 32


def bce_loss(logits: torch.Tensor, targets: torch.Tensor,
             pos_weight: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Mean of -[w y ln p + (1 - y) ln(1 - p)] on clamped sigmoid outputs.

    Differentiable mirror of the evaluator's weighted_bce, so logged batch
    losses can be checked against it on the same probabilities.
    """
    p = torch.sigmoid(logits).clamp(eps, 1.0 - eps)
    w = pos_weight.to(p.dtype)
    return -(w * targets * torch.log(p)
             + (1.0 - targets) * torch.log1p(-p)).mean()


def lenient_macro_auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-label AUROC, skipping labels with a single truth class.

    Toy pools rarely exercise all five labels; degenerate columns carry no
    ranking information, so they are excluded rather than raising. Returns
    0.5 when nothing varies.
    """
    values = []
    for j in range(labels.shape[1]):
        col = labels[:, j]
        if col.min() == col.max():
            continue
        values.append(auroc(scores[:, j], col))
    return float(np.mean(values)) if values else 0.5


@dataclass
class EarlyStopper:
    """Stops after `patience` consecutive epochs without improvement."""

    patience: int
    mode: str = "max"
    best: float = field(init=False)
    best_epoch: int = field(default=0, init=False)
    stale: int = field(default=0, init=False)

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.mode not in ("max", "min"):
            raise ValueError("mode must be 'max' or 'min'")
        self.best = -math.inf if self.mode == "max" else math.inf

    def update(self, value: float, epoch: int) -> bool:
        improved = value > self.best if self.mode == "max" else value < self.best
        if improved:
            self.best, self.best_epoch, self.stale = value, epoch, 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _forward_probs(model: SmallConvNet, images: torch.Tensor) -> np.ndarray:
    model.eval()
    chunks = []
    with torch.no_grad():
        for i in range(0, len(images), _EVAL_BATCH):
            chunks.append(torch.sigmoid(model(images[i:i + _EVAL_BATCH])))
    return torch.cat(chunks).numpy().astype(np.float64)


def fit(model: SmallConvNet, train: tuple[torch.Tensor, torch.Tensor],
        val: tuple[torch.Tensor, torch.Tensor], cfg: TrainConfig,
        epochs: int, base_lr: float, shuffle_seed: int) -> dict:
    """Train with weighted BCE, AdamW, a cosine schedule, and early stopping.

    The learning rate for optimiser step t (0-based, out of the planned
    total) is base_lr * cosine_lambda(t / total). Leaves the model at the
    best-validation weights and returns the history.
    """
    x_train, y_train = train
    x_val, y_val = val
    weights = class_weights(y_train)
    opt = torch.optim.AdamW(model.parameters(), lr=base_lr,
                            weight_decay=cfg.weight_decay)
    n = len(x_train)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = epochs * per_epoch
    sched = LambdaLR(opt, lambda t: cosine_lambda(min(t / total, 1.0),
                                                  cfg.num_cycles))
    monitor_max = cfg.monitor == "auroc"
    stopper = EarlyStopper(cfg.patience, "max" if monitor_max else "min")
    history: dict = {"train_loss": [], "val_metric": [], "val_loss": [],
                     "lr": [], "total_steps": total, "max_epochs": epochs,
                     "monitor": cfg.monitor, "best_epoch": 0,
                     "stopped_epoch": 0}
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    rng = np.random.default_rng(shuffle_seed)
    y_val_np = y_val.numpy()

    for epoch in range(1, epochs + 1):
        model.train()
        perm = rng.permutation(n)
        losses = []
        for i in range(0, n, cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            history["lr"].append(float(opt.param_groups[0]["lr"]))
            loss = bce_loss(model(x_train[idx]), y_train[idx], weights)
            if not torch.isfinite(loss):
                raise Divergence(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            losses.append(loss.item())
        history["train_loss"].append(float(np.mean(losses)))

        probs = _forward_probs(model, x_val)
        if not np.all(np.isfinite(probs)):
            raise Divergence(f"non-finite validation outputs at epoch {epoch}")
        val_loss = -float(np.mean(
            weights.numpy() * y_val_np * np.log(np.clip(probs, 1e-7, 1 - 1e-7))
            + (1.0 - y_val_np) * np.log1p(-np.clip(probs, 1e-7, 1 - 1e-7))))
        metric = lenient_macro_auroc(probs, y_val_np) if monitor_max else val_loss
        history["val_metric"].append(float(metric))
        history["val_loss"].append(val_loss)
        should_stop = stopper.update(metric, epoch)
        if stopper.best_epoch == epoch:
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}
        history["stopped_epoch"] = epoch
        if should_stop:
            break

    history["best_epoch"] = stopper.best_epoch
    model.load_state_dict(best_state)
    return history


def train_stage1(pool_manifest: str | Path, cfg: TrainConfig) -> Checkpoint:
    """Fine-tune on the broad pool, holding out a seeded quarter of the
    images for early stopping. Returns the best-validation checkpoint."""
    data = load_dataset(pool_manifest)
    if len(data) < 4:
        raise EmptyPool("pool needs at least 4 entries to hold out validation")
    # a seeded shuffle avoids aliasing with any label layout in the manifest
    perm = np.random.default_rng(
        derive_seed(cfg.seed, "stage1-holdout")).permutation(len(data))
    val_idx = torch.from_numpy(np.sort(perm[::4]))
    train_idx = torch.from_numpy(np.sort(perm[np.arange(len(perm)) % 4 != 0]))
    torch.manual_seed(cfg.seed & _SEED_MASK)
    model = SmallConvNet()
    history = fit(model,
                   (data.images[train_idx], data.labels[train_idx]),
                   (data.images[val_idx], data.labels[val_idx]),
                   cfg, cfg.stage1_epochs, cfg.lr,
                   shuffle_seed=derive_seed(cfg.seed, "stage1"))
    return Checkpoint(model.state_dict(), history, cfg.fingerprint())


def train_stage2(checkpoint: Checkpoint | None, manifest: str | Path,
                 cfg: TrainConfig) -> list[Checkpoint]:
    """Cross-validated fine-tuning: one model per fold, initialised from the
    stage-one checkpoint (or randomly when checkpoint is None), trained on
    the other folds at lr * stage2_lr_scale and validated on its own fold."""
    data = load_dataset(manifest)
    if any(f is None for f in data.folds):
        raise MissingFolds("every entry needs a fold assignment")
    fold_ids = sorted(set(data.folds))
    if len(fold_ids) < 2:
        raise MissingFolds("need at least two folds for cross-validation")
    folds = np.asarray(data.folds)

    out = []
    for f in fold_ids:
        torch.manual_seed(derive_seed(cfg.seed, f"fold{f}") & _SEED_MASK)
        model = SmallConvNet()
        if checkpoint is not None:
            try:
                model.load_state_dict(checkpoint.state)
            except RuntimeError as e:
                raise ShapeMismatch(f"checkpoint does not fit the model: {e}") from e
        train_idx = torch.from_numpy(np.flatnonzero(folds != f))
        val_idx = torch.from_numpy(np.flatnonzero(folds == f))
        history = fit(model,
                       (data.images[train_idx], data.labels[train_idx]),
                       (data.images[val_idx], data.labels[val_idx]),
                       cfg, cfg.stage2_epochs, cfg.lr * cfg.stage2_lr_scale,
                       shuffle_seed=derive_seed(cfg.seed, f"stage2-fold{f}"))
        history["fold"] = int(f)
        history["val_ids"] = [data.ids[i] for i in val_idx.tolist()]
        out.append(Checkpoint(model.state_dict(), history, cfg.fingerprint()))
    return out


def predict_ensemble(checkpoints: Sequence[Checkpoint], manifest: str | Path,
                     out_dir: str | Path, threshold: float = 0.5
                     ) -> tuple[Path, Path]:
    """Hard-vote the checkpoints over a manifest.

    Writes votes.csv (vote fractions, the ensemble's score column) and
    mean_probs.csv (mean sigmoid probabilities) in the evaluator's
    prediction-CSV format; returns both paths.
    """
    if len(checkpoints) == 0:
        raise ShapeMismatch("need at least one checkpoint")
    data = load_dataset(manifest)
    stack = []
    for ck in checkpoints:
        model = SmallConvNet()
        try:
            model.load_state_dict(ck.state)
        except RuntimeError as e:
            raise ShapeMismatch(f"checkpoint does not fit the model: {e}") from e
        stack.append(_forward_probs(model, data.images))
    probs = np.stack(stack)  # (k, n, 5)
    votes = (probs >= threshold).astype(np.int64)
    _, fractions = hard_vote(votes)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    votes_path = out / "votes.csv"
    mean_path = out / "mean_probs.csv"
    write_predictions(votes_path, data.ids, fractions)
    write_predictions(mean_path, data.ids, probs.mean(axis=0))
    return votes_path, mean_path


def write_history(checkpoint: Checkpoint, path: str | Path) -> None:
    """Dump a checkpoint's training history as JSON."""
    Path(path).write_text(json.dumps(checkpoint.history, indent=2), "utf-8")
