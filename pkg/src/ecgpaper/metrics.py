"""Training/evaluation mathematics: AUROC with midrank ties, macro averaging,
inverse-positive-rate class weights, weighted binary cross-entropy, the
cosine learning-rate multiplier, and hard-vote ensembling.

All functions are pure; the AUROC agrees exactly with a brute-force count
over positive/negative pairs because midranks make the two formulations
algebraically identical.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import IoFailure, SchemaViolation, SingleClass, ZeroPositives
from .waveform import LABEL_NAMES

PREDICTION_HEADER = ("id",) + LABEL_NAMES


@dataclass(frozen=True)
class ScoredPredictions:
    """Per-sample scores in [0, 1] aligned with binary truths, 5 labels."""

    ids: tuple[str, ...]
    scores: np.ndarray  # (n, 5) float64
    truths: np.ndarray  # (n, 5) int64

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        t = np.asarray(self.truths, dtype=np.int64)
        if s.ndim != 2 or s.shape[1] != 5 or t.shape != s.shape:
            raise ValueError("scores and truths must both be (n, 5)")
        if len(self.ids) != s.shape[0]:
            raise ValueError("ids must align with score rows")
        if not np.all(np.isfinite(s)) or s.min() < 0 or s.max() > 1:
            raise ValueError("scores must be finite and within [0, 1]")
        if not np.isin(t, (0, 1)).all():
            raise ValueError("truths must be binary")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "truths", t)


@dataclass(frozen=True)
class ClassWeights:
    """Positive-class weights, one per label, in the fixed label order."""

    weights: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.weights) != 5 or any(w <= 0 for w in self.weights):
            raise ValueError("need 5 positive weights")

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class VoteMatrix:
    """k models x n samples x 5 labels of binary votes."""

    votes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.votes, dtype=np.int64)
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[2] != 5:
            raise ValueError("votes must be (k >= 1, n, 5)")
        if not np.isin(v, (0, 1)).all():
            raise ValueError("votes must be binary")
        object.__setattr__(self, "votes", v)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score+ > score-) + 0.5 P(score+ = score-).

    Computed from rank sums with midrank tie handling, which matches the
    pairwise definition exactly (both reduce to the same half-integer count).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels must align")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("binary")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_label_auroc(preds: ScoredPredictions) -> dict[str, float]:
    out = {}
    for k, name in enumerate(LABEL_NAMES):
        try:
            out[name] = auroc(preds.scores[:, k], preds.truths[:, k])
        except SingleClass:
            raise SingleClass(name) from None
    return out


def macro_auroc(preds: ScoredPredictions) -> float:
    """Unweighted mean of the five per-label AUROCs."""
    values = per_label_auroc(preds)
    return float(np.mean([values[n] for n in LABEL_NAMES]))


def positive_weights(positive_counts, total: int) -> ClassWeights:
    """weight_k = total / count_k (the inverse positive rate)."""
    counts = list(positive_counts)
    if len(counts) != 5:
        raise ValueError("need 5 positive counts")
    if total <= 0:
        raise ValueError("total must be positive")
    weights = []
    for k, c in enumerate(counts):
        if c == 0:
            raise ZeroPositives(LABEL_NAMES[k])
        if not 0 < c <= total:
            raise ValueError(f"count for {LABEL_NAMES[k]} must be in (0, total]")
        weights.append(total / c)
    return ClassWeights(tuple(weights))


def weighted_bce(probs, labels, pos_weight=1.0, eps: float = 1e-7) -> float:
    """Mean of -[w y ln p + (1 - y) ln(1 - p)] with probabilities clamped
    to [eps, 1 - eps]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("probs and labels must have the same shape")
    w = np.asarray(pos_weight, dtype=np.float64)
    loss = -(w * y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss.mean())


def cosine_lambda(progress: float, num_cycles: float = 0.5) -> float:
    """Learning-rate multiplier 0.5 (1 + cos(2 pi num_cycles progress))."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    if num_cycles <= 0:
        raise ValueError("num_cycles must be positive")
    v = 0.5 * (1.0 + np.cos(2.0 * np.pi * num_cycles * progress))
    return float(min(1.0, max(0.0, v)))


def hard_vote(votes: VoteMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Majority predictions and vote-fraction scores.

    Prediction is 1 iff at least ceil((k + 1) / 2) of the k models vote 1,
    so even-k ties resolve to 0. Scores are votes / k, giving a ranking for
    AUROC over the ensemble.
    """
    v = votes.votes if isinstance(votes, VoteMatrix) else VoteMatrix(votes).votes
    k = v.shape[0]
    needed = k // 2 + 1  # == ceil((k + 1) / 2)
    counts = v.sum(axis=0)
    return (counts >= needed).astype(np.int64), counts / float(k)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) points for plotting, thresholds descending, with (0,0) and
    (1,1) endpoints. Tied scores collapse into single sweep points."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("binary")
    order = np.argsort(-s, kind="stable")
    sorted_y = y[order]
    tps = np.cumsum(sorted_y)
    fps = np.cumsum(1 - sorted_y)
    distinct = np.flatnonzero(np.diff(s[order])) if len(s) > 1 else np.array([], int)
    idx = np.append(distinct, len(s) - 1)
    tpr = np.concatenate([[0.0], tps[idx] / n_pos])
    fpr = np.concatenate([[0.0], fps[idx] / n_neg])
    return fpr, tpr


def write_predictions(path: str | Path, ids, scores: np.ndarray) -> None:
    """Prediction CSV: header id,MI,AF,HYP,CD,STTC with scores in [0, 1]."""
    scores = np.asarray(scores, dtype=np.float64)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_HEADER)
    for i, entry_id in enumerate(ids):
        writer.writerow([entry_id] + [repr(float(v)) for v in scores[i]])
    try:
        Path(path).write_text(buf.getvalue(), "utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write predictions {path}: {e}") from e


def read_predictions(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read the documented prediction CSV into (ids, (n, 5) scores)."""
    try:
        text = Path(path).read_text("utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read predictions {path}: {e}") from e
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise SchemaViolation("/", "prediction CSV is empty") from None
    if header != PREDICTION_HEADER:
        raise SchemaViolation("/0", f"header must be {','.join(PREDICTION_HEADER)}")
    ids: list[str] = []
    rows: list[list[float]] = []
    for i, row in enumerate(reader):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 6:
            raise SchemaViolation(f"/{i + 1}", f"expected 6 cells, got {len(row)}")
        ids.append(row[0])
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            raise SchemaViolation(f"/{i + 1}", "scores must be numeric") from None
        if any(not np.isfinite(v) or v < 0 or v > 1 for v in vals):
            raise SchemaViolation(f"/{i + 1}", "scores must lie in [0, 1]")
        rows.append(vals)
    return tuple(ids), np.asarray(rows, dtype=np.float64).reshape(len(rows), 5)
