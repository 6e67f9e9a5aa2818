"""Evaluation metrics: quadratic weighted kappa, MSE, MAE, r2, stds.

QWK follows the standard Cohen form with quadratic weights
w_ij = (i - j)^2 / (R - 1)^2, O the normalized confusion matrix and E the
outer product of the two marginals. The degenerate case where both raters
are constant and equal is pinned to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

METRICS_CSV_HEADER = "epoch,qwk,mse,mae,r2,pred_std,target_std,p"


@dataclass
class EpochMetrics:
    """Per-epoch evaluation record; one CSV row in the run log."""

    epoch: int
    qwk: float
    mse: float
    mae: float
    r2: float
    pred_std: float
    target_std: float
    p: float

    def csv_row(self) -> str:
        return ",".join(repr(getattr(self, f.name)) if f.name != "epoch" else str(self.epoch)
                        for f in fields(self))


def qwk(truth: Sequence[int], pred: Sequence[int], min_score: int, max_score: int) -> float:
    """Quadratic weighted kappa between two integer raters on [min, max]."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.size == 0:
        raise ValueError("qwk of empty input")
    if truth.shape != pred.shape:
        raise ValueError(f"qwk length mismatch: {truth.shape} vs {pred.shape}")
    r = max_score - min_score + 1
    if r < 2:
        raise ValueError(f"qwk needs a score range of >= 2 values, got [{min_score}, {max_score}]")
    for name, arr in (("truth", truth), ("pred", pred)):
        if arr.min() < min_score or arr.max() > max_score:
            raise ValueError(f"qwk {name} values outside [{min_score}, {max_score}]")

    observed = np.zeros((r, r), dtype=np.float64)
    np.add.at(observed, (truth - min_score, pred - min_score), 1.0)
    observed /= truth.size

    idx = np.arange(r, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (r - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))

    denom = float(np.sum(weights * expected))
    numer = float(np.sum(weights * observed))
    if denom == 0.0:
        # both raters constant and equal: perfect degenerate agreement
        return 0.0
    return 1.0 - numer / denom


def mse(truth: Sequence[float], pred: Sequence[float]) -> float:
    truth, pred = _paired(truth, pred)
    return float(np.mean((pred - truth) ** 2))


def mae(truth: Sequence[float], pred: Sequence[float]) -> float:
    truth, pred = _paired(truth, pred)
    return float(np.mean(np.abs(pred - truth)))


def r2(truth: Sequence[float], pred: Sequence[float]) -> float:
    """Conventional coefficient of determination, 1 - SS_res / SS_tot."""
    truth, pred = _paired(truth, pred)
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined for constant truth")
    ss_res = float(np.sum((truth - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def sample_std(values: Sequence[float]) -> float:
    """Sample (n-1) standard deviation; 0.0 for a single value."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(np.std(arr, ddof=1))


def _paired(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.size == 0:
        raise ValueError("empty metric input")
    if truth.shape != pred.shape:
        raise ValueError(f"metric length mismatch: {truth.shape} vs {pred.shape}")
    return truth, pred


def rescale_and_round(pred_norm: float, min_score: int, max_score: int) -> int:
    """Map a normalized prediction in [0, 1] back to an integer score.

    Rounds half away from zero and clamps to the score range.
    """
    if not 0.0 <= pred_norm <= 1.0 or not math.isfinite(pred_norm):
        raise ValueError(f"normalized prediction outside [0, 1]: {pred_norm}")
    value = min_score + pred_norm * (max_score - min_score)
    rounded = int(math.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)
    return max(min_score, min(max_score, rounded))
