"""Batch losses and the scheduled blend that prevents mean collapse.

The training loss is a weighted sum p * STDE + (1 - p) * MSE, where STDE
is the absolute difference between the sample standard deviations of the
predictions and the targets. The mixing weight p holds at its initial
value for the first fraction b of training and then decays exponentially
at rate c, clamped from above by a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff
from .autodiff import Tensor

DEFAULT_A = 1.0
DEFAULT_B = 0.15
DEFAULT_C = 1.1


@dataclass(frozen=True)
class LossSchedule:
    """Clamped exponential decay of the mixing weight p over T units.

    a is the plateau value (a >= 0; zero degenerates the blend to pure
    MSE), b the hold fraction, c the decay rate. unit selects whether t
    counts epochs or optimizer steps.
    """

    a: float = DEFAULT_A
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    total: int = 1
    unit: str = "epoch"

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"schedule a must be >= 0, got {self.a}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"schedule b must be in [0, 1], got {self.b}")
        if self.c < 0:
            raise ValueError(f"schedule c must be >= 0, got {self.c}")
        if self.total < 1:
            raise ValueError(f"schedule total must be >= 1, got {self.total}")
        if self.unit not in ("epoch", "step"):
            raise ValueError(f"schedule unit must be 'epoch' or 'step', got {self.unit!r}")


def p_of_fraction(a: float, b: float, c: float, fraction: float) -> float:
    """Mixing weight at a training-progress fraction in [0, 1]."""
    return min(a, a * math.exp(-c * (fraction - b)))


def p_of_t(sched: LossSchedule, t: int) -> float:
    """Mixing weight at integer time t in [0, total]."""
    if t < 0 or t > sched.total:
        raise ValueError(f"t must be in [0, {sched.total}], got {t}")
    return p_of_fraction(sched.a, sched.b, sched.c, t / sched.total)


def _sample_std(t: Tensor, population: bool) -> Tensor:
    n = t.size
    centered = t - t.mean()
    denom = n if population else n - 1
    var = autodiff.scale((centered * centered).sum(), 1.0 / denom)
    return var.sqrt()


def stde(predictions: Tensor, targets: Tensor, population: bool = False) -> Tensor:
    """|std(predictions) - std(targets)| over one batch.

    Sample (n-1) standard deviation by default; population=True divides
    by n instead. Differentiable through predictions; the gradient stays
    finite when the predictions collapse to a constant (the sqrt backward
    rule floors the root, see autodiff.SQRT_GRAD_FLOOR).
    """
    _check_lengths("stde", predictions, targets)
    if predictions.size < 2:
        raise ValueError(f"stde needs batch size >= 2, got {predictions.size}")
    return (_sample_std(predictions, population) - _sample_std(targets, population)).abs()


def mse_loss(predictions: Tensor, targets: Tensor) -> Tensor:
    """Mean squared difference over the batch."""
    _check_lengths("mse_loss", predictions, targets)
    if predictions.size == 0:
        raise ValueError("mse_loss of empty batch")
    diff = predictions - targets
    return (diff * diff).mean()


def _check_lengths(op: str, predictions: Tensor, targets: Tensor) -> None:
    if predictions.shape != targets.shape:
        raise ValueError(f"{op} length mismatch: {predictions.shape} vs {targets.shape}")


@dataclass
class BatchLossReport:
    """One batch's blended loss with its parts; total carries the graph."""

    total: Tensor
    mse_part: float
    stde_part: float
    p_used: float


def combined_loss(predictions: Tensor, targets: Tensor, p: float,
                  population: bool = False) -> BatchLossReport:
    """p * STDE + (1 - p) * MSE with gradients flowing through both parts."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight p must be in [0, 1], got {p}")
    stde_part = stde(predictions, targets, population=population)
    mse_part = mse_loss(predictions, targets)
    total = autodiff.scale(stde_part, p) + autodiff.scale(mse_part, 1.0 - p)
    return BatchLossReport(
        total=total,
        mse_part=mse_part.item(),
        stde_part=stde_part.item(),
        p_used=p,
    )
