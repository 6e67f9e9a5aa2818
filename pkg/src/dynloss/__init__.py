"""Dynamic-loss regression trainer: STDE + MSE blend with a decaying mix.

Core package behind the FastAPI service in dynloss.service and the CLI in
dynloss.cli.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, gradient_check
from .loss import LossSchedule, combined_loss, mse_loss, p_of_t, stde
from .metrics import EpochMetrics, mae, mse, qwk, r2, rescale_and_round

__all__ = [
    "Tensor",
    "gradient_check",
    "LossSchedule",
    "combined_loss",
    "mse_loss",
    "p_of_t",
    "stde",
    "EpochMetrics",
    "mae",
    "mse",
    "qwk",
    "r2",
    "rescale_and_round",
    "__version__",
]
