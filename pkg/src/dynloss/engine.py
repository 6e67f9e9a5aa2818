"""Training and evaluation harness for the dynamic-loss experiments.

A run loads one prompt (TSV or synthetic), fits a vocabulary on the
training split, trains the LSTM scorer with the scheduled STDE+MSE blend
(or pure MSE), evaluates after every epoch, and persists metrics,
vocabulary, and checkpoints under the run's output directory. Runs are
deterministic functions of their config, including the seed.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff
from . import data as data_mod
from . import loss as loss_mod
from . import metrics as metrics_mod
from . import nn
from .autodiff import Tensor
from .data import PromptSpec, Sample, SynthSpec
from .errors import DataError, DivergedError
from .loss import LossSchedule
from .metrics import METRICS_CSV_HEADER, EpochMetrics
from .nn import ModelParams

DIVERGENCE_CEILING = 1e6

MODES = ("dynamic", "mse_only")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "dynamic"
    data_path: str | None = None
    prompt_id: int = 1
    synthetic: SynthSpec | None = None
    embed_dim: int = 24
    hidden_dim: int = 32
    max_seq_len: int = 512
    vocab_size: int = 4000
    min_freq: int = 2
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    loss_a: float = loss_mod.DEFAULT_A
    loss_b: float = loss_mod.DEFAULT_B
    loss_c: float = loss_mod.DEFAULT_C
    loss_unit: str = "epoch"
    population_std: bool = False
    clip_norm: float = 5.0
    train_frac: float = 0.9
    drop_undersized: bool = False
    eval_threads: int = 1
    checkpoint_every: int = 0
    seed: int = 0
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.eval_threads < 1:
            raise ValueError(f"eval_threads must be >= 1, got {self.eval_threads}")
        if self.data_path is None and self.synthetic is None:
            raise ValueError("config needs a data_path or a synthetic spec")


@dataclass
class RunLog:
    config: RunConfig
    epochs: list[EpochMetrics] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    diverged: bool = False
    divergence_epoch: int | None = None
    divergence_batch: int | None = None
    checkpoint_path: str | None = None
    metrics_path: str | None = None
    vocab_path: str | None = None
    skipped_rows: list[tuple[int, str]] = field(default_factory=list)


class Adam:
    """Adam with the standard moment constants (0.9, 0.999, 1e-8)."""

    def __init__(self, tensors: dict[str, Tensor], lr: float):
        self.tensors = tensors
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in tensors.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, tensor in self.tensors.items():
            g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            tensor.data = tensor.data - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


class SGD:
    def __init__(self, tensors: dict[str, Tensor], lr: float):
        self.tensors = tensors
        self.lr = lr

    def step(self) -> None:
        for tensor in self.tensors.values():
            if tensor.grad is not None:
                tensor.data = tensor.data - self.lr * tensor.grad


def _make_optimizer(cfg: RunConfig, params: ModelParams):
    cls = Adam if cfg.optimizer == "adam" else SGD
    return cls(params.named_tensors(), cfg.learning_rate)


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients down to a global L2 norm; returns the raw norm."""
    grads = [t.grad for t in params.named_tensors().values() if t.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads))) if grads else 0.0
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads:
            g *= factor
    return total


def evaluate(params: ModelParams, eval_set: Sequence[Sample], prompt: PromptSpec,
             threads: int = 1, epoch: int = 0, p: float = 0.0) -> EpochMetrics:
    """Normalized-space error metrics plus integer-space QWK on a held-out set."""
    if not eval_set:
        raise ValueError("evaluate on empty eval set")
    preds = [0.0] * len(eval_set)

    def run_one(i: int) -> None:
        preds[i] = nn.predict(params, eval_set[i].token_ids).item()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_one, range(len(eval_set))))
    else:
        for i in range(len(eval_set)):
            run_one(i)

    truth_norm = [s.target for s in eval_set]
    truth_int = [s.score for s in eval_set]
    pred_int = [metrics_mod.rescale_and_round(v, prompt.min_score, prompt.max_score) for v in preds]
    constant_truth = len(set(truth_norm)) < 2
    return EpochMetrics(
        epoch=epoch,
        qwk=metrics_mod.qwk(truth_int, pred_int, prompt.min_score, prompt.max_score),
        mse=metrics_mod.mse(truth_norm, preds),
        mae=metrics_mod.mae(truth_norm, preds),
        r2=float("nan") if constant_truth else metrics_mod.r2(truth_norm, preds),
        pred_std=metrics_mod.sample_std(preds),
        target_std=metrics_mod.sample_std(truth_norm),
        p=p,
    )


def emit_schedule(sched: LossSchedule, resolution: int) -> list[tuple[float, float]]:
    """(fraction, p) rows at uniform fractions, endpoints included."""
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    rows = []
    for k in range(resolution):
        fraction = k / (resolution - 1)
        rows.append((fraction, loss_mod.p_of_fraction(sched.a, sched.b, sched.c, fraction)))
    return rows


def schedule_csv(rows: Sequence[tuple[float, float]]) -> str:
    return "fraction,p\n" + "".join(f"{repr(f)},{repr(p)}\n" for f, p in rows)


def metrics_csv(epochs: Sequence[EpochMetrics]) -> str:
    return METRICS_CSV_HEADER + "\n" + "".join(m.csv_row() + "\n" for m in epochs)


def _load_rows(cfg: RunConfig) -> tuple[list[data_mod.EssayRow], list[tuple[int, str]], PromptSpec]:
    if cfg.data_path is not None:
        prompt = data_mod.prompt_spec(cfg.prompt_id)
        rows, skipped = data_mod.read_asap_rows(cfg.data_path, prompt)
        if len(rows) < 2:
            raise DataError(f"{cfg.data_path}: only {len(rows)} usable rows for prompt {cfg.prompt_id}")
        return rows, skipped, prompt
    rows = data_mod.generate_imbalanced_rows(cfg.synthetic)
    return rows, [], data_mod.SYNTH_PROMPT


def _batch_tensors(params: ModelParams, batch: Sequence[Sample]) -> tuple[Tensor, Tensor]:
    preds = [nn.predict(params, s.token_ids) for s in batch]
    return autodiff.concat(preds), Tensor([s.target for s in batch])


def train(cfg: RunConfig) -> RunLog:
    """Run one training job end to end; records divergence instead of raising."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(config=cfg)

    rows, skipped, prompt = _load_rows(cfg)
    log.skipped_rows = skipped
    train_rows, eval_rows = data_mod.split(rows, cfg.train_frac, cfg.seed)
    if not eval_rows:
        raise DataError("evaluation split is empty; lower train_frac or add data")
    vocab = data_mod.build_vocab((r.text for r in train_rows), cfg.vocab_size, cfg.min_freq)
    train_samples = data_mod.rows_to_samples(vocab, train_rows)
    eval_samples = data_mod.rows_to_samples(vocab, eval_rows)

    model_cfg = nn.ModelConfig(
        vocab_size=len(vocab), embed_dim=cfg.embed_dim, hidden_dim=cfg.hidden_dim,
        max_seq_len=cfg.max_seq_len, seed=cfg.seed,
    )
    params = nn.init_params(model_cfg)
    optimizer = _make_optimizer(cfg, params)

    batches_per_epoch = len(data_mod.batches(train_samples, cfg.batch_size, cfg.seed, 0, cfg.drop_undersized))
    total = cfg.epochs if cfg.loss_unit == "epoch" else cfg.epochs * batches_per_epoch
    sched = LossSchedule(a=cfg.loss_a, b=cfg.loss_b, c=cfg.loss_c, total=total, unit=cfg.loss_unit)

    vocab_path = out_dir / "vocab.json"
    vocab.save(vocab_path)
    log.vocab_path = str(vocab_path)
    (out_dir / "run_config.json").write_text(json.dumps(asdict(cfg), indent=2), encoding="utf-8")

    global_step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            p_epoch = loss_mod.p_of_t(sched, epoch) if cfg.loss_unit == "epoch" else 0.0
            p_used = 0.0
            for batch_idx, batch in enumerate(
                    data_mod.batches(train_samples, cfg.batch_size, cfg.seed, epoch, cfg.drop_undersized)):
                global_step += 1
                if cfg.mode == "mse_only":
                    p_used = 0.0
                elif cfg.loss_unit == "step":
                    p_used = loss_mod.p_of_t(sched, global_step)
                else:
                    p_used = p_epoch
                preds, targets = _batch_tensors(params, batch)
                report = loss_mod.combined_loss(preds, targets, p_used, population=cfg.population_std)
                value = report.total.item()
                if not np.isfinite(value) or value > DIVERGENCE_CEILING:
                    raise DivergedError(
                        f"loss {value} at epoch {epoch} batch {batch_idx}", epoch, batch_idx)
                params.zero_grad()
                report.total.backward()
                clip_gradients(params, cfg.clip_norm)
                optimizer.step()

            record = evaluate(params, eval_samples, prompt,
                              threads=cfg.eval_threads, epoch=epoch, p=p_used)
            log.epochs.append(record)
            log.wall_clock.append(time.perf_counter() - started)
            if cfg.checkpoint_every > 0 and epoch % cfg.checkpoint_every == 0:
                nn.save_checkpoint(out_dir / f"epoch_{epoch}.ckpt", params)
    except DivergedError as exc:
        log.diverged = True
        log.divergence_epoch = exc.epoch
        log.divergence_batch = exc.batch

    if not log.diverged:
        final_path = out_dir / f"epoch_{cfg.epochs}.ckpt"
        nn.save_checkpoint(final_path, params)
        log.checkpoint_path = str(final_path)

    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(metrics_csv(log.epochs), encoding="utf-8")
    log.metrics_path = str(metrics_path)
    return log
