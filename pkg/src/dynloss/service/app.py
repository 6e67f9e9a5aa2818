"""FastAPI service wrapping the training engine.

Endpoints mirror the CLI subcommands: train, evaluate, schedule,
synth-data, qwk, plus a scoring endpoint for serving checkpoints. Error
responses carry a machine-readable kind (usage | data | internal) that
the thin client maps to exit codes.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from .. import data as data_mod
from .. import engine, metrics, nn
from ..data import SynthSpec
from ..errors import DataError, UsageError
from ..loss import LossSchedule
from . import schemas


def _error_response(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message, "kind": kind})


def _epoch_model(m: metrics.EpochMetrics) -> schemas.EpochMetricsModel:
    return schemas.EpochMetricsModel(
        epoch=m.epoch, qwk=m.qwk, mse=m.mse, mae=m.mae,
        r2=None if math.isnan(m.r2) else m.r2,
        pred_std=m.pred_std, target_std=m.target_std, p=m.p,
    )


def _run_config(req: schemas.TrainRequest) -> engine.RunConfig:
    synth = None
    if req.synthetic is not None:
        s = req.synthetic
        synth = SynthSpec(
            n=s.n, mean=s.mean, std=s.std, skew=s.skew,
            seed=req.seed if s.seed is None else s.seed,
            signal_frac=s.signal_frac, min_len=s.min_len, max_len=s.max_len,
        )
    return engine.RunConfig(
        mode=req.mode, data_path=req.data_path, prompt_id=req.prompt_id,
        synthetic=synth, embed_dim=req.embed_dim, hidden_dim=req.hidden_dim,
        max_seq_len=req.max_seq_len, vocab_size=req.vocab_size, min_freq=req.min_freq,
        optimizer=req.optimizer, learning_rate=req.learning_rate, epochs=req.epochs,
        batch_size=req.batch_size, loss_a=req.schedule.a, loss_b=req.schedule.b,
        loss_c=req.schedule.c, loss_unit=req.schedule.unit,
        population_std=req.population_std, clip_norm=req.clip_norm,
        train_frac=req.train_frac, drop_undersized=req.drop_undersized,
        eval_threads=req.eval_threads, checkpoint_every=req.checkpoint_every,
        seed=req.seed, out_dir=req.out_dir,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="dynloss", version=__version__)

    @app.exception_handler(UsageError)
    async def usage_handler(request: Request, exc: UsageError):
        return _error_response(400, "usage", str(exc))

    @app.exception_handler(ValueError)
    async def value_handler(request: Request, exc: ValueError):
        return _error_response(400, "usage", str(exc))

    @app.exception_handler(DataError)
    async def data_handler(request: Request, exc: DataError):
        return _error_response(422, "data", str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        started = time.perf_counter()
        log = engine.train(_run_config(req))
        return schemas.TrainResponse(
            epochs=[_epoch_model(m) for m in log.epochs],
            diverged=log.diverged,
            divergence_epoch=log.divergence_epoch,
            divergence_batch=log.divergence_batch,
            checkpoint=log.checkpoint_path,
            metrics_csv=log.metrics_path,
            vocab=log.vocab_path,
            skipped_rows=log.skipped_rows,
            wall_clock_seconds=time.perf_counter() - started,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        params = nn.load_checkpoint(req.checkpoint)
        vocab = data_mod.Vocabulary.load(req.vocab)
        prompt = data_mod.prompt_spec(req.prompt_id)
        samples, skipped = data_mod.load_asap_tsv(req.data_path, prompt, vocab)
        if not samples:
            raise DataError(f"{req.data_path}: no usable rows for prompt {req.prompt_id}")
        record = engine.evaluate(params, samples, prompt, threads=req.threads)
        return schemas.EvaluateResponse(
            metrics=_epoch_model(record), n_samples=len(samples), skipped_rows=skipped)

    @app.post("/schedule", response_model=schemas.ScheduleResponse)
    def schedule(req: schemas.ScheduleRequest):
        sched = LossSchedule(a=req.a, b=req.b, c=req.c, total=1)
        rows = engine.emit_schedule(sched, req.resolution)
        csv_text = engine.schedule_csv(rows)
        if req.out is not None:
            Path(req.out).parent.mkdir(parents=True, exist_ok=True)
            Path(req.out).write_text(csv_text, encoding="utf-8")
        return schemas.ScheduleResponse(rows=rows, csv=csv_text, out=req.out)

    @app.post("/synth-data", response_model=schemas.SynthDataResponse)
    def synth_data(req: schemas.SynthDataRequest):
        spec = SynthSpec(n=req.n, mean=req.mean, std=req.std, skew=req.skew,
                         seed=req.seed, signal_frac=req.signal_frac,
                         min_len=req.min_len, max_len=req.max_len)
        rows = data_mod.generate_imbalanced_rows(spec)
        Path(req.out).parent.mkdir(parents=True, exist_ok=True)
        data_mod.write_asap_tsv(req.out, rows)
        targets = [r.target for r in rows]
        return schemas.SynthDataResponse(
            out=req.out, rows=len(rows),
            target_mean=sum(targets) / len(targets),
            target_std=metrics.sample_std(targets),
        )

    @app.post("/qwk", response_model=schemas.QwkResponse)
    def qwk_endpoint(req: schemas.QwkRequest):
        truth, pred = data_mod.read_score_pairs(req.path, req.truth_col, req.pred_col)
        lo = min(min(truth), min(pred)) if req.min_score is None else req.min_score
        hi = max(max(truth), max(pred)) if req.max_score is None else req.max_score
        if hi <= lo:  # widen a degenerate inferred range so kappa is defined
            hi = lo + 1
        return schemas.QwkResponse(
            qwk=metrics.qwk(truth, pred, lo, hi), n_pairs=len(truth),
            min_score=lo, max_score=hi,
        )

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest):
        params = nn.load_checkpoint(req.checkpoint)
        vocab = data_mod.Vocabulary.load(req.vocab)
        if not req.texts:
            raise UsageError("score request needs at least one text")
        normalized = [
            nn.predict(params, data_mod.encode(vocab, text)).item()
            for text in req.texts
        ]
        scores = None
        if req.prompt_id is not None:
            prompt = data_mod.prompt_spec(req.prompt_id)
            scores = [prompt.denormalize(v) for v in normalized]
        return schemas.ScoreResponse(normalized=normalized, scores=scores)

    return app


app = create_app()
