import math
from pathlib import Path

import numpy as np
import pytest

from dynloss import engine, loss as loss_mod, nn
from dynloss.autodiff import Tensor
from dynloss.data import SynthSpec, PromptSpec, Sample
from dynloss.engine import (
    Adam,
    SGD,
    RunConfig,
    clip_gradients,
    emit_schedule,
    evaluate,
    metrics_csv,
    schedule_csv,
    train,
)
from dynloss.loss import LossSchedule, p_of_t


def _tiny_config(tmp_path, **overrides):
    base = dict(
        mode="dynamic", data_path=None,
        synthetic=SynthSpec(n=60, seed=5, min_len=6, max_len=10),
        embed_dim=6, hidden_dim=6, vocab_size=60, min_freq=1,
        epochs=2, batch_size=8, seed=5, out_dir=str(tmp_path / "run"),
    )
    base.update(overrides)
    return RunConfig(**base)


PROMPT = PromptSpec(1, 2, 12)


def _fake_eval_set(targets):
    return [Sample(token_ids=[i + 1], target=t, score=PROMPT.denormalize(t), prompt_id=1)
            for i, t in enumerate(targets)]


def test_evaluate_exact_predictions(monkeypatch):
    eval_set = _fake_eval_set([0.0, 0.3, 0.6, 1.0])
    lookup = {tuple(s.token_ids): s.target for s in eval_set}
    monkeypatch.setattr(engine.nn, "predict",
                        lambda params, ids: Tensor(lookup[tuple(ids)]))
    m = evaluate(None, eval_set, PROMPT, epoch=4, p=0.5)
    assert m.qwk == 1.0
    assert m.mse == 0.0 and m.mae == 0.0
    assert m.r2 == 1.0
    assert m.epoch == 4 and m.p == 0.5


def test_evaluate_constant_predictor(monkeypatch):
    eval_set = _fake_eval_set([0.0, 0.3, 0.6, 1.0])
    monkeypatch.setattr(engine.nn, "predict", lambda params, ids: Tensor(0.45))
    m = evaluate(None, eval_set, PROMPT)
    assert m.qwk == pytest.approx(0.0, abs=1e-12)
    assert m.pred_std == 0.0


def test_evaluate_constant_truth_marks_r2_undefined(monkeypatch):
    eval_set = _fake_eval_set([0.5, 0.5, 0.5])
    monkeypatch.setattr(engine.nn, "predict", lambda params, ids: Tensor(0.4))
    m = evaluate(None, eval_set, PROMPT)
    assert math.isnan(m.r2)
    assert m.mse == pytest.approx(0.01, abs=1e-12)


def test_evaluate_thread_fanout_matches_serial(monkeypatch):
    rng = np.random.default_rng(3)
    eval_set = _fake_eval_set(rng.uniform(0, 1, size=17).round(2).tolist())
    monkeypatch.setattr(engine.nn, "predict",
                        lambda params, ids: Tensor(0.1 + 0.013 * ids[0]))
    serial = evaluate(None, eval_set, PROMPT, threads=1)
    fanned = evaluate(None, eval_set, PROMPT, threads=4)
    assert serial == fanned


def test_evaluate_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        evaluate(None, [], PROMPT)


def test_adam_and_sgd_descend_quadratic():
    for cls in (Adam, SGD):
        x = Tensor(4.0, requires_grad=True)
        opt = cls({"x": x}, lr=0.1)
        for _ in range(200):
            x.zero_grad()
            (x * x).backward()
            opt.step()
        assert abs(float(x.data)) < 0.1, cls.__name__


def test_clip_gradients_scales_to_max_norm():
    a = Tensor([3.0, 4.0], requires_grad=True)
    a.grad = np.array([3.0, 4.0])
    params = nn.init_params(nn.ModelConfig(vocab_size=3, embed_dim=2, hidden_dim=2, seed=0))
    tensors = params.named_tensors()
    for t in tensors.values():
        t.grad = np.zeros_like(t.data)
    tensors["head_weight"].grad = np.array([3.0, 4.0])
    raw = clip_gradients(params, 1.0)
    assert raw == pytest.approx(5.0)
    assert np.allclose(tensors["head_weight"].grad, [0.6, 0.8])
    # 0 disables clipping
    tensors["head_weight"].grad = np.array([3.0, 4.0])
    clip_gradients(params, 0.0)
    assert np.allclose(tensors["head_weight"].grad, [3.0, 4.0])


def test_emit_schedule_endpoints_match_p_of_t():
    sched = LossSchedule(a=1.0, b=0.15, c=1.1, total=40)
    rows = emit_schedule(sched, 9)
    assert rows[0] == (0.0, p_of_t(sched, 0))
    assert rows[-1] == (1.0, p_of_t(sched, 40))
    fractions = [f for f, _ in rows]
    assert fractions == pytest.approx([k / 8 for k in range(9)])
    with pytest.raises(ValueError):
        emit_schedule(sched, 1)


def test_schedule_csv_layout():
    text = schedule_csv([(0.0, 1.0), (1.0, 0.5)])
    lines = text.strip().split("\n")
    assert lines[0] == "fraction,p"
    assert lines[1] == "0.0,1.0"


def test_train_lr_zero_is_noop(tmp_path):
    cfg = _tiny_config(tmp_path, learning_rate=0.0, epochs=3)
    log = train(cfg)
    params = nn.load_checkpoint(log.checkpoint_path)
    fresh = nn.init_params(params.config)
    for name, t in fresh.named_tensors().items():
        assert np.array_equal(t.data, params.named_tensors()[name].data), name
    first = log.epochs[0]
    for m in log.epochs[1:]:
        assert (m.qwk, m.mse, m.mae, m.pred_std) == (first.qwk, first.mse, first.mae, first.pred_std)


def test_train_deterministic_and_thread_independent(tmp_path):
    log1 = train(_tiny_config(tmp_path / "a"))
    log2 = train(_tiny_config(tmp_path / "b"))
    log3 = train(_tiny_config(tmp_path / "c", eval_threads=4))
    rows1 = [m.csv_row() for m in log1.epochs]
    assert rows1 == [m.csv_row() for m in log2.epochs]
    assert rows1 == [m.csv_row() for m in log3.epochs]
    csv1 = Path(log1.metrics_path).read_bytes()
    assert csv1 == Path(log2.metrics_path).read_bytes()
    assert csv1 == Path(log3.metrics_path).read_bytes()


def test_dynamic_p_column_matches_schedule(tmp_path):
    cfg = _tiny_config(tmp_path, epochs=4)
    log = train(cfg)
    sched = LossSchedule(a=cfg.loss_a, b=cfg.loss_b, c=cfg.loss_c, total=4)
    for m in log.epochs:
        assert m.p == p_of_t(sched, m.epoch)


def test_mse_only_p_column_is_zero(tmp_path):
    log = train(_tiny_config(tmp_path, mode="mse_only"))
    assert all(m.p == 0.0 for m in log.epochs)


def test_mse_only_equals_dynamic_with_a_zero(tmp_path):
    log_mse = train(_tiny_config(tmp_path / "mse", mode="mse_only", epochs=5))
    log_dyn = train(_tiny_config(tmp_path / "dyn", mode="dynamic", loss_a=0.0, epochs=5))
    a = nn.load_checkpoint(log_mse.checkpoint_path)
    b = nn.load_checkpoint(log_dyn.checkpoint_path)
    for name, t in a.named_tensors().items():
        assert np.array_equal(t.data, b.named_tensors()[name].data), name
    # a = 0 forces p = 0 everywhere, so even the p column matches
    assert [m.csv_row() for m in log_mse.epochs] == [m.csv_row() for m in log_dyn.epochs]


def test_step_unit_schedule_decays_within_run(tmp_path):
    cfg = _tiny_config(tmp_path, loss_unit="step", loss_b=0.0, epochs=3)
    log = train(cfg)
    ps = [m.p for m in log.epochs]
    assert ps == sorted(ps, reverse=True)
    assert ps[-1] < cfg.loss_a


def test_divergence_recorded_not_raised(tmp_path, monkeypatch):
    real = loss_mod.combined_loss

    calls = {"n": 0}

    def poisoned(preds, targets, p, population=False):
        calls["n"] += 1
        report = real(preds, targets, p, population=population)
        if calls["n"] == 3:
            report.total.data = np.float64("nan")
        return report

    monkeypatch.setattr(engine.loss_mod, "combined_loss", poisoned)
    log = train(_tiny_config(tmp_path))
    assert log.diverged
    assert log.divergence_epoch == 1
    assert log.divergence_batch == 2
    assert log.checkpoint_path is None
    metrics_file = Path(log.metrics_path).read_text()
    assert metrics_file.startswith("epoch,qwk")


def test_train_on_tsv_round_trip(tmp_path):
    from dynloss.data import generate_imbalanced_rows, write_asap_tsv

    rows = generate_imbalanced_rows(SynthSpec(n=80, seed=9, min_len=6, max_len=10))
    tsv = tmp_path / "data.tsv"
    write_asap_tsv(tsv, rows)
    cfg = _tiny_config(tmp_path, data_path=str(tsv), synthetic=None, prompt_id=1)
    log = train(cfg)
    assert len(log.epochs) == cfg.epochs
    assert not log.skipped_rows
    assert Path(log.vocab_path).exists()
    assert Path(log.checkpoint_path).exists()
    text = Path(log.metrics_path).read_text()
    assert text.splitlines()[0] == "epoch,qwk,mse,mae,r2,pred_std,target_std,p"
    assert len(text.splitlines()) == cfg.epochs + 1


def test_metrics_csv_rendering():
    from dynloss.metrics import EpochMetrics

    rows = [EpochMetrics(1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)]
    text = metrics_csv(rows)
    assert text == "epoch,qwk,mse,mae,r2,pred_std,target_std,p\n1,0.1,0.2,0.3,0.4,0.5,0.6,0.7\n"


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError, match="mode"):
        _tiny_config(tmp_path, mode="bogus")
    with pytest.raises(ValueError, match="epochs"):
        _tiny_config(tmp_path, epochs=0)
    with pytest.raises(ValueError, match="batch_size"):
        _tiny_config(tmp_path, batch_size=1)
    with pytest.raises(ValueError, match="data_path or a synthetic"):
        _tiny_config(tmp_path, synthetic=None)


def test_checkpoint_cadence(tmp_path):
    cfg = _tiny_config(tmp_path, epochs=4, checkpoint_every=2)
    train(cfg)
    out = Path(cfg.out_dir)
    assert (out / "epoch_2.ckpt").exists()
    assert (out / "epoch_4.ckpt").exists()
    assert not (out / "epoch_3.ckpt").exists()
