"""Command line interface; a thin client over the service endpoints.

Subcommands: train, evaluate, emit-schedule, synth-data, qwk, serve.
Every option can also come from a flat key=value config file passed with
--config; explicit flags win over config values, which win over defaults.
Config keys match the flag names with '.' or '_' accepted in place of '-'
(so loss.a mirrors --loss-a).

Exit codes: 0 success, 1 usage error, 2 data error, 3 diverged run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .client import ServiceClient
from .errors import DataError, DivergedError, UsageError


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass(frozen=True)
class Opt:
    flag: str
    type: Callable = str
    default: object = None
    help: str = ""
    choices: tuple | None = None
    is_flag: bool = False

    @property
    def name(self) -> str:
        return self.flag.lstrip("-")

    @property
    def attr(self) -> str:
        return self.name.replace("-", "_")


COMMON_OPTS = [
    Opt("--config", str, None, "flat key=value config file; flags win"),
    Opt("--server", str, None, "remote service URL (default: run in process)"),
]

TRAIN_OPTS = [
    Opt("--mode", str, "dynamic", "loss mode", choices=("dynamic", "mse_only")),
    Opt("--data", str, None, "ASAP-format TSV path"),
    Opt("--prompt", int, 1, "prompt id 1..8"),
    Opt("--synthetic", _parse_bool, False, "use the synthetic imbalanced dataset", is_flag=True),
    Opt("--n", int, 2000, "synthetic sample count"),
    Opt("--mean", float, 0.45, "synthetic target mean (normalized)"),
    Opt("--std", float, 0.17, "synthetic target std (normalized)"),
    Opt("--skew", float, 0.5, "synthetic target skewness"),
    Opt("--synth-seed", int, None, "synthetic data seed (default: run seed)"),
    Opt("--signal-frac", float, 1.0, "fraction of score-ordered word pairs"),
    Opt("--min-len", int, 12, "synthetic min tokens"),
    Opt("--max-len", int, 20, "synthetic max tokens"),
    Opt("--embed-dim", int, 24, "embedding width"),
    Opt("--hidden-dim", int, 32, "LSTM hidden width"),
    Opt("--max-seq-len", int, 512, "truncate sequences to this many tokens"),
    Opt("--vocab-size", int, 4000, "max vocabulary size incl. reserved ids"),
    Opt("--min-freq", int, 2, "min frequency for vocab words and parts"),
    Opt("--optimizer", str, "adam", "optimizer", choices=("adam", "sgd")),
    Opt("--learning-rate", float, 1e-3, "learning rate"),
    Opt("--epochs", int, 50, "training epochs"),
    Opt("--batch-size", int, 32, "batch size (>= 2)"),
    Opt("--loss-a", float, 1.0, "schedule plateau value a"),
    Opt("--loss-b", float, 0.15, "schedule hold fraction b"),
    Opt("--loss-c", float, 1.1, "schedule decay rate c"),
    Opt("--loss-unit", str, "epoch", "schedule time unit", choices=("epoch", "step")),
    Opt("--population-std", _parse_bool, False, "population (n) std in STDE", is_flag=True),
    Opt("--clip-norm", float, 5.0, "global grad-norm clip; 0 disables"),
    Opt("--train-frac", float, 0.9, "training split fraction"),
    Opt("--drop-undersized", _parse_bool, False, "drop trailing singleton batches", is_flag=True),
    Opt("--eval-threads", int, 1, "evaluation worker threads"),
    Opt("--checkpoint-every", int, 0, "checkpoint cadence in epochs; 0 = final only"),
    Opt("--seed", int, 0, "run seed"),
    Opt("--outdir", str, None, "output directory (required)"),
]

EVALUATE_OPTS = [
    Opt("--checkpoint", str, None, "model checkpoint path (required)"),
    Opt("--vocab", str, None, "vocabulary json path (required)"),
    Opt("--data", str, None, "ASAP-format TSV path (required)"),
    Opt("--prompt", int, 1, "prompt id 1..8"),
    Opt("--threads", int, 1, "evaluation worker threads"),
]

SCHEDULE_OPTS = [
    Opt("--a", float, 1.0, "plateau value a"),
    Opt("--b", float, 0.15, "hold fraction b"),
    Opt("--c", float, 1.1, "decay rate c"),
    Opt("--resolution", int, 101, "number of rows (>= 2)"),
    Opt("--out", str, None, "CSV path; omit to print to stdout"),
]

SYNTH_OPTS = [
    Opt("--n", int, 2000, "sample count"),
    Opt("--mean", float, 0.45, "target mean (normalized)"),
    Opt("--std", float, 0.17, "target std (normalized)"),
    Opt("--skew", float, 0.5, "target skewness"),
    Opt("--seed", int, 0, "generator seed"),
    Opt("--signal-frac", float, 1.0, "fraction of score-ordered word pairs"),
    Opt("--min-len", int, 12, "min tokens per essay"),
    Opt("--max-len", int, 20, "max tokens per essay"),
    Opt("--out", str, None, "TSV output path (required)"),
]

QWK_OPTS = [
    Opt("--file", str, None, "CSV with two integer score columns (required)"),
    Opt("--truth-col", str, "truth", "truth column name"),
    Opt("--pred-col", str, "pred", "prediction column name"),
    Opt("--min-score", int, None, "score range min (default: observed)"),
    Opt("--max-score", int, None, "score range max (default: observed)"),
]

SERVE_OPTS = [
    Opt("--host", str, "127.0.0.1", "bind host"),
    Opt("--port", int, 8000, "bind port"),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _add_opts(parser: argparse.ArgumentParser, opts: list[Opt]) -> None:
    for opt in opts:
        if opt.is_flag:
            parser.add_argument(opt.flag, action="store_true", default=None, help=opt.help)
        else:
            parser.add_argument(opt.flag, type=opt.type, default=None,
                                choices=opt.choices, help=opt.help)


def _read_config(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    values: dict[str, str] = {}
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise UsageError(f"{p}:{line_no}: expected key=value, got {text!r}")
        key, _, value = text.partition("=")
        values[key.strip()] = value.strip()
    return values


def _merge(opts: list[Opt], ns: argparse.Namespace) -> dict:
    merged = {o.name: o.default for o in opts}
    by_name = {o.name: o for o in opts}
    if getattr(ns, "config", None):
        for raw_key, raw_value in _read_config(ns.config).items():
            key = raw_key.replace(".", "-").replace("_", "-")
            opt = by_name.get(key)
            if opt is None:
                raise UsageError(f"unknown config key {raw_key!r}")
            try:
                merged[key] = opt.type(raw_value)
            except ValueError as exc:
                raise UsageError(f"config key {raw_key!r}: {exc}") from None
            if opt.choices and merged[key] not in opt.choices:
                raise UsageError(f"config key {raw_key!r} must be one of {opt.choices}")
    for opt in opts:
        value = getattr(ns, opt.attr, None)
        if value is not None:
            merged[opt.name] = value
    return merged


def _require(merged: dict, name: str, command: str):
    if merged.get(name) is None:
        raise UsageError(f"{command} requires --{name}")
    return merged[name]


def _client(ns: argparse.Namespace) -> ServiceClient:
    return ServiceClient(getattr(ns, "server", None))


def _cmd_train(ns: argparse.Namespace) -> int:
    merged = _merge(TRAIN_OPTS, ns)
    if not merged["synthetic"] and merged["data"] is None:
        raise UsageError("train requires --data PATH or --synthetic")
    out_dir = _require(merged, "outdir", "train")
    synthetic = None
    if merged["synthetic"]:
        synthetic = {
            "n": merged["n"], "mean": merged["mean"], "std": merged["std"],
            "skew": merged["skew"], "seed": merged["synth-seed"],
            "signal_frac": merged["signal-frac"],
            "min_len": merged["min-len"], "max_len": merged["max-len"],
        }
    payload = {
        "mode": merged["mode"],
        "data_path": merged["data"],
        "prompt_id": merged["prompt"],
        "synthetic": synthetic,
        "embed_dim": merged["embed-dim"],
        "hidden_dim": merged["hidden-dim"],
        "max_seq_len": merged["max-seq-len"],
        "vocab_size": merged["vocab-size"],
        "min_freq": merged["min-freq"],
        "optimizer": merged["optimizer"],
        "learning_rate": merged["learning-rate"],
        "epochs": merged["epochs"],
        "batch_size": merged["batch-size"],
        "schedule": {"a": merged["loss-a"], "b": merged["loss-b"],
                     "c": merged["loss-c"], "unit": merged["loss-unit"]},
        "population_std": merged["population-std"],
        "clip_norm": merged["clip-norm"],
        "train_frac": merged["train-frac"],
        "drop_undersized": merged["drop-undersized"],
        "eval_threads": merged["eval-threads"],
        "checkpoint_every": merged["checkpoint-every"],
        "seed": merged["seed"],
        "out_dir": out_dir,
    }
    result = _client(ns).post("/train", payload)
    for row in result["epochs"]:
        print(f"epoch {row['epoch']}: qwk={row['qwk']:.4f} mse={row['mse']:.6f} "
              f"pred_std={row['pred_std']:.4f} p={row['p']:.4f}")
    if result["diverged"]:
        print(f"run diverged at epoch {result['divergence_epoch']} "
              f"batch {result['divergence_batch']}", file=sys.stderr)
        return 3
    print(f"metrics: {result['metrics_csv']}")
    print(f"checkpoint: {result['checkpoint']}")
    print(f"vocab: {result['vocab']}")
    return 0


def _cmd_evaluate(ns: argparse.Namespace) -> int:
    merged = _merge(EVALUATE_OPTS, ns)
    payload = {
        "checkpoint": _require(merged, "checkpoint", "evaluate"),
        "vocab": _require(merged, "vocab", "evaluate"),
        "data_path": _require(merged, "data", "evaluate"),
        "prompt_id": merged["prompt"],
        "threads": merged["threads"],
    }
    result = _client(ns).post("/evaluate", payload)
    print(json.dumps(result["metrics"]))
    return 0


def _cmd_schedule(ns: argparse.Namespace) -> int:
    merged = _merge(SCHEDULE_OPTS, ns)
    payload = {"a": merged["a"], "b": merged["b"], "c": merged["c"],
               "resolution": merged["resolution"], "out": merged["out"]}
    result = _client(ns).post("/schedule", payload)
    if merged["out"] is None:
        sys.stdout.write(result["csv"])
    else:
        print(f"schedule: {result['out']}")
    return 0


def _cmd_synth(ns: argparse.Namespace) -> int:
    merged = _merge(SYNTH_OPTS, ns)
    payload = {
        "n": merged["n"], "mean": merged["mean"], "std": merged["std"],
        "skew": merged["skew"], "seed": merged["seed"],
        "signal_frac": merged["signal-frac"],
        "min_len": merged["min-len"], "max_len": merged["max-len"],
        "out": _require(merged, "out", "synth-data"),
    }
    result = _client(ns).post("/synth-data", payload)
    print(f"wrote {result['rows']} rows to {result['out']} "
          f"(target mean {result['target_mean']:.4f}, std {result['target_std']:.4f})")
    return 0


def _cmd_qwk(ns: argparse.Namespace) -> int:
    merged = _merge(QWK_OPTS, ns)
    payload = {
        "path": _require(merged, "file", "qwk"),
        "truth_col": merged["truth-col"],
        "pred_col": merged["pred-col"],
        "min_score": merged["min-score"],
        "max_score": merged["max-score"],
    }
    result = _client(ns).post("/qwk", payload)
    print(result["qwk"])
    return 0


def _cmd_serve(ns: argparse.Namespace) -> int:
    merged = _merge(SERVE_OPTS, ns)
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=merged["host"], port=merged["port"])
    return 0


_COMMANDS = [
    ("train", "train a model and log per-epoch metrics", TRAIN_OPTS, _cmd_train),
    ("evaluate", "evaluate a checkpoint on a TSV prompt", EVALUATE_OPTS, _cmd_evaluate),
    ("emit-schedule", "write the p(t) schedule curve as CSV", SCHEDULE_OPTS, _cmd_schedule),
    ("synth-data", "generate a synthetic imbalanced TSV", SYNTH_OPTS, _cmd_synth),
    ("qwk", "quadratic weighted kappa of two CSV columns", QWK_OPTS, _cmd_qwk),
    ("serve", "run the HTTP service", SERVE_OPTS, _cmd_serve),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynloss", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, help_text, opts, handler in _COMMANDS:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.__class__ = _Parser
        _add_opts(p, opts + COMMON_OPTS)
        p.set_defaults(handler=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not getattr(ns, "handler", None):
            raise UsageError("missing subcommand; see --help")
        return ns.handler(ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
