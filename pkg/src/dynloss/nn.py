"""Token embedding -> LSTM encoder -> attention pooling -> sigmoid head.

One unidirectional LSTM layer with per-gate weight matrices, a learned
dot-product attention vector over the hidden states, and a single fully
connected output squashed to (0, 1) to match normalized score targets.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .data import PAD_ID
from .errors import DataError

CHECKPOINT_VERSION = 1

GATE_NAMES = ("input", "forget", "output", "cand")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 24
    hidden_dim: int = 32
    max_seq_len: int = 512
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


class ModelParams:
    """Learnable tensors, all requires_grad and kept in a fixed name order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.embedding = tensors["embedding"]
        self.gate_weights = {g: tensors[f"w_{g}"] for g in GATE_NAMES}
        self.gate_biases = {g: tensors[f"b_{g}"] for g in GATE_NAMES}
        self.attn_vector = tensors["attn_vector"]
        self.head_weight = tensors["head_weight"]
        self.head_bias = tensors["head_bias"]
        self._validate()

    def _validate(self) -> None:
        cfg = self.config
        expected = {
            "embedding": (cfg.vocab_size, cfg.embed_dim),
            "attn_vector": (cfg.hidden_dim,),
            "head_weight": (cfg.hidden_dim,),
            "head_bias": (),
        }
        for g in GATE_NAMES:
            expected[f"w_{g}"] = (cfg.hidden_dim, cfg.embed_dim + cfg.hidden_dim)
            expected[f"b_{g}"] = (cfg.hidden_dim,)
        for name, tensor in self.named_tensors().items():
            if tensor.shape != expected[name]:
                raise ValueError(f"{name} has shape {tensor.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(tensor.data)):
                raise ValueError(f"{name} contains non-finite values")

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for g in GATE_NAMES:
            out[f"w_{g}"] = self.gate_weights[g]
            out[f"b_{g}"] = self.gate_biases[g]
        out["attn_vector"] = self.attn_vector
        out["head_weight"] = self.head_weight
        out["head_bias"] = self.head_bias
        return out

    def zero_grad(self) -> None:
        for t in self.named_tensors().values():
            t.zero_grad()


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.

    The forget-gate bias starts at 1.0 so early cell states persist.
    Deterministic for a given config seed.
    """
    rng = np.random.default_rng(config.seed)

    def uniform(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    tensors: dict[str, Tensor] = {
        "embedding": uniform((config.vocab_size, config.embed_dim), config.embed_dim),
    }
    fan_in = config.embed_dim + config.hidden_dim
    for g in GATE_NAMES:
        tensors[f"w_{g}"] = uniform((config.hidden_dim, fan_in), fan_in)
        bias = np.ones(config.hidden_dim) if g == "forget" else np.zeros(config.hidden_dim)
        tensors[f"b_{g}"] = Tensor(bias, requires_grad=True)
    tensors["attn_vector"] = uniform((config.hidden_dim,), config.hidden_dim)
    tensors["head_weight"] = uniform((config.hidden_dim,), config.hidden_dim)
    tensors["head_bias"] = Tensor(0.0, requires_grad=True)
    return ModelParams(config, tensors)


def _effective_ids(params: ModelParams, token_ids: Sequence[int]) -> list[int]:
    ids = list(token_ids)
    while ids and ids[-1] == PAD_ID:  # trailing padding never reaches the recurrence
        ids.pop()
    if not ids:
        raise ValueError("empty token sequence")
    cfg = params.config
    bad = [i for i in ids if not 0 <= i < cfg.vocab_size]
    if bad:
        raise ValueError(f"token ids out of range for vocab size {cfg.vocab_size}: {bad[:5]}")
    return ids[: cfg.max_seq_len]


def lstm_encode(params: ModelParams, token_ids: Sequence[int]) -> list[Tensor]:
    """Hidden state per token; zero initial state, standard gate recurrence."""
    ids = _effective_ids(params, token_ids)
    h = Tensor(np.zeros(params.config.hidden_dim))
    c = Tensor(np.zeros(params.config.hidden_dim))
    hiddens: list[Tensor] = []
    w, b = params.gate_weights, params.gate_biases
    for tid in ids:
        x = autodiff.gather(params.embedding, tid)
        z = autodiff.concat([x, h])
        i_gate = (w["input"] @ z + b["input"]).sigmoid()
        f_gate = (w["forget"] @ z + b["forget"]).sigmoid()
        o_gate = (w["output"] @ z + b["output"]).sigmoid()
        cand = (w["cand"] @ z + b["cand"]).tanh()
        c = f_gate * c + i_gate * cand
        h = o_gate * c.tanh()
        hiddens.append(h)
    return hiddens


def attention_pool(params: ModelParams, hiddens: Sequence[Tensor]) -> Tensor:
    """Softmax-weighted sum of hidden states, scored by a learned vector."""
    if not hiddens:
        raise ValueError("attention over an empty hidden sequence")
    scores = autodiff.concat([(params.attn_vector * h).sum() for h in hiddens])
    weights = autodiff.softmax(scores)
    context = autodiff.gather(weights, 0) * hiddens[0]
    for t in range(1, len(hiddens)):
        context = context + autodiff.gather(weights, t) * hiddens[t]
    return context


def predict(params: ModelParams, token_ids: Sequence[int]) -> Tensor:
    """Scalar score in (0, 1) for one token sequence."""
    context = attention_pool(params, lstm_encode(params, token_ids))
    return ((params.head_weight * context).sum() + params.head_bias).sigmoid()


def save_checkpoint(path: str | Path, params: ModelParams) -> None:
    """Versioned binary checkpoint; round-trips bit-exactly."""
    meta = {"format_version": CHECKPOINT_VERSION, "config": asdict(params.config)}
    arrays = {name: t.data for name, t in params.named_tensors().items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(meta)), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> ModelParams:
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint not found: {p}")
    with np.load(io.BytesIO(p.read_bytes())) as archive:
        try:
            meta = json.loads(str(archive["__meta__"]))
        except KeyError:
            raise DataError(f"{p}: not a model checkpoint (missing header)") from None
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"{p}: unsupported checkpoint version {meta.get('format_version')!r}")
        config = ModelConfig(**meta["config"])
        tensors = {
            name: Tensor(archive[name], requires_grad=True)
            for name in archive.files if name != "__meta__"
        }
    try:
        return ModelParams(config, tensors)
    except KeyError as exc:
        raise DataError(f"{p}: checkpoint is missing tensor {exc}") from None
