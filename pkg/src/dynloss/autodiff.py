"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

The op set is deliberately closed: add, sub, elementwise mul, matmul,
scalar scale, concat (last axis), row gather, sigmoid, tanh, exp, sqrt,
abs, mean, sum, softmax. Graphs are built define-by-run: each result
tensor remembers its inputs and a backward rule, and ``backward`` walks
the recorded operations once, in reverse creation order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_SEQ = itertools.count()

# Floor applied to the root in the sqrt backward rule so losses built on
# sample standard deviations stay finite when a batch collapses to a
# constant. 1e-8 on sigma translates to 2e-8 on the 2*sqrt denominator.
SQRT_GRAD_FLOOR = 1e-8


_F64 = np.float64


class Tensor:
    """Dense float64 array participating in a recorded computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_inputs", "_backward", "_op", "_seq")

    def __init__(self, data, requires_grad: bool = False):
        if type(data) is np.ndarray and data.dtype == _F64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_F64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._inputs: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self._op: str = "leaf"
        self._seq = next(_SEQ)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self._op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars (python numbers) are constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_const(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def sqrt(self):
        return sqrt(self)

    def abs(self):
        return absolute(self)

    def mean(self):
        return mean(self)

    def sum(self):
        return tsum(self)

    def backward(self) -> None:
        """Accumulate d(self)/d(tensor) into .grad of every reachable tensor.

        self must be scalar. Gradients add across fan-out and across
        repeated backward calls; callers zero grads between steps.
        """
        if self.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        order = _reachable_ops(self)
        # per-pass gradients; flushed into .grad at the end so repeated
        # backward calls accumulate instead of compounding
        pass_grads: dict[Tensor, np.ndarray] = {self: np.ones((), dtype=np.float64)}
        for node in order:
            g = pass_grads.get(node)
            if g is None:  # reachable but cut off by a grad-less path
                continue
            for inp, gi in zip(node._inputs, node._backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                prev = pass_grads.get(inp)
                pass_grads[inp] = gi if prev is None else prev + gi
        for tensor, g in pass_grads.items():
            if tensor.requires_grad:
                tensor.grad = g if tensor.grad is None else tensor.grad + g


def _reachable_ops(root: Tensor) -> list[Tensor]:
    """Recorded operations reachable from root, in reverse creation order.

    Creation order is topological by construction (inputs are recorded
    before the ops consuming them), so reversing it gives a valid
    backward schedule that visits every op exactly once.
    """
    seen: set[int] = set()
    tagged: list[tuple[int, Tensor]] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen or node._backward is None:
            continue
        seen.add(id(node))
        tagged.append((node._seq, node))
        stack.extend(node._inputs)
    tagged.sort(reverse=True)  # seq ids are unique, nodes never compared
    return [node for _, node in tagged]


def _const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, op: str, inputs: tuple[Tensor, ...], backward) -> Tensor:
    for t in inputs:
        if t.requires_grad:
            out.requires_grad = True
            out._inputs = inputs
            out._backward = backward
            out._op = op
            break
    return out


def _elementwise_shapes(op: str, a: Tensor, b: Tensor) -> None:
    # same shape, or scalar broadcast only; general broadcasting is rejected
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or sa == () or sb == ():
        return
    raise ValueError(f"shape mismatch for {op}: {sa} vs {sb}")


def _reduce_to(shape: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    # undo a scalar broadcast on the way back
    if shape == () and g.shape != ():
        return np.sum(g)
    return g


def add(a: Tensor, b) -> Tensor:
    b = _const(b)
    _elementwise_shapes("add", a, b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _reduce_to(a.shape, g), _reduce_to(b.shape, g)

    return _record(out, "add", (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _const(b)
    _elementwise_shapes("sub", a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _reduce_to(a.shape, g), _reduce_to(b.shape, -g)

    return _record(out, "sub", (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return scale(a, float(b))
    _elementwise_shapes("mul", a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        return _reduce_to(a.shape, g * b.data), _reduce_to(b.shape, g * a.data)

    return _record(out, "mul", (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a plain python scalar treated as a constant."""
    factor = float(factor)
    out = Tensor(a.data * factor)

    def backward(g):
        return (g * factor,)

    return _record(out, "scale", (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    b = _const(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or (ad.ndim == 1 and bd.ndim == 1):
        raise ValueError(f"matmul supports matrix/vector operands, got {a.shape} @ {b.shape}")
    inner_a = ad.shape[-1]
    inner_b = bd.shape[0]
    if inner_a != inner_b:
        raise ValueError(f"shape mismatch for matmul: {a.shape} @ {b.shape}")
    out = Tensor(ad @ bd)

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2:  # (m,n) @ (n,) -> (m,)
            return g[:, None] * bd, ad.T @ g
        # (n,) @ (n,k) -> (k,)
        return bd @ g, ad[:, None] * g

    return _record(out, "matmul", (a, b), backward)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; scalars are treated as length-1 vectors."""
    if not tensors:
        raise ValueError("concat of zero tensors")
    parts = [t.data.reshape(1) if t.data.ndim == 0 else t.data for t in tensors]
    ndims = {p.ndim for p in parts}
    if ndims > {1} and (ndims != {2} or len({p.shape[0] for p in parts}) != 1):
        shapes = [t.shape for t in tensors]
        raise ValueError(f"concat needs matching ranks on the last axis: {shapes}")
    out = Tensor(np.concatenate(parts, axis=-1))
    widths = [p.shape[-1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        grads = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            piece = g[..., lo:hi]
            grads.append(piece.reshape(()) if t.data.ndim == 0 else piece)
        return tuple(grads)

    return _record(out, "concat", tuple(tensors), backward)


def gather(t: Tensor, indices) -> Tensor:
    """Row gather (embedding lookup). An int index drops the leading axis."""
    n = t.data.shape[0]
    if isinstance(indices, (int, np.integer)):
        i = int(indices)
        if not 0 <= i < n:
            raise ValueError(f"gather index out of range for leading dim {n}: [{i}]")
        out = Tensor(t.data[i])

        def backward_one(g):
            full = np.zeros_like(t.data)
            full[i] = g
            return (full,)

        return _record(out, "gather", (t,), backward_one)

    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"gather index out of range for leading dim {n}: {idx.tolist()}")
    out = Tensor(t.data[idx])

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)  # repeated rows accumulate
        return (full,)

    return _record(out, "gather", (t,), backward)


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    e = np.exp(-np.abs(x))  # overflow-safe in both tails
    out_data = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Tensor(out_data)

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return _record(out, "sigmoid", (t,), backward)


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)
    out = Tensor(out_data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return _record(out, "tanh", (t,), backward)


def exp(t: Tensor) -> Tensor:
    out_data = np.exp(t.data)
    out = Tensor(out_data)

    def backward(g):
        return (g * out_data,)

    return _record(out, "exp", (t,), backward)


def sqrt(t: Tensor) -> Tensor:
    if np.any(t.data < 0):
        raise ValueError("sqrt of negative input rejected")
    out_data = np.sqrt(t.data)
    out = Tensor(out_data)

    def backward(g):
        return (g * 0.5 / np.maximum(out_data, SQRT_GRAD_FLOOR),)

    return _record(out, "sqrt", (t,), backward)


def absolute(t: Tensor) -> Tensor:
    out = Tensor(np.abs(t.data))
    sign = np.sign(t.data)  # sign(0) == 0, the documented subgradient

    def backward(g):
        return (g * sign,)

    return _record(out, "abs", (t,), backward)


def mean(t: Tensor) -> Tensor:
    if t.size == 0:
        raise ValueError("mean of empty tensor")
    out = Tensor(np.mean(t.data))
    inv_n = 1.0 / t.size

    def backward(g):
        return (np.full_like(t.data, g * inv_n),)

    return _record(out, "mean", (t,), backward)


def tsum(t: Tensor) -> Tensor:
    out = Tensor(np.sum(t.data))

    def backward(g):
        return (np.full_like(t.data, g),)

    return _record(out, "sum", (t,), backward)


def softmax(t: Tensor) -> Tensor:
    """Softmax over a vector."""
    if t.data.ndim != 1:
        raise ValueError(f"softmax expects a vector, got shape {t.shape}")
    shifted = t.data - np.max(t.data)
    e = np.exp(shifted)
    out_data = e / np.sum(e)
    out = Tensor(out_data)

    def backward(g):
        return (out_data * (g - np.dot(g, out_data)),)

    return _record(out, "softmax", (t,), backward)


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    passed: bool
    inconclusive: bool = False


def gradient_check(f, point: Tensor, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare backward gradients of f at point with central finite differences.

    f maps one tensor to a scalar tensor. Returns the max relative error
    over all coordinates; non-finite values of f near the point make the
    report inconclusive rather than a pass.
    """
    x = Tensor(point.data.copy(), requires_grad=True)
    y = f(x)
    if y.shape != ():
        raise ValueError("gradient_check needs a scalar-valued function")
    if not np.isfinite(y.data):
        return GradCheckReport(max_rel_err=np.inf, tol=tol, passed=False, inconclusive=True)
    y.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(point.data)
    flat = point.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        bump = np.array(flat, copy=True)
        bump[i] = flat[i] + eps
        hi = f(Tensor(bump.reshape(point.shape))).item()
        bump[i] = flat[i] - eps
        lo = f(Tensor(bump.reshape(point.shape))).item()
        if not (np.isfinite(hi) and np.isfinite(lo)):
            return GradCheckReport(max_rel_err=np.inf, tol=tol, passed=False, inconclusive=True)
        num_flat[i] = (hi - lo) / (2.0 * eps)

    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    max_rel = float(np.max(diff / denom)) if flat.size else 0.0
    return GradCheckReport(max_rel_err=max_rel, tol=tol, passed=max_rel < tol)
