"""Dense float64 matrices with a reverse-mode gradient tape.

Every value is a 2-D matrix (scalars are 1x1, row vectors 1xd). Ops run as
plain numpy unless a ``Tape`` is active *and* at least one input requires
gradients; in that case the op is recorded so that ``backward`` can replay
the chain rule. A tape is rebuilt on every training step (define-by-run)
and consumed by a single ``backward`` call.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class TapeError(RuntimeError):
    """Tape misuse: backward on a non-scalar, detached loss, or a consumed tape."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN/inf while finite checks were enabled."""


_TAPE_STACK: list["Tape"] = []
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/inf checks on every op output (off by default, costs a pass)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class Tape:
    """Recording context for one forward pass."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A 2-D float64 matrix, optionally tracked on the active tape.

    ``tape`` is set only on op outputs; leaves (parameters, constants) keep
    ``tape = None``, which is how ``backward`` tells them apart.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """Constant view of the same values, cut off from the tape."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t.tape = None
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


GradFn = Callable[[np.ndarray], np.ndarray]


def _make(data: np.ndarray, pairs: Sequence[tuple[Tensor, GradFn]]) -> Tensor:
    """Create an op output, recording (input, vjp) pairs if a tape is active."""
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError("op produced a non-finite value")
    tape = _active_tape()
    live = tuple((t, fn) for t, fn in pairs if t.requires_grad)
    out = Tensor(data, requires_grad=bool(live) and tape is not None)
    if out.requires_grad:
        out.tape = tape
        tape._nodes.append((out, live))
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every requires-grad leaf.

    Consumes the tape the loss was recorded on; calling it twice on the
    same tape raises. Returns the gradient map and also stores each leaf
    gradient in ``leaf.grad``.
    """
    if loss.data.shape != (1, 1):
        raise TapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.tape is None:
        if loss.requires_grad:
            # loss is itself a leaf: d loss / d loss = 1
            g = np.ones((1, 1))
            loss.grad = g
            return {loss: g}
        raise TapeError("loss is not attached to any tape")
    tape = loss.tape
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward call")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, pairs in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        holders.pop(id(out), None)
        for t, fn in pairs:
            gt = fn(g)
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gt
            else:
                grads[key] = gt
                holders[key] = t

    leaf_grads: dict[Tensor, np.ndarray] = {}
    for key, g in grads.items():
        t = holders[key]
        if t.tape is None and t.requires_grad:
            t.grad = g
            leaf_grads[t] = g
    return leaf_grads


# ---------------------------------------------------------------------------
# broadcasting helpers (full shape, row vector, column vector, 1x1 scalar)

def _broadcast_shapes(sa: tuple[int, int], sb: tuple[int, int]) -> tuple[int, int]:
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"shapes {sa} and {sb} do not broadcast")
    out = (max(sa[0], sb[0]), max(sa[1], sb[1]))
    for s in (sa, sb):
        if s != out and s[0] not in (1, out[0]):
            raise ShapeError(f"shapes {sa} and {sb} do not broadcast")
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, [(a, lambda g: g @ bd.T), (b, lambda g: ad.T @ g)])


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data,
                 [(a, lambda g: _unbroadcast(g, sa)),
                  (b, lambda g: _unbroadcast(g, sb))])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data,
                 [(a, lambda g: _unbroadcast(g, sa)),
                  (b, lambda g: _unbroadcast(-g, sb))])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    return _make(ad * bd,
                 [(a, lambda g: _unbroadcast(g * bd, sa)),
                  (b, lambda g: _unbroadcast(g * ad, sb))])


def smul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, [(a, lambda g: g * c)])


def row_l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each row by max(its L2 norm, eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    denom = np.maximum(norms, eps)
    y = a.data / denom
    ok = norms > eps  # guarded rows are a plain 1/eps scaling, no projection term

    def grad(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        return (g - np.where(ok, dot, 0.0) * y) / denom

    return _make(y, [(a, grad)])


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def grad(g):
        return y * (g - np.sum(g * y, axis=1, keepdims=True))

    return _make(y, [(a, grad)])


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _make(y, [(a, lambda g: g * y * (1.0 - y))])


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _make(y, [(a, lambda g: g * y)])


def log(a: Tensor, eps: float = 1e-12) -> Tensor:
    """log(max(a, eps)); gradient is zero on the clipped region."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    ad = a.data
    y = np.log(np.maximum(ad, eps))
    return _make(y, [(a, lambda g: np.where(ad > eps, g / np.maximum(ad, eps), 0.0))])


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)) computed without overflow."""
    ad = a.data
    y = np.logaddexp(0.0, ad)
    return _make(y, [(a, lambda g: g * _sigmoid(ad))])


def bce_logits_mean(logits: Tensor, targets: np.ndarray, pos_weight: float = 1.0,
                    scale: float = 1.0) -> Tensor:
    """Fused weighted binary cross-entropy from logits, averaged and scaled.

    Value: scale * mean over entries of pw*t*softplus(-x) + (1-t)*softplus(x),
    rewritten via softplus(-x) = softplus(x) - x so one transcendental pass
    suffices; binary targets are consumed as positive-entry indices rather
    than full weight matrices. Targets are constants.
    """
    if targets.shape != logits.shape:
        raise ShapeError("targets must match the logits shape")
    x = logits.data
    pos = np.nonzero(targets.ravel())[0]
    xf = x.ravel()
    sp = np.logaddexp(0.0, x)
    total = sp.sum() + (pos_weight - 1.0) * sp.ravel()[pos].sum() \
        - pos_weight * xf[pos].sum()
    coef = scale / x.size
    value = coef * total
    shape = x.shape

    def grad(g):
        out = _sigmoid(x)
        flat = out.reshape(-1)
        flat[pos] = pos_weight * (flat[pos] - 1.0)
        out *= g[0, 0] * coef
        return out.reshape(shape)

    return _make(np.array([[value]]), [(logits, grad)])


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    if lo > hi:
        raise ValueError("clamp bounds out of order")
    ad = a.data
    y = np.clip(ad, lo, hi)
    return _make(y, [(a, lambda g: g * ((ad >= lo) & (ad <= hi)))])


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_cols of nothing")
    rows = tensors[0].shape[0]
    if any(t.shape[0] != rows for t in tensors):
        raise ShapeError("concat_cols needs equal row counts")
    widths = [t.shape[1] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    data = np.concatenate([t.data for t in tensors], axis=1)

    def splitter(i):
        lo, hi = offsets[i], offsets[i + 1]
        return lambda g: g[:, lo:hi]

    return _make(data, [(t, splitter(i)) for i, t in enumerate(tensors)])


def gather_rows(a: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError("gather_rows index out of range")
    shape = a.shape

    def grad(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return _make(a.data[idx], [(a, grad)])


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    seg = np.asarray(segment_ids, dtype=np.int64).ravel()
    if seg.size != a.shape[0]:
        raise ShapeError("segment_sum needs one segment id per row")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ShapeError("segment id out of range")
    out = np.zeros((num_segments, a.shape[1]))
    np.add.at(out, seg, a.data)
    return _make(out, [(a, lambda g: g[seg])])


def reduce_sum(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array([[a.data.sum()]]),
                 [(a, lambda g: np.full(shape, g[0, 0]))])


def reduce_mean(a: Tensor) -> Tensor:
    shape = a.shape
    size = a.data.size
    return _make(np.array([[a.data.mean()]]),
                 [(a, lambda g: np.full(shape, g[0, 0] / size))])


def transpose(a: Tensor) -> Tensor:
    return _make(np.ascontiguousarray(a.data.T),
                 [(a, lambda g: np.ascontiguousarray(g.T))])
