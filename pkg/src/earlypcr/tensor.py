"""Dense float64 tensors with tape-based reverse-mode differentiation.

Graphs are define-by-run: primitives executed inside ``with Tape() as tape:``
are recorded in execution order, and ``tape.backward(loss)`` replays them in
reverse.  Outside an active tape nothing is recorded, which is how inference
runs.

Broadcasting is limited to scalar-with-tensor.  Any other shape mismatch is a
``ShapeError`` naming the op and both shapes.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

__all__ = [
    "Tensor", "Tape", "ShapeError", "GradientError", "NonFiniteError",
    "record_op", "backward", "debug_checks", "active_tape",
    "add", "sub", "mul", "matmul", "linear", "concat", "relu", "sigmoid",
    "tanh", "sum", "mean", "getitem", "reshape", "conv3d", "instance_norm",
    "bce_with_logits", "GradCheckReport", "grad_check",
]


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


@contextmanager
def debug_checks(enabled: bool = True):
    """Raise ``NonFiniteError`` whenever a primitive produces NaN or Inf."""
    previous = getattr(_local, "debug", False)
    _local.debug = enabled
    try:
        yield
    finally:
        _local.debug = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape", "_nid")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._tape = None
        self._nid = -1

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr if arr.dtype == np.float64 else arr.astype(np.float64)
        t.requires_grad = False
        t.grad = None
        t.name = None
        t._tape = None
        t._nid = -1
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict:
        return backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    op_kind: str
    input_ids: tuple
    output_id: int
    backward: Callable
    needs: tuple


@dataclass
class Tape:
    """Ordered record of primitive operations for one forward pass."""

    records: list = field(default_factory=list)
    _next_id: int = 0
    _leaves: dict = field(default_factory=dict)
    _consumed: bool = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def _node_id(self, t: Tensor) -> int:
        if t._tape is not self:
            t._tape = self
            t._nid = self._next_id
            self._next_id += 1
            if t.requires_grad:
                self._leaves[t._nid] = t
        return t._nid

    def _record(self, op_kind, inputs, out, backward_fn) -> None:
        ids = tuple(self._node_id(t) for t in inputs)
        out._tape = self
        out._nid = self._next_id
        self._next_id += 1
        needs = tuple(t.requires_grad for t in inputs)
        self.records.append(Record(op_kind, ids, out._nid, backward_fn, needs))

    def backward(self, loss: Tensor) -> dict:
        """Propagate d(loss)/d(node) back through the tape.

        Returns the gradient map (node id -> array) and sets ``.grad`` on every
        leaf that requires grad.  A tape can be replayed only once.
        """
        if self._consumed:
            raise GradientError("backward already ran on this tape; record a new Tape")
        if loss.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.records or loss._tape is not self:
            raise GradientError("loss was not recorded on this tape")
        self._consumed = True
        grads = {loss._nid: np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g = grads.get(rec.output_id)
            if g is None:
                continue
            in_grads = rec.backward(g, rec.needs)
            for nid, need, gi in zip(rec.input_ids, rec.needs, in_grads):
                if not need or gi is None:
                    continue
                prev = grads.get(nid)
                grads[nid] = gi if prev is None else prev + gi
        for nid, leaf in self._leaves.items():
            g = grads.get(nid)
            leaf.grad = np.zeros_like(leaf.data) if g is None else g
        self.records = []
        return grads


def backward(loss: Tensor) -> dict:
    if loss._tape is None:
        raise GradientError("loss was not recorded on any tape")
    return loss._tape.backward(loss)


def record_op(op_kind: str, out_data: np.ndarray, inputs: Sequence[Tensor],
              backward_fn: Callable) -> Tensor:
    """Wrap ``out_data`` as the result of a primitive.

    ``backward_fn(grad_out, needs)`` returns one gradient (or None) per input.
    The op is recorded only when a tape is active and an input requires grad.
    """
    if getattr(_local, "debug", False) and not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"{op_kind}: produced non-finite values")
    out = Tensor._wrap(np.asarray(out_data))
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(op_kind, inputs, out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, like: Tensor) -> np.ndarray:
    return np.asarray(g.sum()) if like.ndim == 0 and g.ndim != 0 else g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)

    def bw(g, needs):
        return (_unbroadcast(g, a) if needs[0] else None,
                _unbroadcast(g, b) if needs[1] else None)

    return record_op("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)

    def bw(g, needs):
        return (_unbroadcast(g, a) if needs[0] else None,
                _unbroadcast(-g, b) if needs[1] else None)

    return record_op("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)

    def bw(g, needs):
        return (_unbroadcast(g * b.data, a) if needs[0] else None,
                _unbroadcast(g * a.data, b) if needs[1] else None)

    return record_op("mul", a.data * b.data, (a, b), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a2 = a.data.reshape(1, -1) if a.ndim == 1 else a.data
    b2 = b.data.reshape(-1, 1) if b.ndim == 1 else b.data
    out2 = a2 @ b2
    out_shape = a.shape[:-1] + b.shape[1:]

    def bw(g, needs):
        g2 = g.reshape(out2.shape)
        ga = (g2 @ b2.T).reshape(a.shape) if needs[0] else None
        gb = (a2.T @ g2).reshape(b.shape) if needs[1] else None
        return ga, gb

    return record_op("matmul", out2.reshape(out_shape), (a, b), bw)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for x of shape [in] or [batch, in]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {weight.shape}")
    inputs = [x, weight]
    out = x.data @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias shape {bias.shape} does not match {weight.shape}")
        out = out + bias.data
        inputs.append(bias)
    x2 = x.data.reshape(-1, x.shape[-1])

    def bw(g, needs):
        g2 = g.reshape(-1, weight.shape[0])
        gx = (g2 @ weight.data).reshape(x.shape) if needs[0] else None
        gw = g2.T @ x2 if needs[1] else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0) if needs[2] else None)
        return grads

    return record_op("linear", out, inputs, bw)


# ---------------------------------------------------------------------------
# structure


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    ref = tensors[0]
    ax = axis % max(ref.ndim, 1)
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref.shape} and {t.shape}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g, needs):
        parts = np.split(g, bounds, axis=ax)
        return [p if n else None for p, n in zip(parts, needs)]

    return record_op("concat", np.concatenate([t.data for t in tensors], axis=ax),
                     tensors, bw)


def getitem(x, index) -> Tensor:
    """Basic slicing only (ints, slices, Ellipsis); no fancy indexing."""
    x = as_tensor(x)
    idx = index if isinstance(index, tuple) else (index,)
    for i in idx:
        if not (i is Ellipsis or isinstance(i, (int, slice, np.integer))):
            raise ShapeError(f"slice: unsupported index {i!r} for shape {x.shape}")
    try:
        out = x.data[index]
    except IndexError as exc:
        raise ShapeError(f"slice: {exc} for shape {x.shape}") from None

    def bw(g, needs):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return record_op("slice", np.array(out), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return record_op("reshape", out, (x,), lambda g, needs: (g.reshape(x.shape),))


# ---------------------------------------------------------------------------
# nonlinearities and reductions


def relu(x) -> Tensor:
    x = as_tensor(x)
    return record_op("relu", np.maximum(x.data, 0.0), (x,),
                     lambda g, needs: (g * (x.data > 0),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return record_op("sigmoid", s, (x,), lambda g, needs: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return record_op("tanh", t, (x,), lambda g, needs: (g * (1.0 - t * t),))


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = x.data.sum(axis=axis)

    def bw(g, needs):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return record_op("sum", np.asarray(out), (x,), bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis)
    count = x.size // max(np.asarray(out).size, 1) if x.size else 1

    def bw(g, needs):
        if axis is None:
            return (np.full(x.shape, float(g) / x.size),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape) / count,)

    return record_op("mean", np.asarray(out), (x,), bw)


# ---------------------------------------------------------------------------
# convolution


def _conv_out(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _conv_checks(x: Tensor, w: Tensor, stride: int, padding: int) -> None:
    if x.ndim not in (4, 5):
        raise ShapeError(f"conv3d: input must be [C,D,H,W] or [N,C,D,H,W], got {x.shape}")
    if w.ndim != 5 or not (w.shape[2] == w.shape[3] == w.shape[4]):
        raise ShapeError(f"conv3d: kernels must be [C_out,C_in,k,k,k], got {w.shape}")
    if x.shape[-4] != w.shape[1]:
        raise ShapeError(f"conv3d: channel mismatch between {x.shape} and {w.shape}")
    if int(stride) != stride or stride < 1 or padding < 0:
        raise ShapeError(f"conv3d: invalid stride={stride} padding={padding}")
    k = w.shape[2]
    if any(k > n + 2 * padding for n in x.shape[-3:]):
        raise ShapeError(f"conv3d: kernel {w.shape} larger than padded input {x.shape}"
                         f" (padding={padding})")


def conv3d(x, weight, bias=None, stride: int = 1, padding: int = 0,
           method: str = "im2col") -> Tensor:
    """3-D cross-correlation with zero padding.

    ``method="direct"`` is the reference loop; ``"im2col"`` gathers patches
    into a matrix and does one matmul.  Both return the same values and
    gradients to rounding.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _conv_checks(x, weight, stride, padding)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv3d: bias shape {bias.shape} does not match {weight.shape}")
    unbatched = x.ndim == 4
    xd = x.data[None] if unbatched else x.data
    if method == "im2col":
        out, bw_core = _conv3d_im2col(xd, weight.data, stride, padding)
    elif method == "direct":
        out, bw_core = _conv3d_direct(xd, weight.data, stride, padding)
    else:
        raise ValueError(f"conv3d: unknown method {method!r}")
    if bias is not None:
        out = out + bias.data[None, :, None, None, None]
    inputs = [x, weight] + ([bias] if bias is not None else [])

    def bw(g, needs):
        g5 = g[None] if unbatched else g
        gx, gw = bw_core(g5, needs[0], needs[1])
        if gx is not None and unbatched:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g5.sum(axis=(0, 2, 3, 4)) if needs[2] else None)
        return grads

    return record_op("conv3d", out[0] if unbatched else out, inputs, bw)


def _pad(xd: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return xd
    return np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))


def _columns(xp: np.ndarray, k: int, stride: int) -> tuple:
    """Gather patches into a [k*k*k*C, N*D'*H'*W'] matrix, one copy per kernel offset."""
    n, c = xp.shape[:2]
    dims = tuple((s - k) // stride + 1 for s in xp.shape[2:])
    xc = xp.transpose(1, 0, 2, 3, 4)
    cols = np.empty((k, k, k, c, n) + dims)
    span = [(d - 1) * stride + 1 for d in dims]
    for a in range(k):
        for b in range(k):
            for e in range(k):
                cols[a, b, e] = xc[:, :, a:a + span[0]:stride, b:b + span[1]:stride,
                                   e:e + span[2]:stride]
    return cols.reshape(k ** 3 * c, -1), dims


def _correlate(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    o, _, k = w.shape[:3]
    cols, dims = _columns(xp, k, stride)
    wr = w.transpose(0, 2, 3, 4, 1).reshape(o, -1)
    return (wr @ cols).reshape(o, xp.shape[0], *dims).transpose(1, 0, 2, 3, 4)


def _conv3d_im2col(xd, w, stride, padding):
    k = w.shape[2]
    xp = _pad(xd, padding)
    out = _correlate(xp, w, stride)

    def bw(g, need_x, need_w):
        gw = None
        if need_w:
            # columns are rebuilt rather than kept alive between passes
            cols, _ = _columns(xp, k, stride)
            o, c = w.shape[:2]
            gr = g.transpose(1, 0, 2, 3, 4).reshape(o, -1)
            gw = (gr @ cols.T).reshape(o, k, k, k, c).transpose(0, 4, 1, 2, 3)
        gx = None
        if need_x:
            # input gradient = full correlation of the dilated output gradient
            # with the spatially flipped, channel-swapped kernel
            n, o = g.shape[:2]
            dil_shape = tuple((s - 1) * stride + 1 for s in g.shape[2:])
            need = tuple(s + k - 1 for s in xd.shape[2:])
            lo = k - 1 - padding
            src, dst = [slice(None)] * 2, [slice(None)] * 2
            for size_dil, size_need in zip(dil_shape, need):
                a = max(0, -lo)
                b = min(size_dil, size_need - lo)
                src.append(slice(a, b, None))
                dst.append(slice(a + lo, b + lo))
            dil = np.zeros((n, o) + dil_shape)
            dil[:, :, ::stride, ::stride, ::stride] = g
            gpad = np.zeros((n, o) + need)
            gpad[tuple(dst)] = dil[tuple(src)]
            wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4))
            gx = _correlate(gpad, wflip, 1)
        return gx, gw

    return out, bw


def _conv3d_direct(xd, w, stride, padding):
    n = xd.shape[0]
    o, _, k = w.shape[:3]
    xp = _pad(xd, padding)
    dims = [_conv_out(s, k, stride, padding) for s in xd.shape[2:]]
    out = np.zeros((n, o, *dims))
    for b in range(n):
        for oc in range(o):
            for i in range(dims[0]):
                for j in range(dims[1]):
                    for m in range(dims[2]):
                        patch = xp[b, :, i * stride:i * stride + k, j * stride:j * stride + k,
                                   m * stride:m * stride + k]
                        out[b, oc, i, j, m] = np.sum(patch * w[oc])

    def bw(g, need_x, need_w):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        for b in range(n):
            for oc in range(o):
                for i in range(dims[0]):
                    for j in range(dims[1]):
                        for m in range(dims[2]):
                            sl = (b, slice(None), slice(i * stride, i * stride + k),
                                  slice(j * stride, j * stride + k),
                                  slice(m * stride, m * stride + k))
                            gv = g[b, oc, i, j, m]
                            gw[oc] += gv * xp[sl]
                            gxp[sl] += gv * w[oc]
        p = padding
        gx = gxp[:, :, p:p + xd.shape[2], p:p + xd.shape[3], p:p + xd.shape[4]] if p else gxp
        return (gx if need_x else None), (gw if need_w else None)

    return out, bw


# ---------------------------------------------------------------------------
# normalization and losses


def instance_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over spatial axes with learned scale/shift.

    x is [C,D,H,W] or [N,C,D,H,W]; gamma and beta are [C].
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim not in (4, 5):
        raise ShapeError(f"instance_norm: input must be [C,D,H,W] or [N,C,D,H,W], got {x.shape}")
    caxis = x.ndim - 4
    c = x.shape[caxis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: scale/shift {gamma.shape} do not match {x.shape}")
    axes = tuple(range(caxis + 1, x.ndim))
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    bshape = [1] * x.ndim
    bshape[caxis] = c
    g_ = gamma.data.reshape(bshape)
    out = g_ * xhat + beta.data.reshape(bshape)
    red = tuple(i for i in range(x.ndim) if i != caxis)

    def bw(g, needs):
        gx = None
        if needs[0]:
            dxhat = g * g_
            gx = inv * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
        ggamma = (g * xhat).sum(axis=red) if needs[1] else None
        gbeta = g.sum(axis=red) if needs[2] else None
        return gx, ggamma, gbeta

    return record_op("instance_norm", out, (x, gamma, beta), bw)


def bce_with_logits(logits, labels) -> Tensor:
    """Mean binary cross-entropy on raw logits, stable for large |logit|."""
    logits = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: incompatible shapes {logits.shape} and {y.shape}")
    x = logits.data
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    count = max(x.size, 1)

    def bw(g, needs):
        return ((expit(x) - y) * (float(g) / count),)

    return record_op("bce_with_logits", np.asarray(per.mean()), (logits,), bw)


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    errors: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def grad_check(build: Callable, params: dict, tolerance: float = 1e-5,
               step: float = 1e-5, max_elements: int | None = None,
               seed: int = 0, floor: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients of ``build(params)`` with central differences.

    ``build`` must return a scalar Tensor.  Relative error per element is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``; the report
    holds the maximum per parameter.  ``max_elements`` checks a seeded random
    subset of each parameter's entries.
    """
    with Tape() as tape:
        loss = build(params)
    if loss.size != 1:
        raise GradientError(f"grad_check needs a scalar loss, got shape {loss.shape}")
    tape.backward(loss)
    analytic = {name: np.array(p.grad) for name, p in params.items()}
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = np.sort(rng.choice(flat.size, max_elements, replace=False))
        a = analytic[name].reshape(-1)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = build(params).item()
            flat[i] = orig - step
            f_minus = build(params).item()
            flat[i] = orig
            num = (f_plus - f_minus) / (2.0 * step)
            err = abs(a[i] - num) / max(abs(a[i]), abs(num), floor)
            worst = max(worst, err)
        errors[name] = worst
    return GradCheckReport(errors, tolerance)
