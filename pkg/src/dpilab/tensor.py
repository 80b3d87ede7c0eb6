"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: row-major contiguous storage, no views, no broadcasting
beyond scalar-vs-tensor, first-order gradients only. Convolutions are fixed
to 3x3 / stride 1 / zero-pad 1, the only configuration the networks here use.
Image ops accept [C,H,W] or a batched [N,C,H,W] layout.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError, UsageError

Array = np.ndarray


class Tensor:
    """Dense n-d float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "grad_tracked")

    def __init__(self, data, grad_tracked: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d to 1-d; keep rank, force C order
        if not (arr.flags.c_contiguous and arr.flags.writeable):
            arr = np.array(arr, order="C")
        self.data = arr
        self.grad: Array | None = None
        self.grad_tracked = bool(grad_tracked)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def sum(self) -> "Tensor":
        return tsum(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tracked={self.grad_tracked})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class Tape:
    """Ordered record of one forward pass; backward() replays it in reverse.

    One tape per forward+backward pass, single execution context. A consumed
    tape refuses further records.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[Array], None]]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, pull: Callable[[Array], None]) -> None:
        if self._consumed:
            raise UsageError("tape already consumed by backward()")
        self._records.append((out, pull))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every tracked tensor the scalar loss depends on."""
        if self._consumed:
            raise UsageError("tape already consumed by backward()")
        if loss.shape != ():
            raise UsageError(f"backward() needs a 0-d loss, got shape {loss.shape}")
        if not loss.grad_tracked:
            raise UsageError("loss does not depend on any tracked tensor")
        loss.grad = np.ones(())
        for out, pull in reversed(self._records):
            if out.grad is not None:
                pull(out.grad)
        self._records.clear()
        self._consumed = True


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: Array, own: bool = False) -> None:
    # own=True promises g is a fresh buffer not aliased by anyone else,
    # so the first accumulation can adopt it without copying
    if t.grad is None:
        t.grad = g if own else np.array(g)
    else:
        t.grad += g


def _reduce_to(g: Array, shape: tuple[int, ...]) -> Array:
    # only ()-vs-nd broadcasting exists, so the reduction is a full sum
    return g if g.shape == shape else np.sum(g).reshape(shape)


def _finish(out_data: Array, pull: Callable[[Array], None], *inputs: Tensor) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.grad_tracked for t in inputs):
        out = Tensor(out_data, grad_tracked=True)
        tape._record(out, pull)
        return out
    return Tensor(out_data)


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")

    def pull(g):
        if a.grad_tracked:
            r = _reduce_to(g, a.shape)
            _accum(a, r, own=r is not g)
        if b.grad_tracked:
            r = _reduce_to(g, b.shape)
            _accum(b, r, own=r is not g)

    return _finish(a.data + b.data, pull, a, b)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "sub")

    def pull(g):
        if a.grad_tracked:
            r = _reduce_to(g, a.shape)
            _accum(a, r, own=r is not g)
        if b.grad_tracked:
            _accum(b, _reduce_to(-g, b.shape), own=True)

    return _finish(a.data - b.data, pull, a, b)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")

    def pull(g):
        if a.grad_tracked:
            _accum(a, _reduce_to(g * b.data, a.shape), own=True)
        if b.grad_tracked:
            _accum(b, _reduce_to(g * a.data, b.shape), own=True)

    return _finish(a.data * b.data, pull, a, b)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "div")

    def pull(g):
        if a.grad_tracked:
            _accum(a, _reduce_to(g / b.data, a.shape), own=True)
        if b.grad_tracked:
            _accum(b, _reduce_to(-g * a.data / (b.data * b.data), b.shape), own=True)

    return _finish(a.data / b.data, pull, a, b)


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    x = _as_tensor(x)

    def pull(g):
        if x.grad_tracked:
            _accum(x, np.broadcast_to(g, x.data.shape))

    return _finish(np.sum(x.data), pull, x)


def mean_all(x: Tensor) -> Tensor:
    """Mean over all elements, as a 0-d tensor."""
    return div(tsum(x), float(x.size))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} vs {b.shape})")

    def pull(g):
        if a.grad_tracked:
            _accum(a, g @ b.data.T, own=True)
        if b.grad_tracked:
            _accum(b, a.data.T @ g, own=True)

    return _finish(a.data @ b.data, pull, a, b)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b). x is [k] or [N,k]; w is [k,n]; b is [n]."""
    x, w = _as_tensor(x), _as_tensor(w)
    if w.data.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-d, got {w.shape}")
    if x.data.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data
    if b is not None:
        out += b.data

    def pull(g):
        if x.grad_tracked:
            _accum(x, g @ w.data.T, own=True)
        if w.grad_tracked:
            if x.data.ndim == 1:
                _accum(w, np.outer(x.data, g), own=True)
            else:
                _accum(w, x.data.T @ g, own=True)
        if b is not None and b.grad_tracked:
            if g.ndim == 1:
                _accum(b, g)
            else:
                _accum(b, g.sum(axis=0), own=True)

    inputs = (x, w) if b is None else (x, w, b)
    return _finish(out, pull, *inputs)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def pull(g):
        if x.grad_tracked:
            _accum(x, g * (x.data > 0.0), own=True)

    return _finish(np.maximum(x.data, 0.0), pull, x)


def silu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    sig = 1.0 / (1.0 + np.exp(-x.data))

    def pull(g):
        if x.grad_tracked:
            # silu'(u) = sigma(u) * (1 + u * (1 - sigma(u)))
            _accum(x, g * (sig * (1.0 + x.data * (1.0 - sig))), own=True)

    return _finish(x.data * sig, pull, x)


# ---------------------------------------------------------------------------
# image ops (3-d [C,H,W] or batched 4-d [N,C,H,W])
# ---------------------------------------------------------------------------

def _as_nchw(x: Tensor, op: str) -> tuple[Array, bool]:
    if x.data.ndim == 3:
        return x.data[None], True
    if x.data.ndim == 4:
        return x.data, False
    raise ShapeError(f"{op}: expected [C,H,W] or [N,C,H,W], got {x.shape}")


def conv2d(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1; spatial size preserved."""
    x, w, bias = _as_tensor(x), _as_tensor(w), _as_tensor(bias)
    xd, squeeze = _as_nchw(x, "conv2d")
    if w.data.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: kernel must be [C_out,C_in,3,3], got {w.shape}")
    co, ci = w.shape[0], w.shape[1]
    n, c, h, wd_ = xd.shape
    if c != ci:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {ci}")
    if bias.shape != (co,):
        raise ShapeError(f"conv2d: bias {bias.shape} incompatible with {co} output channels")

    xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (1, 1)))
    patches = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = np.ascontiguousarray(patches.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * wd_, ci * 9)
    wmat = w.data.reshape(co, ci * 9).T
    out = (cols @ wmat + bias.data).reshape(n, h, wd_, co).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]

    def pull(g):
        g4 = g[None] if squeeze else g
        gmat = np.ascontiguousarray(g4.transpose(0, 2, 3, 1)).reshape(n * h * wd_, co)
        if bias.grad_tracked:
            _accum(bias, gmat.sum(axis=0), own=True)
        if w.grad_tracked:
            _accum(w, np.ascontiguousarray((cols.T @ gmat).T).reshape(co, ci, 3, 3),
                   own=True)
        if x.grad_tracked:
            dcols = (gmat @ wmat.T).reshape(n, h, wd_, ci, 3, 3).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, ci, h + 2, wd_ + 2))
            for di in range(3):
                for dj in range(3):
                    dxp[:, :, di:di + h, dj:dj + wd_] += dcols[:, :, :, :, di, dj]
            dx = np.ascontiguousarray(dxp[:, :, 1:h + 1, 1:wd_ + 1])
            _accum(x, dx[0] if squeeze else dx, own=True)

    return _finish(np.ascontiguousarray(out), pull, x, w, bias)


def group_norm(x: Tensor, groups: int, gain: Tensor, shift: Tensor) -> Tensor:
    """Per-group mean-0/var-1 normalization with a 1e-5 stabilizer, then a
    per-channel affine."""
    x, gain, shift = _as_tensor(x), _as_tensor(gain), _as_tensor(shift)
    xd, squeeze = _as_nchw(x, "group_norm")
    n, c, h, wd_ = xd.shape
    if c % groups != 0:
        raise ShapeError(f"group_norm: {c} channels not divisible by {groups} groups")
    if gain.shape != (c,) or shift.shape != (c,):
        raise ShapeError("group_norm: gain/shift must be per-channel vectors")

    m = (c // groups) * h * wd_
    xg = xd.reshape(n, groups, m)
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + 1e-5)
    xhat = (xc * inv).reshape(n, c, h, wd_)
    out = gain.data[None, :, None, None] * xhat + shift.data[None, :, None, None]
    if squeeze:
        out = out[0]

    def pull(g):
        g4 = g[None] if squeeze else g
        if gain.grad_tracked:
            _accum(gain, np.sum(g4 * xhat, axis=(0, 2, 3)), own=True)
        if shift.grad_tracked:
            _accum(shift, np.sum(g4, axis=(0, 2, 3)), own=True)
        if x.grad_tracked:
            dxh = (g4 * gain.data[None, :, None, None]).reshape(n, groups, m)
            xh = xhat.reshape(n, groups, m)
            mean_dxh = dxh.mean(axis=-1, keepdims=True)
            mean_dxh_xh = np.mean(dxh * xh, axis=-1, keepdims=True)
            dx = (inv * (dxh - mean_dxh - xh * mean_dxh_xh)).reshape(n, c, h, wd_)
            _accum(x, dx[0] if squeeze else dx, own=True)

    return _finish(out, pull, x, gain, shift)


def channel_affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Per-channel scale-and-shift of a [C,H,W] / [N,C,H,W] feature map."""
    x, scale, shift = _as_tensor(x), _as_tensor(scale), _as_tensor(shift)
    xd, squeeze = _as_nchw(x, "channel_affine")
    c = xd.shape[1]
    if scale.shape != (c,) or shift.shape != (c,):
        raise ShapeError("channel_affine: scale/shift must be per-channel vectors")
    out = scale.data[None, :, None, None] * xd + shift.data[None, :, None, None]
    if squeeze:
        out = out[0]

    def pull(g):
        g4 = g[None] if squeeze else g
        if scale.grad_tracked:
            _accum(scale, np.sum(g4 * xd, axis=(0, 2, 3)), own=True)
        if shift.grad_tracked:
            _accum(shift, np.sum(g4, axis=(0, 2, 3)), own=True)
        if x.grad_tracked:
            dx = g4 * scale.data[None, :, None, None]
            _accum(x, dx[0] if squeeze else dx, own=True)

    return _finish(out, pull, x, scale, shift)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling; spatial dims must be even."""
    x = _as_tensor(x)
    xd, squeeze = _as_nchw(x, "avg_pool2")
    n, c, h, wd_ = xd.shape
    if h % 2 or wd_ % 2:
        raise ShapeError(f"avg_pool2: spatial dims must be even, got {h}x{wd_}")
    out = xd.reshape(n, c, h // 2, 2, wd_ // 2, 2).mean(axis=(3, 5))
    if squeeze:
        out = out[0]

    def pull(g):
        g4 = g[None] if squeeze else g
        if x.grad_tracked:
            dx = np.repeat(np.repeat(g4 / 4.0, 2, axis=2), 2, axis=3)
            _accum(x, dx[0] if squeeze else dx, own=True)

    return _finish(out, pull, x)


def upsample_nearest2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling."""
    x = _as_tensor(x)
    xd, squeeze = _as_nchw(x, "upsample_nearest2")
    n, c, h, wd_ = xd.shape
    out = np.repeat(np.repeat(xd, 2, axis=2), 2, axis=3)
    if squeeze:
        out = out[0]

    def pull(g):
        g4 = g[None] if squeeze else g
        if x.grad_tracked:
            dx = g4.reshape(n, c, h, 2, wd_, 2).sum(axis=(3, 5))
            _accum(x, dx[0] if squeeze else dx, own=True)

    return _finish(np.ascontiguousarray(out), pull, x)


# ---------------------------------------------------------------------------
# vector ops used by the interpolation function
# ---------------------------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Numerically stable softmax of a 1-d vector (max subtraction)."""
    x = _as_tensor(x)
    if x.data.ndim != 1:
        raise ShapeError(f"softmax: expects a 1-d vector, got {x.shape}")
    e = np.exp(x.data - x.data.max())
    p = e / e.sum()

    def pull(g):
        if x.grad_tracked:
            _accum(x, p * (g - np.dot(g, p)), own=True)

    return _finish(p, pull, x)


def cumulative_sum(x: Tensor) -> Tensor:
    """Prefix sums of a 1-d vector; adjoint is the reverse prefix sum."""
    x = _as_tensor(x)
    if x.data.ndim != 1:
        raise ShapeError(f"cumulative_sum: expects a 1-d vector, got {x.shape}")

    def pull(g):
        if x.grad_tracked:
            _accum(x, np.ascontiguousarray(np.cumsum(g[::-1])[::-1]), own=True)

    return _finish(np.cumsum(x.data), pull, x)


def element(x: Tensor, index: int) -> Tensor:
    """Select one element by flat index, as a 0-d tensor."""
    x = _as_tensor(x)
    if not 0 <= index < x.size:
        raise ShapeError(f"element: index {index} out of range for size {x.size}")
    out = np.array(x.data.reshape(-1)[index])

    def pull(g):
        if x.grad_tracked:
            dx = np.zeros_like(x.data)
            dx.reshape(-1)[index] = g
            _accum(x, dx, own=True)

    return _finish(out, pull, x)


def scalar_lerp(a: Tensor, b: Tensor, t: Tensor) -> Tensor:
    """(1 - t) * a + t * b with a 0-d weight; fused so parameter blending
    costs one tape record per tensor.

    Adjoints: da = (1-t) g, db = t g, dt = <b - a, g>. Evaluates to a
    bit-exactly at t = 0 and to b at t = 1.
    """
    a, b, t = _as_tensor(a), _as_tensor(b), _as_tensor(t)
    if a.shape != b.shape:
        raise ShapeError(f"scalar_lerp: shapes {a.shape} and {b.shape} differ")
    if t.shape != ():
        raise ShapeError(f"scalar_lerp: weight must be 0-d, got {t.shape}")
    tv = float(t.data)
    out = (1.0 - tv) * a.data + tv * b.data

    def pull(g):
        if a.grad_tracked:
            _accum(a, (1.0 - tv) * g, own=True)
        if b.grad_tracked:
            _accum(b, tv * g, own=True)
        if t.grad_tracked:
            _accum(t, np.array(np.sum(g * (b.data - a.data))), own=True)

    return _finish(out, pull, a, b, t)


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop] of a 1-d vector."""
    x = _as_tensor(x)
    if x.data.ndim != 1:
        raise ShapeError(f"slice1d: expects a 1-d vector, got {x.shape}")
    if not 0 <= start < stop <= x.size:
        raise ShapeError(f"slice1d: bad range [{start}:{stop}] for size {x.size}")

    def pull(g):
        if x.grad_tracked:
            dx = np.zeros_like(x.data)
            dx[start:stop] = g
            _accum(x, dx, own=True)

    return _finish(x.data[start:stop].copy(), pull, x)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: needs at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def pull(g):
        pieces = np.split(g, offsets, axis=axis)
        for p, piece in zip(parts, pieces):
            if p.grad_tracked:
                _accum(p, piece)

    return _finish(out, pull, *parts)


# ---------------------------------------------------------------------------
# gradient checking oracle
# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[Tensor], "Tensor | float"],
                               x: Tensor, h: float = 1e-6) -> Array:
    """Central-difference gradient of a scalar function, one coordinate at a
    time: (f(x + h e_i) - f(x - h e_i)) / 2h. Test oracle; never taped."""
    if h <= 0:
        raise DomainError(f"finite_difference_gradient: h must be positive, got {h}")

    def evaluate() -> float:
        val = f(x)
        return val.item() if isinstance(val, Tensor) else float(val)

    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = evaluate()
        flat[i] = orig - h
        fm = evaluate()
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.data.shape)
