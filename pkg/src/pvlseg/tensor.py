"""Reverse-mode differentiable array engine on top of numpy.

Values live in numpy arrays (float64 by default, float32 for the training
profile); the computation graph is a lightweight tape of closures replayed
in reverse topological order. Gradients accumulate, so shared subexpressions
are handled correctly. A counter-based RNG (splitmix64 + Box-Muller) makes
Gaussian sampling reproducible across runs and platforms.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf as _erf

DEFAULT_DTYPE = np.float64

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the contract forbids one."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A shape-tagged array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        # gradients are never mutated in place, so adopting g (even a view)
        # is safe and avoids a copy per edge
        if self.grad is None:
            self.grad = g if g.dtype == self.data.dtype else g.astype(self.data.dtype)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Reverse-accumulate gradients from this scalar into every reachable
        tensor with requires_grad. Iterative topological order, so deep
        graphs do not hit the recursion limit."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index_select(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or not isinstance(shape[0], (tuple, list)) else shape[0])

    def permute(self, *axes):
        return permute(self, axes if len(axes) != 1 or not isinstance(axes[0], (tuple, list)) else axes[0])

    def sum(self, axis=None, keepdims=False):
        return sum_axes(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_axes(self, axis, keepdims)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def parameter(data, name: str | None = None) -> Tensor:
    """Leaf tensor that receives gradients."""
    return Tensor(np.array(data), requires_grad=True, name=name)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
    return Tensor(arr)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result; attach the tape node only when a grad can flow."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = parents
        out._backward = backward_fn
        return out
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over axes that were broadcast to reach g's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _result(-a.data, (a,), bw)


# -- matmul ----------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product; batch prefixes broadcast like numpy matmul."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(data, (a, b), bw)


# -- unary functions -------------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _result(data, (a,), bw)


def log(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _result(np.log(a.data), (a,), bw)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / data)

    return _result(data, (a,), bw)


def square(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * 2.0 * a.data)

    return _result(a.data * a.data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * data * (1.0 - data))

    return _result(data, (a,), bw)


def softplus(a) -> Tensor:
    """zeta(x) = log(1 + exp(x)), computed on the stable branch per sign."""
    a = as_tensor(a)
    x = a.data
    data = np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))

    def bw(g):
        if a.requires_grad:
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            a._accumulate(g * s)

    return _result(data, (a,), bw)


def gelu(a) -> Tensor:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    a = as_tensor(a)
    x = a.data
    e = _erf(x * _INV_SQRT2)
    data = 0.5 * x * (1.0 + e)

    def bw(g):
        if a.requires_grad:
            d = 0.5 * (1.0 + e) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI
            a._accumulate(g * d)

    return _result(data, (a,), bw)


# -- normalizations --------------------------------------------------------


def softmax_lastdim(a) -> Tensor:
    """Max-subtracted exponential normalization over the last axis."""
    a = as_tensor(a)
    if a.shape[-1] < 1:
        raise ShapeError("softmax over an empty last axis")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=-1, keepdims=True)
            a._accumulate(data * (g - dot))

    return _result(data, (a,), bw)


def l2_normalize_lastdim(a, eps: float = 1e-12) -> Tensor:
    """Divide each last-axis vector by max(||v||, eps).

    Near-zero vectors pass through scaled by the 1/eps guard; the gradient
    treats the guarded norm as constant there.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    m = np.maximum(norm, eps)
    data = a.data / m

    def bw(g):
        if a.requires_grad:
            active = norm > eps
            dot = (g * data).sum(axis=-1, keepdims=True)
            ga = np.where(active, (g - data * dot) / m, g / m)
            a._accumulate(ga)

    return _result(data, (a,), bw)


# -- reductions ------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_axes(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if a.requires_grad:
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axes)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _result(data, (a,), bw)


def mean_axes(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if a.requires_grad:
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axes)
            a._accumulate(np.broadcast_to(gg, a.shape) / n)

    return _result(data, (a,), bw)


# -- shape manipulation ----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _result(data, (a,), bw)


def permute(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = np.argsort(axes)

    def bw(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inv))

    return _result(np.transpose(a.data, axes), (a,), bw)


def transpose_last2(a) -> Tensor:
    """Swap the trailing two axes."""
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(a, axes)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = np.broadcast_to(a.data, shape)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))

    return _result(data.copy(), (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _result(data, tuple(tensors), bw)


def _has_advanced_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def index_select(a, idx) -> Tensor:
    """Basic and advanced indexing; backward scatter-adds into the source."""
    a = as_tensor(a)
    data = a.data[idx]
    advanced = _has_advanced_index(idx)

    def bw(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            if advanced:
                np.add.at(ga, idx, g)
            else:
                ga[idx] += g
            a._accumulate(ga)

    return _result(np.array(data, copy=True), (a,), bw)


def take_rows(table, ids) -> Tensor:
    """Embedding lookup: table[V, D] gathered by an integer id array."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ShapeError(f"ids out of range for table with {table.shape[0]} rows")
    data = table.data[ids]

    def bw(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            table._accumulate(gt)

    return _result(data, (table,), bw)


def select_positions(x, pos) -> Tensor:
    """x[B, T, D] gathered at one position per batch row -> [B, D]."""
    x = as_tensor(x)
    pos = np.asarray(pos)
    b = np.arange(x.shape[0])
    data = x.data[b, pos]

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[b, pos] = g
            x._accumulate(gx)

    return _result(data.copy(), (x,), bw)


# -- spatial ops -----------------------------------------------------------


def nearest_upsample2x(x) -> Tensor:
    """Nearest-neighbor 2x upsampling of [B, C, H, W]."""
    x = as_tensor(x)
    data = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def bw(g):
        if x.requires_grad:
            b, c, h, w = x.shape
            x._accumulate(g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _result(data, (x,), bw)


def _bilinear_weights(n_in: int, n_out: int):
    """Half-pixel-center source coordinates: lo/hi indices and hi weight."""
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1.0)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    w = coords - lo
    return lo, hi, w


def bilinear_upsample(x, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation of [B, C, H, W] to (out_h, out_w), half-pixel centers."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"bilinear_upsample expects [B,C,H,W], got {x.shape}")
    b, c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target extents must be positive, got ({out_h}, {out_w})")
    if out_h < h or out_w < w:
        raise ShapeError(f"target ({out_h}, {out_w}) smaller than source ({h}, {w})")
    i0, i1, wi = _bilinear_weights(h, out_h)
    j0, j1, wj = _bilinear_weights(w, out_w)
    wi_c = wi[:, None].astype(x.dtype)
    wj_c = wj[None, :].astype(x.dtype)
    xd = x.data
    data = (
        xd[..., i0[:, None], j0[None, :]] * (1 - wi_c) * (1 - wj_c)
        + xd[..., i0[:, None], j1[None, :]] * (1 - wi_c) * wj_c
        + xd[..., i1[:, None], j0[None, :]] * wi_c * (1 - wj_c)
        + xd[..., i1[:, None], j1[None, :]] * wi_c * wj_c
    )

    def bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros((b * c, h, w), dtype=x.dtype)
        gflat = g.reshape(b * c, out_h, out_w)
        rows = np.arange(b * c)[:, None, None]
        for ii, jj, ww in (
            (i0, j0, (1 - wi_c) * (1 - wj_c)),
            (i0, j1, (1 - wi_c) * wj_c),
            (i1, j0, wi_c * (1 - wj_c)),
            (i1, j1, wi_c * wj_c),
        ):
            np.add.at(gx, (rows, ii[None, :, None], jj[None, None, :]), gflat * ww)
        x._accumulate(gx.reshape(b, c, h, w))

    return _result(data, (x,), bw)


def conv2d_3x3(x, weight, bias) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1, on [B, C_in, H, W].

    weight: [C_out, C_in, 3, 3], bias: [C_out]. im2col + one GEMM.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    b, cin, h, w = x.shape
    cout = weight.shape[0]
    if weight.shape != (cout, cin, 3, 3):
        raise ShapeError(f"conv weight {weight.shape} incompatible with input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # [B, HW, C*9]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h * w, cin * 9)
    w2 = weight.data.reshape(cout, cin * 9)
    out = cols @ w2.T + bias.data
    data = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, cout, h, w)

    def bw(g):
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        need_x = x.requires_grad
        need_w = weight.requires_grad
        if not (need_x or need_w):
            return
        gflat = np.ascontiguousarray(g.reshape(b, cout, h * w).transpose(0, 2, 1))
        if need_w:
            gw = np.tensordot(gflat, cols, axes=([0, 1], [0, 1]))  # [cout, cin*9]
            weight._accumulate(gw.reshape(cout, cin, 3, 3))
        if need_x:
            gcols = gflat @ w2  # [B, HW, C*9]
            gcols = gcols.reshape(b, h, w, cin, 3, 3)
            gxp = np.zeros_like(xp)
            for ki in range(3):
                for kj in range(3):
                    gxp[:, :, ki:ki + h, kj:kj + w] += gcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            x._accumulate(gxp[:, :, 1:1 + h, 1:1 + w])

    return _result(data, (x, weight, bias), bw)


# -- RNG -------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x) -> np.ndarray:
    """Finalizer of splitmix64; exact 64-bit wraparound arithmetic."""
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z if np.ndim(x) else z[0]


class Rng:
    """Deterministic counter-based random stream.

    Draw k of stream (seed, stream_id) is a pure function of
    (seed, stream_id, k): splitmix64 output mapped to (0,1) uniforms,
    paired through Box-Muller for Gaussians. Identical (seed, draw
    sequence) therefore reproduces identical samples everywhere.
    """

    algorithm = "splitmix64-boxmuller"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        base = _splitmix64(np.uint64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(np.uint64(stream & 0xFFFFFFFFFFFFFFFF))))
        self._key = np.uint64(base)
        self.counter = 0

    def spawn(self, index: int) -> "Rng":
        """Independent child stream derived from (seed, index)."""
        return Rng(self.seed, (self.stream * 1000003 + index + 1) & 0x7FFFFFFFFFFFFFFF)

    def _raw(self, n: int) -> np.ndarray:
        ks = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            keyed = self._key + ks * _GOLDEN
        return _splitmix64(keyed)

    def uniform(self, shape=()) -> np.ndarray:
        """Open-interval (0,1) uniforms."""
        n = int(np.prod(shape)) if shape else 1
        bits = self._raw(n)
        u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=(), dtype=None) -> np.ndarray:
        """Standard Gaussians via Box-Muller (both outputs used)."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = np.asarray(self.uniform((m,)))
        u2 = np.asarray(self.uniform((m,)))
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        if dtype is not None:
            z = z.astype(dtype)
        return z.reshape(shape) if shape else z[0]

    def gaussian_tensor(self, shape, dtype=None) -> Tensor:
        """Non-differentiable tensor of standard Gaussian draws."""
        return Tensor(self.normal(shape, dtype=dtype))

    def shuffled(self, n: int) -> np.ndarray:
        """Deterministic Fisher-Yates permutation of range(n)."""
        order = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self._raw(1)[0] % np.uint64(i + 1))
            order[i], order[j] = order[j], order[i]
        return order


def check_finite(stage: str, *tensors: Tensor):
    """Raise NumericError naming the first stage holding a non-finite value."""
    for t in tensors:
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"non-finite value at stage '{stage}'")
