"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every primitive records its inputs and a backward closure
on the output tensor, so the graph rebuilt each forward pass doubles as
the tape. ``Tensor.backward()`` walks it once in reverse topological
order and accumulates gradients into leaf tensors.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ParamStore",
    "ShapeError",
    "DomainError",
    "NonFiniteError",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "sqrt",
    "clip",
    "reshape",
    "concat",
    "stack",
    "getitem",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "reduce",
    "softmax",
    "cosine_similarity",
    "cosine_rows",
    "linear_map",
    "conv2d",
    "maxpool2d",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested primitive."""


class DomainError(ValueError):
    """Input values are outside the primitive's domain."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "_inputs", "_backward", "name")

    def __init__(self, data, _inputs=(), _backward=None, name=None):
        self.data = _as_array(data)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(
                f"non-finite values in tensor {name or '<anon>'}"
            )
        self.grad: np.ndarray | None = None
        self._inputs: tuple[Tensor, ...] = _inputs
        self._backward = _backward
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

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        Requires a scalar output. Intermediate gradients are dropped once
        consumed; leaf (parameter/input) gradients persist and add up
        across calls until zeroed.
        """
        if self.data.size != 1:
            raise DomainError("backward() requires a scalar loss tensor")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._inputs:
                # free intermediate grads/graph as we go
                node.grad = None if node is not self else node.grad
        # detach so repeated backward() calls don't re-walk a freed graph
        for node in order:
            if node._inputs:
                node._inputs = ()
                node._backward = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in node._inputs:
            if id(inp) not in seen:
                stack.append((inp, False))
    return order


def tensor(data, name=None) -> Tensor:
    return Tensor(data, name=name)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / structural primitives


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, (a, b))

    def _bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data, (a, b))

    def _bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data, (a, b))

    def _bw(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward = _bw
    return out


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data / b.data, (a, b))

    def _bw(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, (a, b))

    def _bw(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    out._backward = _bw
    return out


def relu(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))
    mask = a.data > 0.0

    def _bw(g):
        a._accumulate(g * mask)

    out._backward = _bw
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # numerically stable in both tails
    s = np.empty_like(a.data)
    pos = a.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    s[~pos] = ez / (1.0 + ez)
    out = Tensor(s, (a,))

    def _bw(g):
        a._accumulate(g * s * (1.0 - s))

    out._backward = _bw
    return out


def exp(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.exp(a.data), (a,))

    def _bw(g):
        a._accumulate(g * out.data)

    out._backward = _bw
    return out


def log(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log requires strictly positive input")
    out = Tensor(np.log(a.data), (a,))

    def _bw(g):
        a._accumulate(g / a.data)

    out._backward = _bw
    return out


def sqrt(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt requires non-negative input")
    out = Tensor(np.sqrt(a.data), (a,))

    def _bw(g):
        a._accumulate(g * 0.5 / np.maximum(out.data, 1e-300))

    out._backward = _bw
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through only inside."""
    a = _wrap(a)
    out = Tensor(np.clip(a.data, lo, hi), (a,))
    mask = (a.data >= lo) & (a.data <= hi)

    def _bw(g):
        a._accumulate(g * mask)

    out._backward = _bw
    return out


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape), (a,))

    def _bw(g):
        a._accumulate(g.reshape(a.data.shape))

    out._backward = _bw
    return out


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise DomainError("concat of an empty list")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def _bw(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    out._backward = _bw
    return out


def stack(parts, axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise DomainError("stack of an empty list")
    out = Tensor(np.stack([p.data for p in parts], axis=axis), tuple(parts))

    def _bw(g):
        for i, p in enumerate(parts):
            p._accumulate(np.take(g, i, axis=axis))

    out._backward = _bw
    return out


def getitem(a, key) -> Tensor:
    """Basic (slice/int) indexing. Regions never overlap, so backward is
    a plain assignment into a zero gradient."""
    a = _wrap(a)
    out = Tensor(a.data[key], (a,))

    def _bw(g):
        full = np.zeros_like(a.data)
        full[key] = g.reshape(full[key].shape)
        a._accumulate(full)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def _bw(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = _bw
    return out


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reduce_max(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient flows to the first argmax on ties."""
    a = _wrap(a)
    if a.data.shape[axis] == 0:
        raise DomainError("max reduction over an empty axis")
    idx = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out_data = np.squeeze(out_data, axis=axis)
    out = Tensor(out_data, (a,))

    def _bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
        a._accumulate(full)

    out._backward = _bw
    return out


def reduce(op: str, inputs) -> Tensor:
    """Element-wise {max, mean, sum} across a non-empty list of equal-length
    vectors."""
    inputs = list(inputs)
    if not inputs:
        raise DomainError(f"reduce({op!r}) over an empty list")
    stacked = stack(inputs, axis=0)
    if op == "max":
        return reduce_max(stacked, axis=0)
    if op == "mean":
        return reduce_mean(stacked, axis=0)
    if op == "sum":
        return reduce_sum(stacked, axis=0)
    raise DomainError(f"unknown reduce op {op!r}")


# ---------------------------------------------------------------------------
# composite primitives


def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-shifted softmax along one axis.

    `mask` (bool, True = participate) excludes entries; a slice with no
    valid entries yields all zeros rather than an error, which is how
    empty attention neighborhoods are represented.
    """
    a = _wrap(a)
    if a.data.size == 0 and mask is None:
        raise DomainError("softmax of an empty tensor")
    x = a.data
    if mask is not None:
        neg = np.where(mask, x, -np.inf)
    else:
        neg = x
    mx = np.max(neg, axis=axis, keepdims=True, initial=-np.inf)
    any_valid = np.isfinite(mx)
    shifted = np.where(any_valid, neg - np.where(any_valid, mx, 0.0), -np.inf)
    e = np.exp(np.where(np.isfinite(shifted), shifted, -np.inf))
    e = np.where(np.isfinite(e), e, 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    s = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
    out = Tensor(s, (a,))

    def _bw(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        a._accumulate(s * (g - dot))

    out._backward = _bw
    return out


def cosine_similarity(a, b, eps: float = 1e-12) -> Tensor:
    """Cosine of the angle between two vectors; 0 if either norm < eps."""
    a, b = _wrap(a), _wrap(b)
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError(
            f"cosine_similarity expects equal-length vectors, got "
            f"{a.data.shape} and {b.data.shape}"
        )
    na = clip(sqrt(reduce_sum(mul(a, a))), eps, np.inf)
    nb = clip(sqrt(reduce_sum(mul(b, b))), eps, np.inf)
    return div(reduce_sum(mul(a, b)), mul(na, nb))


def cosine_rows(x, eps: float = 1e-12) -> Tensor:
    """Pairwise cosine similarity between the rows of a 2-D tensor.

    Rows with norm below eps behave as zero vectors: every similarity
    involving them is exactly 0.
    """
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ShapeError(f"cosine_rows expects a matrix, got {x.data.shape}")
    norms = clip(sqrt(reduce_sum(mul(x, x), axis=1, keepdims=True)), eps, np.inf)
    xn = div(x, norms)
    return matmul(xn, _transpose2d(xn))


def _transpose2d(a: Tensor) -> Tensor:
    out = Tensor(a.data.T, (a,))

    def _bw(g):
        a._accumulate(g.T)

    out._backward = _bw
    return out


_ACTIVATIONS = {"identity", "relu", "sigmoid"}


def linear_map(x, W, b, activation: str = "identity") -> Tensor:
    """activation(x @ W.T + b) applied along the last axis of x.

    W has shape (out, in); x may carry arbitrary leading axes.
    """
    x, W, b = _wrap(x), _wrap(W), _wrap(b)
    if activation not in _ACTIVATIONS:
        raise DomainError(f"unknown activation {activation!r}")
    if W.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError(
            f"linear_map expects matrix W and vector b, got W{W.data.shape} "
            f"b{b.data.shape}"
        )
    out_dim, in_dim = W.data.shape
    w_label = W.name or "W"
    if x.data.shape[-1] != in_dim:
        raise ShapeError(
            f"linear_map input {x.name or 'x'} length {x.data.shape[-1]} does "
            f"not match {w_label} columns {in_dim}"
        )
    if b.data.shape[0] != out_dim:
        raise ShapeError(
            f"linear_map bias {b.name or 'b'} length {b.data.shape[0]} does "
            f"not match {w_label} rows {out_dim}"
        )
    lead = x.data.shape[:-1]
    flat = reshape(x, (-1, in_dim)) if x.data.ndim != 2 else x
    z = add(matmul(flat, _transpose2d(W)), b)
    if x.data.ndim != 2:
        z = reshape(z, lead + (out_dim,))
    if activation == "relu":
        return relu(z)
    if activation == "sigmoid":
        return sigmoid(z)
    return z


# ---------------------------------------------------------------------------
# convolution / pooling


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    B, C, Hp, Wp = xp.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, Ho, Wo, C, kh, kw),
        strides=(s0, s2 * stride, s3 * stride, s1, s2, s3),
        writeable=False,
    )
    col = win.reshape(B, Ho * Wo, C * kh * kw)
    return np.ascontiguousarray(col), Ho, Wo


def conv2d(x, kernels, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation.

    x: (B, C_in, H, W) or (C_in, H, W); kernels: (C_out, C_in, kh, kw);
    bias: (C_out,) or None. Output spatial size floor((H+2p-k)/stride)+1.
    """
    x, kernels = _wrap(x), _wrap(kernels)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernels.data.ndim != 4:
        raise ShapeError(
            f"conv2d expects 4-D input/kernels, got {x.data.shape} and "
            f"{kernels.data.shape}"
        )
    B, C, H, W = xd.shape
    Cout, Cin, kh, kw = kernels.data.shape
    if Cin != C:
        raise ShapeError(f"conv2d channel mismatch: input {C}, kernels {Cin}")
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than padded input "
            f"{H + 2 * padding}x{W + 2 * padding}"
        )
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    col, Ho, Wo = _im2col(xp, kh, kw, stride)
    Wmat = kernels.data.reshape(Cout, -1)
    out_data = col @ Wmat.T  # (B, Ho*Wo, Cout)
    b = _wrap(bias) if bias is not None else None
    if b is not None:
        if b.data.shape != (Cout,):
            raise ShapeError(f"conv2d bias shape {b.data.shape} != ({Cout},)")
        out_data = out_data + b.data
    out_data = out_data.transpose(0, 2, 1).reshape(B, Cout, Ho, Wo)
    if squeeze:
        out_data = out_data[0]
    inputs = (x, kernels) if b is None else (x, kernels, b)
    out = Tensor(out_data, inputs)

    def _bw(g):
        gd = g[None] if squeeze else g
        g_mat = gd.reshape(B, Cout, Ho * Wo).transpose(0, 2, 1)  # (B,HoWo,Cout)
        dW = np.tensordot(g_mat, col, axes=([0, 1], [0, 1]))  # (Cout, C*kh*kw)
        kernels._accumulate(dW.reshape(kernels.data.shape))
        if b is not None:
            b._accumulate(g_mat.sum(axis=(0, 1)))
        if not x._inputs and x.grad is None:
            return  # constant input (e.g. rasterized maps): skip dX
        # dX: one GEMM to per-window gradients, then kh*kw strided
        # slice-accumulations (each offset touches disjoint cells)
        dcol = g_mat.reshape(B * Ho * Wo, Cout) @ Wmat  # (B*HoWo, C*kh*kw)
        dc = dcol.reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        Hp, Wp = H + 2 * padding, W + 2 * padding
        dxp = np.zeros((B, C, Hp, Wp))
        for di in range(kh):
            re = di + (Ho - 1) * stride + 1
            for dj in range(kw):
                ce = dj + (Wo - 1) * stride + 1
                dxp[:, :, di:re:stride, dj:ce:stride] += dc[:, :, :, :, di, dj]
        dx = dxp[:, :, padding: padding + H, padding: padding + W]
        x._accumulate(dx[0] if squeeze else dx)

    out._backward = _bw
    return out


def maxpool2d(x, k: int = 2) -> Tensor:
    """Non-overlapping k x k max pooling (stride = k); trailing rows/cols
    that do not fill a window are dropped."""
    x = _wrap(x)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    B, C, H, W = xd.shape
    Ho, Wo = H // k, W // k
    if Ho == 0 or Wo == 0:
        raise ShapeError(f"maxpool2d window {k} larger than input {H}x{W}")
    xc = xd[:, :, : Ho * k, : Wo * k].reshape(B, C, Ho, k, Wo, k)
    win = xc.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, k * k)
    idx = np.argmax(win, axis=-1)
    out_data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    out = Tensor(out_data[0] if squeeze else out_data, (x,))

    def _bw(g):
        gd = g[None] if squeeze else g
        gwin = np.zeros((B, C, Ho, Wo, k * k))
        np.put_along_axis(gwin, idx[..., None], gd[..., None], axis=-1)
        full = np.zeros_like(xd)
        full[:, :, : Ho * k, : Wo * k] = (
            gwin.reshape(B, C, Ho, Wo, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(B, C, Ho * k, Wo * k)
        )
        x._accumulate(full[0] if squeeze else full)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# parameters & gradient checking


class ParamStore:
    """Named learnable tensors with persistent gradient accumulators."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(value, name=name)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            else:
                p.grad[...] = 0.0

    def sgd_step(self, lr: float) -> None:
        for p in self._params.values():
            p.data -= lr * p.grad

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            p = self._params[k]
            if p.data.shape != v.shape:
                raise ShapeError(
                    f"parameter {k!r}: stored shape {v.shape} != {p.data.shape}"
                )
            p.data[...] = v


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def finite_difference_check(
    loss_fn,
    params: ParamStore,
    eps: float = 1e-6,
    samples_per_param: int | None = None,
    rng: np.random.Generator | None = None,
):
    """Compare backward gradients with central finite differences.

    loss_fn(params) must rebuild the loss from scratch. Returns
    (max_relative_error, report) where report lists per-parameter worst
    coordinates; coordinates where the loss is non-finite or where the
    analytic and numeric gradients sit on a ReLU-style kink (numeric
    derivative between two subgradients) are skipped and reported.

    samples_per_param limits the coordinates probed per tensor (random,
    seeded) so the check stays fast on convolution kernels; None sweeps
    every entry.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    params.zero_grad()
    loss = loss_fn(params)
    loss.backward()
    analytic = {k: p.grad.copy() for k, p in params.items()}

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    report = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_param is not None and n > samples_per_param:
            coords = rng.choice(n, size=samples_per_param, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        p_worst, p_coord = 0.0, -1
        skipped = []
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            try:
                lp = float(loss_fn(params).data)
            except NonFiniteError:
                lp = np.nan
            flat[i] = orig - eps
            try:
                lm = float(loss_fn(params).data)
            except NonFiniteError:
                lm = np.nan
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                skipped.append(int(i))
                continue
            num = (lp - lm) / (2.0 * eps)
            ana = a_flat[i]
            rel = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
            if rel > p_worst:
                p_worst, p_coord = rel, int(i)
        report.append(
            {"param": name, "max_rel_error": p_worst, "coord": p_coord,
             "skipped": skipped}
        )
        worst = max(worst, p_worst)
    return worst, report
