"""Minimal float64 tensor with reverse-mode autodiff.

Every op builds a node holding its parents and a closure mapping the output
gradient to parent gradients. ``backward`` walks the graph in reverse
topological order. Conventions worth knowing:

* ``conv2d`` is cross-correlation (kernel is not flipped), stride 1.
* ``max_pool2d`` uses non-overlapping windows; trailing rows/columns that do
  not fill a whole window are dropped. Ties send the gradient to the first
  (lowest flat index) element of the window.
* ``gru_forward`` uses the formulation with the reset gate applied to the
  recurrent term of the candidate (see its docstring).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.special

DTYPE = np.float64

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) else data.astype(DTYPE, copy=False)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict["Tensor", np.ndarray]:
        return backward(self)

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

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op} produced non-finite values")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- graph


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    output: int


@dataclass
class Graph:
    """Topologically ordered view of the graph feeding one output tensor."""

    nodes: list[Node] = field(default_factory=list)
    parameters: dict[str, Tensor] = field(default_factory=dict)
    tensors: list[Tensor] = field(default_factory=list)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def trace(root: Tensor) -> Graph:
    order = _topo_order(root)
    ids = {id(t): i for i, t in enumerate(order)}
    g = Graph(tensors=order)
    for i, t in enumerate(order):
        if t._parents:
            g.nodes.append(Node(t.op, tuple(ids[id(p)] for p in t._parents), i))
        elif t.requires_grad:
            g.parameters[t.name or f"param{i}"] = t
    return g


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every trainable leaf.

    Returns a mapping leaf -> gradient. The loss must be a scalar.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._backward is None:
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
                leaves[t] = t.grad
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    return leaves


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    q = a.data / b.data
    return _make(
        q, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * q / b.data, b.shape)), "div",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return scipy.special.expit(x)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise FloatingPointError("log of non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where clamping was active."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------- linear algebra / reductions


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def linear(x, w, b=None) -> Tensor:
    """x[..., in] @ w[in, out] + b[out]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = (x2 @ w.data).reshape(*lead, w.shape[1])
    parents: tuple[Tensor, ...] = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        grads = [(g2 @ w.data.T).reshape(x.shape), x2.T @ g2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out, parents, bw, "linear")


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw, "mean")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (a,), bw, "softmax")


# ---------------------------------------------------------------- shape ops


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)

    def bw(g):
        full = np.zeros_like(a.data)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(np.array(a.data[index]), (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: np.split(g, splits, axis=axis), "concat",
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


def flip(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return _make(np.flip(a.data, axis=axis).copy(), (a,), lambda g: (np.flip(g, axis=axis).copy(),), "flip")


# ---------------------------------------------------------------- convolution / pooling


def _pad_amounts(k: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        return (k - 1) // 2, k - 1 - (k - 1) // 2
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _im2col(xpl: np.ndarray, kt: int, kf: int) -> np.ndarray:
    """Channels-last padded input [B,Tp,Fp,C] -> patches [B*To*Fo, kt*kf*C]."""
    B, Tp, Fp, C = xpl.shape
    To, Fo = Tp - kt + 1, Fp - kf + 1
    cols = np.empty((B, To, Fo, kt, kf, C))
    for i in range(kt):
        for j in range(kf):
            cols[:, :, :, i, j, :] = xpl[:, i:i + To, j:j + Fo, :]
    return cols.reshape(B * To * Fo, kt * kf * C)


def conv2d(x, w, b=None, padding: str = "same") -> Tensor:
    """2-D cross-correlation, stride 1.

    x: [batch, in_ch, time, freq]; w: [out_ch, in_ch, kt, kf]; b: [out_ch].
    ``same`` pads (k-1)//2 before and the remainder after on each axis.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got input {x.shape}, kernel {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    B, C, Tn, Fn = x.shape
    O, _, kt, kf = w.shape
    pt, pf = _pad_amounts(kt, padding), _pad_amounts(kf, padding)
    Tp, Fp = Tn + sum(pt), Fn + sum(pf)
    if Tp < kt or Fp < kf:
        raise ValueError(f"conv2d kernel {w.shape} larger than input {x.shape}")
    To, Fo = Tp - kt + 1, Fp - kf + 1
    xpl = np.zeros((B, Tp, Fp, C))
    xpl[:, pt[0]:pt[0] + Tn, pf[0]:pf[0] + Fn, :] = x.data.transpose(0, 2, 3, 1)
    wmat = w.data.transpose(2, 3, 1, 0).reshape(kt * kf * C, O)
    out = _im2col(xpl, kt, kf) @ wmat
    parents: list[Tensor] = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (O,):
            raise ValueError(f"conv2d bias shape {b.shape} does not match kernel {w.shape}")
        out += b.data
        parents.append(b)
    out = np.ascontiguousarray(out.reshape(B, To, Fo, O).transpose(0, 3, 1, 2))

    def bw(g):
        gl = g.transpose(0, 2, 3, 1).reshape(B * To * Fo, O)
        gw = (_im2col(xpl, kt, kf).T @ gl).reshape(kt, kf, C, O).transpose(3, 2, 0, 1)
        gx = None
        if x.requires_grad:
            gcols = (gl @ wmat.T).reshape(B, To, Fo, kt, kf, C)
            gxpl = np.zeros_like(xpl)
            for i in range(kt):
                for j in range(kf):
                    gxpl[:, i:i + To, j:j + Fo, :] += gcols[:, :, :, i, j, :]
            gx = np.ascontiguousarray(gxpl[:, pt[0]:pt[0] + Tn, pf[0]:pf[0] + Fn, :].transpose(0, 3, 1, 2))
        grads = [gx, np.ascontiguousarray(gw)]
        if b is not None:
            grads.append(gl.sum(axis=0))
        return grads

    return _make(out, parents, bw, "conv2d")


def max_pool2d(x, window: tuple[int, int]) -> Tensor:
    """Non-overlapping max pooling over the last two axes of [B, C, T, F]."""
    x = as_tensor(x)
    pt, pf = window
    if pt < 1 or pf < 1:
        raise ValueError(f"pool window must be positive, got {window}")
    B, C, T, F = x.shape
    if pt > T or pf > F:
        raise ValueError(f"pool window {window} larger than input spatial extent {(T, F)}")
    To, Fo = T // pt, F // pf
    xt = x.data[:, :, :To * pt, :Fo * pf]
    blocks = xt.reshape(B, C, To, pt, Fo, pf).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, To, Fo, pt * pf)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros((B, C, To, Fo, pt * pf))
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gt = gb.reshape(B, C, To, Fo, pt, pf).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, To * pt, Fo * pf)
        gx = np.zeros_like(x.data)
        gx[:, :, :To * pt, :Fo * pf] = gt
        return (gx,)

    return _make(out, (x,), bw, "max_pool2d")


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalisation; channel axis is 1.

    In training mode the biased batch variance normalises the input and the
    running buffers are updated in place as
    ``running = momentum * running + (1 - momentum) * batch_stat``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if eps <= 0:
        raise ValueError("batch_norm eps must be positive")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm affine shapes {gamma.shape}/{beta.shape} do not match {C} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, C) + (1,) * (x.ndim - 2)
    g_ = gamma.data.reshape(bshape)
    if training:
        if x.shape[0] == 0:
            raise ValueError("batch_norm in training mode needs a non-empty batch")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * g_ + beta.data.reshape(bshape)
    n = x.size // C

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * g_
        if training:
            dx = (inv.reshape(bshape) / n) * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv.reshape(bshape)
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), bw, "batch_norm")


# ---------------------------------------------------------------- recurrent


def gru_forward(x, w_in, w_rec, b_in, b_rec, direction: str = "fwd") -> Tensor:
    """Single-direction GRU over x[time, batch, feat] with zero initial state.

    Gate blocks in ``w_in`` [feat, 3H], ``w_rec`` [H, 3H] and the biases [3H]
    are ordered (reset, update, candidate)::

        r_t = sigmoid(x_t W_r + b_r + h_{t-1} U_r + c_r)
        z_t = sigmoid(x_t W_z + b_z + h_{t-1} U_z + c_z)
        n_t = tanh(x_t W_n + b_n + r_t * (h_{t-1} U_n + c_n))
        h_t = (1 - z_t) * n_t + z_t * h_{t-1}

    ``direction='bwd'`` consumes the sequence from the last step to the first;
    the returned outputs are re-aligned to the original time order.
    """
    x, w_in, w_rec, b_in, b_rec = (as_tensor(t) for t in (x, w_in, w_rec, b_in, b_rec))
    if x.ndim != 3:
        raise ValueError(f"gru_forward expects [time, batch, feat], got {x.shape}")
    T, B, D = x.shape
    if T == 0:
        raise ValueError("gru_forward needs at least one time step")
    H = w_rec.shape[0]
    if w_in.shape != (D, 3 * H) or w_rec.shape != (H, 3 * H) or b_in.shape != (3 * H,) or b_rec.shape != (3 * H,):
        raise ValueError(
            f"gru parameter shapes w_in {w_in.shape}, w_rec {w_rec.shape}, b_in {b_in.shape}, "
            f"b_rec {b_rec.shape} inconsistent with input {x.shape}"
        )
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    xs = x.data[::-1] if direction == "bwd" else x.data
    U, c = w_rec.data, b_rec.data
    gx = (xs.reshape(T * B, D) @ w_in.data + b_in.data).reshape(T, B, 3 * H)

    hs = np.zeros((T + 1, B, H))
    r_all = np.empty((T, B, H))
    z_all = np.empty((T, B, H))
    n_all = np.empty((T, B, H))
    hn_all = np.empty((T, B, H))
    for t in range(T):
        h = hs[t]
        gh = h @ U + c
        r = _sigmoid(gx[t, :, :H] + gh[:, :H])
        z = _sigmoid(gx[t, :, H:2 * H] + gh[:, H:2 * H])
        n = np.tanh(gx[t, :, 2 * H:] + r * gh[:, 2 * H:])
        hs[t + 1] = (1.0 - z) * n + z * h
        r_all[t], z_all[t], n_all[t], hn_all[t] = r, z, n, gh[:, 2 * H:]
    out = hs[1:]
    if direction == "bwd":
        out = out[::-1]
    out = np.ascontiguousarray(out)

    def bw(g):
        g = g[::-1] if direction == "bwd" else g
        dgx = np.zeros((T, B, 3 * H))
        dU = np.zeros_like(U)
        dc = np.zeros_like(c)
        dh_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            h_prev = hs[t]
            r, z, n, hn = r_all[t], z_all[t], n_all[t], hn_all[t]
            dh = g[t] + dh_next
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            da_n = dn * (1.0 - n * n)
            dr = da_n * hn
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
            dgx[t] = np.concatenate([da_r, da_z, da_n], axis=1)
            dU += h_prev.T @ dgh
            dc += dgh.sum(axis=0)
            dh_next = dh * z + dgh @ U.T
        dgx2 = dgx.reshape(T * B, 3 * H)
        dx = (dgx2 @ w_in.data.T).reshape(T, B, D)
        if direction == "bwd":
            dx = dx[::-1]
        dW = xs.reshape(T * B, D).T @ dgx2
        db = dgx2.sum(axis=0)
        return np.ascontiguousarray(dx), dW, dU, db, dc

    return _make(out, (x, w_in, w_rec, b_in, b_rec), bw, "gru")


def bigru_forward(x, fwd_params: Sequence, bwd_params: Sequence) -> Tensor:
    """Bidirectional GRU: forward and re-aligned backward outputs concatenated on features."""
    f = gru_forward(x, *fwd_params, direction="fwd")
    b = gru_forward(x, *bwd_params, direction="bwd")
    return concat([f, b], axis=2)

