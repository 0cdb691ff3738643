"""A small reverse-mode differentiation core for 4-D image tensors.

Tensors are ``(batch, channels, height, width)`` arrays. Operations take an
optional :class:`Tape`; when one is given they append a node holding the
inputs, the parameters, a replay closure, and a vector-Jacobian product.
:func:`backward` walks the tape in reverse and accumulates gradients by
summation wherever a tensor or parameter fans out.

Convolutions keep spatial size by mirror extension of ``(k - 1) / 2``
samples per side and compute cross-correlation (no kernel flip).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GradientLookupError, ShapeError
from .pyramid import reflect_index


class Tensor:
    """A 4-D array with identity semantics, so it can key gradient lookups."""

    __slots__ = ("data", "__weakref__")

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are (N, C, H, W); got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


@dataclass(eq=False)
class ConvParams:
    weight: np.ndarray  # (C_out, C_in, k_h, k_w)
    bias: np.ndarray  # (C_out,)

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be 4-D, got {self.weight.shape}")
        c_out, _, kh, kw = self.weight.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {kh}x{kw}")
        if self.bias.shape != (c_out,):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {c_out} outputs")

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size

    def astype(self, dtype) -> "ConvParams":
        return ConvParams(self.weight.astype(dtype), self.bias.astype(dtype))

    def copy(self) -> "ConvParams":
        return ConvParams(self.weight.copy(), self.bias.copy())


@dataclass(eq=False)
class Node:
    name: str
    output: Tensor
    inputs: tuple
    params: tuple
    forward: Callable[[], np.ndarray]
    vjp: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of executed operations (single writer)."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def record(self, name, output, inputs, params, forward, vjp):
        self.nodes.append(Node(name, output, tuple(inputs), tuple(params), forward, vjp))

    def replay(self) -> list:
        """Recompute every recorded output from its recorded inputs."""
        return [node.forward() for node in self.nodes]


def _record(tape, name, out, inputs, params, forward, vjp):
    if tape is not None:
        tape.record(name, out, inputs, params, forward, vjp)
    return out


# -- padding ---------------------------------------------------------------


def _pad_index(n: int, pad: int) -> np.ndarray:
    return np.array([reflect_index(i, n) for i in range(-pad, n + pad)])


def mirror_pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    h, w = x.shape[-2:]
    x = np.take(x, _pad_index(h, ph), axis=-2)
    return np.take(x, _pad_index(w, pw), axis=-1)


def _fold_matrix(n: int, pad: int, dtype) -> np.ndarray:
    mat = np.zeros((n, n + 2 * pad), dtype=dtype)
    mat[_pad_index(n, pad), np.arange(n + 2 * pad)] = 1
    return mat


def mirror_pad_adjoint(g: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Fold a gradient on the padded grid back onto the original grid."""
    h, w = g.shape[-2] - 2 * ph, g.shape[-1] - 2 * pw
    return _fold_matrix(h, ph, g.dtype) @ g @ _fold_matrix(w, pw, g.dtype).T


# -- convolution -------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Columns of shape (C*kh*kw, N*H*W) for a valid correlation over padded ``xp``."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N C H W kh kw
    n, c, h, w = win.shape[:4]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * h * w)


def _correlate_valid(xp: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of padded ``xp`` (N, C, Hp, Wp) with (O, C, kh, kw)."""
    o, _, kh, kw = weight.shape
    n = xp.shape[0]
    h, w = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    out = weight.reshape(o, -1) @ _im2col(xp, kh, kw)
    return out.reshape(o, n, h, w).transpose(1, 0, 2, 3)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    kh, kw = weight.shape[2:]
    if kh == 1 and kw == 1:
        out = np.einsum("oc,nchw->nohw", weight[:, :, 0, 0], x, optimize=True)
    else:
        out = _correlate_valid(mirror_pad(x, kh // 2, kw // 2), weight)
    return np.ascontiguousarray(out + bias[None, :, None, None])


def conv2d_backward(x: np.ndarray, weight: np.ndarray, g: np.ndarray):
    """Gradients of a mirror-padded correlation w.r.t. input, weight and bias."""
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    gbias = g.sum(axis=(0, 2, 3))
    if kh == 1 and kw == 1:
        w2 = weight[:, :, 0, 0]
        gx = np.einsum("oc,nohw->nchw", w2, g, optimize=True)
        gw = np.einsum("nohw,nchw->oc", g, x, optimize=True)[:, :, None, None]
        return gx, gw, gbias
    ph, pw = kh // 2, kw // 2
    cols = _im2col(mirror_pad(x, ph, pw), kh, kw)
    gw = (g.transpose(1, 0, 2, 3).reshape(o, -1) @ cols.T).reshape(o, c, kh, kw)
    # full correlation of g with the flipped, transposed kernel = adjoint on the padded grid
    gpad = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    flipped = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    gxp = _correlate_valid(gpad, np.ascontiguousarray(flipped))
    gx = mirror_pad_adjoint(gxp, ph, pw)
    return gx, gw, gbias


def conv2d(x: Tensor, p: ConvParams, tape: Optional[Tape] = None) -> Tensor:
    if x.shape[1] != p.c_in:
        raise ShapeError(f"conv expects {p.c_in} input channels, got {x.shape[1]}")

    def forward():
        return conv2d_forward(x.data, p.weight, p.bias)

    def vjp(g):
        gx, gw, gb = conv2d_backward(x.data, p.weight, g)
        return (gx,), ((gw, gb),)

    return _record(tape, "conv2d", Tensor(forward()), (x,), (p,), forward, vjp)


# -- pointwise and structural ops --------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.2, tape: Optional[Tape] = None) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must lie in (0, 1), got {slope}")

    def forward():
        return np.maximum(x.data, x.data * x.data.dtype.type(slope))

    def vjp(g):
        return (np.where(x.data > 0, g, g * g.dtype.type(slope)),), ()

    return _record(tape, "leaky_relu", Tensor(forward()), (x,), (), forward, vjp)


def add(a: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {a.shape} and {b.shape}")

    def forward():
        return a.data + b.data

    return _record(tape, "add", Tensor(forward()), (a, b), (), forward, lambda g: ((g, g), ()))


def concat_channels(xs: Sequence[Tensor], tape: Optional[Tape] = None) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"cannot concatenate {t.shape} with {xs[0].shape}")
    bounds = np.cumsum([t.shape[1] for t in xs])[:-1]

    def forward():
        return np.concatenate([t.data for t in xs], axis=1)

    def vjp(g):
        return tuple(np.split(g, bounds, axis=1)), ()

    return _record(tape, "concat", Tensor(forward()), xs, (), forward, vjp)


def separable_linear(
    x: Tensor, rows: np.ndarray, cols: np.ndarray, tape: Optional[Tape] = None
) -> Tensor:
    """Apply ``rows @ x @ cols.T`` to every channel (e.g. pyramid expansion)."""
    dtype = x.dtype
    r = rows.astype(dtype, copy=False)
    c = cols.astype(dtype, copy=False)

    def forward():
        return r @ x.data @ c.T

    def vjp(g):
        return (r.T @ g @ c,), ()

    return _record(tape, "separable", Tensor(forward()), (x,), (), forward, vjp)


# -- initialization ------------------------------------------------------------


def xavier_init(shape: tuple, rng: np.random.Generator, dtype=np.float32) -> ConvParams:
    """Glorot-uniform weights in ``+-sqrt(6 / (fan_in + fan_out))`` and zero bias."""
    c_out, c_in, kh, kw = shape
    fan_in, fan_out = c_in * kh * kw, c_out * kh * kw
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    weight = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return ConvParams(weight, np.zeros(c_out, dtype=dtype))


# -- reverse pass ----------------------------------------------------------------


class Gradients:
    """Gradient store keyed by object identity.

    ``grads[tensor]`` gives an array; ``grads[conv_params]`` gives a
    ``(d_weight, d_bias)`` pair. ``contributions(p)`` lists the per-node
    gradients whose sum is ``grads[p]``.
    """

    def __init__(self):
        self._tensors: dict[int, tuple] = {}
        self._params: dict[int, list] = {}

    def _add_tensor(self, t: Tensor, g: np.ndarray):
        key = id(t)
        if key in self._tensors:
            self._tensors[key] = (t, self._tensors[key][1] + g)
        else:
            self._tensors[key] = (t, g)

    def _add_param(self, p: ConvParams, gw, gb):
        self._params.setdefault(id(p), [p]).append((gw, gb))

    def params(self) -> list:
        """Every parameter object that received a gradient, in first-seen order."""
        return [entry[0] for entry in self._params.values()]

    def contributions(self, p: ConvParams) -> list:
        try:
            return list(self._params[id(p)][1:])
        except KeyError:
            raise GradientLookupError(f"{p!r} is not on the tape") from None

    def __contains__(self, obj) -> bool:
        return id(obj) in self._tensors or id(obj) in self._params

    def __getitem__(self, obj):
        if isinstance(obj, ConvParams):
            parts = self.contributions(obj)
            gw = parts[0][0].copy()
            gb = parts[0][1].copy()
            for w, b in parts[1:]:
                gw += w
                gb += b
            return gw, gb
        try:
            return self._tensors[id(obj)][1]
        except KeyError:
            raise GradientLookupError(f"{obj!r} is not on the tape") from None


def backward(tape: Tape, loss_grad) -> Gradients:
    """Reverse-mode sweep over ``tape``.

    ``loss_grad`` is either the gradient of the last recorded output, or a
    mapping ``{tensor: gradient}`` seeding several outputs at once.
    """
    if not tape.nodes:
        raise GradientLookupError("empty tape")
    grads = Gradients()
    if isinstance(loss_grad, dict):
        seeds = loss_grad.items()
    else:
        seeds = [(tape.nodes[-1].output, loss_grad)]
    on_tape = {id(n.output) for n in tape.nodes}
    for t, g in seeds:
        if id(t) not in on_tape:
            raise GradientLookupError(f"seed tensor {t!r} was not produced on this tape")
        g = np.asarray(g.data if isinstance(g, Tensor) else g, dtype=t.dtype)
        if g.shape != t.shape:
            raise ShapeError(f"seed gradient {g.shape} does not match tensor {t.shape}")
        grads._add_tensor(t, g)

    for node in reversed(tape.nodes):
        entry = grads._tensors.get(id(node.output))
        if entry is None:
            continue
        input_grads, param_grads = node.vjp(entry[1])
        for t, g in zip(node.inputs, input_grads):
            grads._add_tensor(t, g)
        for p, (gw, gb) in zip(node.params, param_grads):
            grads._add_param(p, gw, gb)
    return grads
