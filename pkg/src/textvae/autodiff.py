"""Tape-based reverse-mode automatic differentiation on float64 numpy arrays.

Ops compute eagerly. When a Tape is active (``with Tape() as tape:``) and an
input requires grad, the op appends a node recording (kind, input ids,
output id) plus closures to replay the forward and to push gradients back.
With no active tape, ops are plain numpy evaluation (inference mode).

All values are float64. Any op whose output contains NaN/Inf raises
NumericError immediately, so the first bad op is named rather than a
downstream symptom.
"""

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_ACTIVE_TAPE = None


class Tensor:
    """Shape-tagged float64 array, optionally tracked on a tape."""

    __slots__ = ("values", "requires_grad", "grad", "id")
    _next_id = 0

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.id = Tensor._next_id
        Tensor._next_id += 1

    @property
    def shape(self):
        return self.values.shape

    def item(self):
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def constant(values):
    return Tensor(values, requires_grad=False)


@dataclass
class Node:
    kind: str
    input_ids: tuple
    output_id: int
    inputs: tuple           # Tensor refs, aligned with input_ids
    output: object          # Tensor ref
    fwd: object             # (*input_arrays) -> output array
    bwd: object             # grad_out -> tuple of grads aligned with inputs


@dataclass
class Tape:
    nodes: list = field(default_factory=list)

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        return False

    def replay(self):
        """Recompute every recorded output from current input values.

        Returns the max absolute deviation from the saved outputs; 0.0
        means bit-exact reproduction.
        """
        worst = 0.0
        vals = {}
        for node in self.nodes:
            ins = [vals.get(t.id, t.values) for t in node.inputs]
            out = node.fwd(*ins)
            worst = max(worst, float(np.max(np.abs(out - node.output.values), initial=0.0)))
            vals[node.output.id] = out
        return worst


def _check_finite(kind, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{kind} produced non-finite values")
    return arr


def _record(kind, inputs, out_values, fwd, bwd):
    _check_finite(kind, out_values)
    out = Tensor(out_values)
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(Node(kind, tuple(t.id for t in inputs), out.id,
                               tuple(inputs), out, fwd, bwd))
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a, b):
    out = a.values + b.values
    return _record("add", (a, b), out, lambda x, y: x + y,
                   lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)))


def sub(a, b):
    out = a.values - b.values
    return _record("sub", (a, b), out, lambda x, y: x - y,
                   lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)))


def mul(a, b):
    out = a.values * b.values
    av, bv = a.values, b.values
    return _record("mul", (a, b), out, lambda x, y: x * y,
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, c):
    c = float(c)
    return _record("scale", (a,), a.values * c, lambda x: x * c, lambda g: (g * c,))


def add_const(a, c):
    c = np.asarray(c, dtype=np.float64)
    return _record("add_const", (a,), a.values + c, lambda x: x + c, lambda g: (_unbroadcast(g, a.values.shape),))


def neg(a):
    return scale(a, -1.0)


def matmul(a, b):
    av, bv = a.values, b.values
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    out = av @ bv

    def bwd(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _record("matmul", (a, b), out, lambda x, y: x @ y, bwd)


def reshape(a, shape):
    shape = tuple(shape)
    old = a.values.shape
    return _record("reshape", (a,), a.values.reshape(shape),
                   lambda x: x.reshape(shape), lambda g: (g.reshape(old),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record("transpose", (a,), np.transpose(a.values, axes),
                   lambda x: np.transpose(x, axes), lambda g: (np.transpose(g, inv),))


def narrow(a, axis, start, length):
    """Contiguous slice [start, start+length) along one axis."""
    idx = [slice(None)] * a.values.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    shape = a.values.shape

    def bwd(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _record("narrow", (a,), a.values[idx], lambda x: x[idx], bwd)


def concat(tensors, axis):
    sizes = [t.values.shape[axis] for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", tuple(tensors), out,
                   lambda *xs: np.concatenate(xs, axis=axis), bwd)


def sum_all(a):
    return _record("sum_all", (a,), np.asarray(a.values.sum()),
                   lambda x: np.asarray(x.sum()),
                   lambda g: (np.broadcast_to(g, a.values.shape).copy(),))


def sum_axis(a, axis):
    shape = a.values.shape

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record("sum_axis", (a,), a.values.sum(axis=axis),
                   lambda x: x.sum(axis=axis), bwd)


def mean_all(a):
    n = a.values.size
    return scale(sum_all(a), 1.0 / n)


def mean_axis(a, axis):
    return scale(sum_axis(a, axis), 1.0 / a.values.shape[axis])


def tanh(a):
    out = np.tanh(a.values)
    return _record("tanh", (a,), out, np.tanh, lambda g: (g * (1.0 - out * out),))


def exp(a):
    out = np.exp(a.values)
    return _record("exp", (a,), out, np.exp, lambda g: (g * out,))


def log(a):
    av = a.values
    return _record("log", (a,), np.log(av), np.log, lambda g: (g / av,))


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def gelu(a):
    """tanh-approximation GELU, the usual transformer MLP nonlinearity."""
    x = a.values
    inner = _SQRT_2_OVER_PI * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def fwd(x):
        return 0.5 * x * (1.0 + np.tanh(_SQRT_2_OVER_PI * (x + 0.044715 * x ** 3)))

    def bwd(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _record("gelu", (a,), out, fwd, bwd)


def relu(a):
    out = np.maximum(a.values, 0.0)
    mask = a.values > 0
    return _record("relu", (a,), out, lambda x: np.maximum(x, 0.0), lambda g: (g * mask,))


def maximum_const(a, c):
    """Elementwise max(a, c); gradient flows only where a > c."""
    c = float(c)
    mask = a.values > c
    return _record("maximum_const", (a,), np.maximum(a.values, c),
                   lambda x: np.maximum(x, c), lambda g: (g * mask,))


def clip(a, lo, hi):
    """Clamp to [lo, hi]; clamped coordinates get zero gradient."""
    mask = (a.values > lo) & (a.values < hi)
    return _record("clip", (a,), np.clip(a.values, lo, hi),
                   lambda x: np.clip(x, lo, hi), lambda g: (g * mask,))


def softplus(a):
    """log(1 + e^x), computed without overflow."""
    av = a.values
    out = np.logaddexp(0.0, av)
    return _record("softplus", (a,), out,
                   lambda x: np.logaddexp(0.0, x),
                   lambda g: (g / (1.0 + np.exp(-av)),))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.values))
    return _record("sigmoid", (a,), out,
                   lambda x: 1.0 / (1.0 + np.exp(-x)),
                   lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# neural net kernels


def embedding(table, ids):
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.values.shape[0]):
        raise ShapeError(f"embedding ids out of range for table {table.values.shape}")
    vshape = table.values.shape

    def bwd(g):
        grad = np.zeros(vshape)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, vshape[1]))
        return (grad,)

    return _record("embedding", (table,), table.values[ids], lambda x: x[ids], bwd)


def softmax_rows(x):
    """Softmax over the last axis, computed with per-row max subtraction."""
    _check_finite("softmax_rows(input)", x.values)
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def fwd(v):
        s = v - v.max(axis=-1, keepdims=True)
        ev = np.exp(s)
        return ev / ev.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax_rows", (x,), out, fwd, bwd)


def layer_norm(x, gain, bias, eps=1e-5):
    """Standardize the last axis (population variance), then affine."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    _check_finite("layer_norm(input)", x.values)
    xv = x.values
    mu = xv.mean(axis=-1, keepdims=True)
    var = xv.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    out = xhat * gain.values + bias.values
    H = xv.shape[-1]

    def fwd(v, g_, b_):
        m = v.mean(axis=-1, keepdims=True)
        iv = 1.0 / np.sqrt(v.var(axis=-1, keepdims=True) + eps)
        return (v - m) * iv * g_ + b_

    def bwd(g):
        gb = _unbroadcast(g, bias.values.shape)
        gg = _unbroadcast(g * xhat, gain.values.shape)
        gx_hat = g * gain.values
        gx = inv * (gx_hat
                    - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return (gx, gg, gb)

    return _record("layer_norm", (x, gain, bias), out, fwd, bwd)


def cross_entropy(logits, targets, ignore_id=-1):
    """Mean NLL of `targets` under row-softmax of `logits`.

    logits: [..., V]; targets: int array of the leading shape. Positions
    whose target equals ignore_id are excluded from the mean.
    """
    targets = np.asarray(targets)
    V = logits.values.shape[-1]
    flat_logits = logits.values.reshape(-1, V)
    flat_t = targets.reshape(-1)
    valid = flat_t != ignore_id
    if np.any((flat_t[valid] < 0) | (flat_t[valid] >= V)):
        raise ShapeError(f"cross_entropy target out of range [0, {V})")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("cross_entropy: no non-ignored targets")

    def nll_of(fl):
        m = fl.max(axis=-1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(fl - m).sum(axis=-1))
        picked = fl[np.arange(fl.shape[0]), np.where(valid, flat_t, 0)]
        return np.asarray(((lse - picked) * valid).sum() / n_valid)

    out = nll_of(flat_logits)

    def fwd(lv):
        return nll_of(lv.reshape(-1, V))

    def bwd(g):
        m = flat_logits.max(axis=-1, keepdims=True)
        e = np.exp(flat_logits - m)
        p = e / e.sum(axis=-1, keepdims=True)
        p[np.arange(p.shape[0]), np.where(valid, flat_t, 0)] -= 1.0
        p *= (valid / n_valid)[:, None]
        return (float(g) * p.reshape(logits.values.shape),)

    return _record("cross_entropy", (logits,), out, fwd, bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(tape, loss):
    """Reverse-traverse the tape, populating .grad on requires_grad tensors.

    Gradients accumulate in node order reversal, a fixed order, so repeated
    runs over the same tape are bitwise identical.
    """
    if loss.values.ndim != 0 and loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    grads = {loss.id: np.ones_like(loss.values)}
    for node in reversed(tape.nodes):
        g = grads.pop(node.output.id, None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.bwd(g)):
            if gi is None or not t.requires_grad:
                continue
            if t.id in grads:
                grads[t.id] = grads[t.id] + gi
            else:
                grads[t.id] = gi
    # anything left keyed in `grads` is a leaf (no producing node on tape)
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and t.id in grads:
                g = grads.pop(t.id)
                t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamHyper:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    hyper: AdamHyper = field(default_factory=AdamHyper)


def adam_step(params, state):
    """One bias-corrected Adam update over a {name: Tensor} dict.

    Tensors without a populated .grad are skipped. Updates in sorted name
    order for determinism.
    """
    state.t += 1
    h = state.hyper
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            continue
        if p.grad.shape != p.values.shape:
            raise ShapeError(f"adam_step: grad shape {p.grad.shape} != param shape "
                             f"{p.values.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        v = state.v[name]
        m = h.beta1 * m + (1 - h.beta1) * p.grad
        v = h.beta2 * v + (1 - h.beta2) * p.grad ** 2
        state.m[name], state.v[name] = m, v
        mhat = m / (1 - h.beta1 ** state.t)
        vhat = v / (1 - h.beta2 ** state.t)
        p.values = p.values - h.lr * mhat / (np.sqrt(vhat) + h.eps)


def zero_grads(params):
    for p in params.values():
        p.grad = None
