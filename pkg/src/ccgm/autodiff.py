"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every trainable module in this package builds its loss as a graph of
``Tensor`` nodes and calls ``backward()`` on the scalar result. The tape is
implicit: each node keeps references to its parents and a closure that
accumulates gradients into them. Everything is float64.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation receives inconsistently shaped inputs."""


class Param:
    """A named block of trainable values with a matching gradient buffer."""

    def __init__(self, name: str, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"param {name!r}: non-finite initial values")
        self.name = name
        self.value = values
        self.grad = np.zeros_like(values)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def values_flat(self) -> np.ndarray:
        return self.value.reshape(-1)

    @property
    def grads_flat(self) -> np.ndarray:
        return self.grad.reshape(-1)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Uniform in [-s, s] with s = 1/sqrt(fan_in)."""
    s = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-s, s, size=shape)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """One node of the compute graph: a value, its parents, and a pullback."""

    __slots__ = ("value", "parents", "_backward", "requires_grad", "grad", "op")

    def __init__(self, value, parents=(), backward=None, requires_grad=False, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def backward(self) -> None:
        if self.value.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.value.shape} from op {self.op!r}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.value.shape})"


def param_tensor(p: Param) -> Tensor:
    """Wrap a Param as a graph leaf whose gradient flows into p.grad."""

    def pull(g):
        p.grad += g

    return Tensor(p.value, backward=pull, requires_grad=True, op=f"param:{p.name}")


def constant(value) -> Tensor:
    return Tensor(value, op="const")


def add(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value + b.value

    def pull(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.value.shape)

    return Tensor(out_val, (a, b), pull, op="add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value - b.value

    def pull(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(-g, b.value.shape)

    return Tensor(out_val, (a, b), pull, op="sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value * b.value

    def pull(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.value, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.value, b.value.shape)

    return Tensor(out_val, (a, b), pull, op="mul")


def neg(a: Tensor) -> Tensor:
    def pull(g):
        a.grad += -g

    return Tensor(-a.value, (a,), pull, op="neg")


def scale(a: Tensor, k: float) -> Tensor:
    def pull(g):
        a.grad += k * g

    return Tensor(k * a.value, (a,), pull, op="scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.value.shape} @ {b.value.shape}")
    out_val = a.value @ b.value

    def pull(g):
        if a.requires_grad:
            a.grad += g @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ g

    return Tensor(out_val, (a, b), pull, op="matmul")


def sigmoid(a: Tensor) -> Tensor:
    out_val = sigmoid_np(a.value)

    def pull(g):
        a.grad += g * out_val * (1.0 - out_val)

    return Tensor(out_val, (a,), pull, op="sigmoid")


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0

    def pull(g):
        a.grad += g * mask

    return Tensor(np.where(mask, a.value, 0.0), (a,), pull, op="relu")


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x), computed stably; used for BCE on logits.
    out_val = np.logaddexp(0.0, a.value)
    sig = sigmoid_np(a.value)

    def pull(g):
        a.grad += g * sig

    return Tensor(out_val, (a,), pull, op="softplus")


def log(a: Tensor) -> Tensor:
    def pull(g):
        a.grad += g / a.value

    return Tensor(np.log(a.value), (a,), pull, op="log")


def exp(a: Tensor) -> Tensor:
    out_val = np.exp(a.value)

    def pull(g):
        a.grad += g * out_val

    return Tensor(out_val, (a,), pull, op="exp")


def absval(a: Tensor) -> Tensor:
    sign = np.sign(a.value)

    def pull(g):
        a.grad += g * sign

    return Tensor(np.abs(a.value), (a,), pull, op="abs")


def total_sum(a: Tensor) -> Tensor:
    def pull(g):
        a.grad += g * np.ones_like(a.value)

    return Tensor(a.value.sum(), (a,), pull, op="sum")


def mean(a: Tensor) -> Tensor:
    n = a.value.size

    def pull(g):
        a.grad += g * np.full_like(a.value, 1.0 / n)

    return Tensor(a.value.mean(), (a,), pull, op="mean")


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def pull(g):
        a.grad += g.reshape(a.value.shape)

    return Tensor(a.value.reshape(shape), (a,), pull, op="reshape")


def expand_last(a: Tensor) -> Tensor:
    """(..., n) -> (..., n, 1), for broadcasting over an embedding axis."""

    def pull(g):
        a.grad += g[..., 0]

    return Tensor(a.value[..., None], (a,), pull, op="expand_last")


def take_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def pull(g):
        a.grad[start:stop] += g

    return Tensor(a.value[start:stop], (a,), pull, op="take_rows")


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Stack `reps` copies of a along axis 0."""
    n = a.value.shape[0]

    def pull(g):
        for r in range(reps):
            a.grad += g[r * n:(r + 1) * n]

    return Tensor(np.concatenate([a.value] * reps, axis=0), (a,), pull, op="tile_rows")


def mix_parents(adj: Tensor, emb: Tensor) -> Tensor:
    """z[b,i,:] = sum_j adj[i,j] * emb[b,j,:]  (adjacency-weighted pooling)."""
    if adj.value.ndim != 2 or emb.value.ndim != 3 or adj.value.shape[1] != emb.value.shape[1]:
        raise ShapeError(f"mix_parents: incompatible shapes {adj.value.shape} x {emb.value.shape}")
    out_val = np.matmul(adj.value, emb.value)

    def pull(g):
        if adj.requires_grad:
            adj.grad += np.tensordot(g, emb.value, axes=([0, 2], [0, 2]))
        if emb.requires_grad:
            emb.grad += np.matmul(adj.value.T, g)

    return Tensor(out_val, (adj, emb), pull, op="mix_parents")


def lastdim_dot(a: Tensor, w: Tensor) -> Tensor:
    """(B,k,m) . (m,) -> (B,k)."""
    if a.value.shape[-1] != w.value.shape[0] or w.value.ndim != 1:
        raise ShapeError(f"lastdim_dot: incompatible shapes {a.value.shape} . {w.value.shape}")
    out_val = a.value @ w.value

    def pull(g):
        if a.requires_grad:
            a.grad += g[..., None] * w.value
        if w.requires_grad:
            w.grad += np.einsum("bk,bkm->m", g, a.value)

    return Tensor(out_val, (a, w), pull, op="lastdim_dot")


def per_node_dot(a: Tensor, w: Tensor) -> Tensor:
    """out[b,k] = sum_h a[b,k,h] * w[k,h]  (per-node output heads)."""
    if a.value.ndim != 3 or w.value.ndim != 2 or a.value.shape[1:] != w.value.shape:
        raise ShapeError(f"per_node_dot: incompatible shapes {a.value.shape} x {w.value.shape}")
    out_val = np.einsum("bkh,kh->bk", a.value, w.value)

    def pull(g):
        if a.requires_grad:
            a.grad += g[..., None] * w.value
        if w.requires_grad:
            w.grad += np.einsum("bk,bkh->kh", g, a.value)

    return Tensor(out_val, (a, w), pull, op="per_node_dot")


def threshold_mask(m: Tensor, gamma: Tensor, free: np.ndarray, tau: float = 0.1,
                   soft: bool = False) -> Tensor:
    """A = M * 1[M >= gamma] on free entries, zero elsewhere; active entries
    are additionally clamped at zero so edge strengths stay nonnegative even
    when the learnable gamma wanders below zero.

    Backward follows the sigmoid surrogate M * sigma((M - gamma)/tau) regardless
    of `soft`; with soft=True the forward uses the surrogate too (this is the
    mode the finite-difference oracle checks).
    """
    z = (m.value - gamma.value) / tau
    gate_soft = sigmoid_np(z)
    gate_hard = ((m.value >= gamma.value) & (m.value >= 0.0)).astype(np.float64)
    gate = gate_soft if soft else gate_hard
    out_val = m.value * gate * free
    dgate = gate_soft * (1.0 - gate_soft) / tau

    def pull(g):
        gf = g * free
        if m.requires_grad:
            m.grad += gf * (gate_soft + m.value * dgate)
        if gamma.requires_grad:
            gamma.grad += -(gf * m.value * dgate).sum()

    return Tensor(out_val, (m, gamma), pull, op="threshold_mask")


def trace(a: Tensor) -> Tensor:
    n = a.value.shape[0]
    if a.value.ndim != 2 or a.value.shape[0] != a.value.shape[1]:
        raise ShapeError(f"trace: expected square matrix, got {a.value.shape}")

    def pull(g):
        a.grad += g * np.eye(n)

    return Tensor(np.trace(a.value), (a,), pull, op="trace")


def matrix_power_trace(a: Tensor, exponent: int) -> Tensor:
    """Tr(a^exponent) built from repeated matmuls (exponent >= 1)."""
    acc = a
    for _ in range(exponent - 1):
        acc = matmul(acc, a)
    return trace(acc)


# ---- fused ops (same math as the primitive chains, fewer tape nodes) ----

def dense(x: Tensor, w: Tensor, b: Tensor, relu_out: bool = False,
          in_shape: tuple | None = None, out_shape: tuple | None = None) -> Tensor:
    """act(x @ w + b) with optional flattening of x and reshaping of the output."""
    v = x.value.reshape(in_shape) if in_shape else x.value
    if v.ndim != 2 or v.shape[1] != w.value.shape[0]:
        raise ShapeError(f"dense: incompatible shapes {v.shape} @ {w.value.shape}")
    y = v @ w.value + b.value
    mask = (y > 0) if relu_out else None
    out_val = np.where(mask, y, 0.0) if relu_out else y
    if out_shape:
        out_val = out_val.reshape(out_shape)

    def pull(g):
        g2 = g.reshape(y.shape)
        if relu_out:
            g2 = g2 * mask
        if x.requires_grad:
            x.grad += (g2 @ w.value.T).reshape(x.value.shape)
        if w.requires_grad:
            w.grad += v.T @ g2
        if b.requires_grad:
            b.grad += g2.sum(axis=0)

    return Tensor(out_val, (x, w, b), pull, op="dense")


def pair_score(cp: Tensor, cm: Tensor, wp: Tensor, wm: Tensor, bias: Tensor) -> Tensor:
    """Shared affine scorer over an embedding pair: cp.wp + cm.wm + bias -> (B,k)."""
    out_val = cp.value @ wp.value + cm.value @ wm.value + bias.value

    def pull(g):
        if cp.requires_grad:
            cp.grad += g[..., None] * wp.value
        if cm.requires_grad:
            cm.grad += g[..., None] * wm.value
        if wp.requires_grad:
            wp.grad += np.einsum("bk,bkm->m", g, cp.value)
        if wm.requires_grad:
            wm.grad += np.einsum("bk,bkm->m", g, cm.value)
        if bias.requires_grad:
            bias.grad += g.sum()

    return Tensor(out_val, (cp, cm, wp, wm, bias), pull, op="pair_score")


def mixture_const(weights: np.ndarray, cp: Tensor, cm: Tensor) -> Tensor:
    """w*c+ + (1-w)*c- with constant per-node weights (B,k)."""
    w = weights[..., None]
    out_val = w * cp.value + (1.0 - w) * cm.value

    def pull(g):
        if cp.requires_grad:
            cp.grad += g * w
        if cm.requires_grad:
            cm.grad += g * (1.0 - w)

    return Tensor(out_val, (cp, cm), pull, op="mixture_const")


def heads_gate(z: Tensor, head_w: Tensor, head_b: Tensor, copy_logits: Tensor,
               gate: np.ndarray) -> Tensor:
    """Per-node output heads with root fallback:
    gate*(sum_h z[b,k,h]*head_w[k,h] + head_b[k]) + (1-gate)*copy_logits."""
    raw = np.einsum("bkh,kh->bk", z.value, head_w.value) + head_b.value
    out_val = gate * raw + (1.0 - gate) * copy_logits.value

    def pull(g):
        gg = g * gate
        if z.requires_grad:
            z.grad += gg[..., None] * head_w.value
        if head_w.requires_grad:
            head_w.grad += np.einsum("bk,bkh->kh", gg, z.value)
        if head_b.requires_grad:
            head_b.grad += gg.sum(axis=0)
        if copy_logits.requires_grad:
            copy_logits.grad += g * (1.0 - gate)

    return Tensor(out_val, (z, head_w, head_b, copy_logits), pull, op="heads_gate")


def bce_mean(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy from logits: mean(softplus(l) - y*l)."""
    y = np.asarray(targets, dtype=np.float64)
    out_val = np.mean(np.logaddexp(0.0, logits.value) - y * logits.value)
    n = logits.value.size

    def pull(g):
        logits.grad += g * (sigmoid_np(logits.value) - y) / n

    return Tensor(out_val, (logits,), pull, op="bce_mean")


def abs_diff_weighted(logits: Tensor, weights: np.ndarray) -> Tensor:
    """For stacked logits (2B,k): (1/B) sum_w |sigma(top) - sigma(bottom)|."""
    b = logits.value.shape[0] // 2
    p = sigmoid_np(logits.value)
    diff = p[:b] - p[b:]
    out_val = np.sum(np.abs(diff) * weights) / b

    def pull(g):
        s = g * np.sign(diff) * weights / b
        logits.grad[:b] += s * p[:b] * (1.0 - p[:b])
        logits.grad[b:] += -s * p[b:] * (1.0 - p[b:])

    return Tensor(out_val, (logits,), pull, op="abs_diff_weighted")


def trace_power_penalty(a: Tensor, beta: float) -> Tensor:
    """Tr((I + (beta/k) a*a)^k) - k with a closed-form gradient."""
    k = a.value.shape[0]
    base = np.eye(k) + (beta / k) * (a.value * a.value)
    pk_minus_1 = np.linalg.matrix_power(base, k - 1)
    out_val = float(np.einsum("ij,ji->", pk_minus_1, base)) - k

    def pull(g):
        # d Tr(B^k)/dB = k (B^{k-1})^T, chained through B = I + (beta/k) a*a.
        a.grad += g * k * pk_minus_1.T * (beta / k) * 2.0 * a.value

    return Tensor(out_val, (a,), pull, op="trace_power_penalty")


def sgd_step(params, lr: float) -> list[str]:
    """Plain gradient descent; returns names of blocks rejected for non-finite grads."""
    rejected = []
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            rejected.append(p.name)
            p.zero_grad()
            continue
        p.value -= lr * p.grad
        p.zero_grad()
    return rejected


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def gradient_check(fn, params, step: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    `fn` rebuilds and returns the scalar loss Tensor from the current param
    values. Relative error is |analytic - fd| / max(1, |analytic|).
    """
    zero_grads(params)
    fn().backward()
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        ana = analytic[p.name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = float(fn().value)
            flat[i] = keep - step
            down = float(fn().value)
            flat[i] = keep
            fd = (up - down) / (2.0 * step)
            err = abs(ana[i] - fd) / max(1.0, abs(ana[i]))
            if err > worst:
                worst = err
    zero_grads(params)
    return worst
