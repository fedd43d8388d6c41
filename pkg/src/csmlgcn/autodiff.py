"""A small reverse-mode autodiff engine over dense float64 matrices.

Every operation returns a :class:`Value`.  A value created from inputs
that do not require gradients carries no backward record, so inference
builds no graph at all.  ``Value.backward`` walks the recorded graph in
reverse topological order, visiting each node once and accumulating
gradients additively into every input.

All data is kept 2-d (``rows x cols``); scalars are ``1 x 1``.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

BCE_CLAMP = 1e-12


class Value:
    """A matrix node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ValueError(f"Value data must be at most 2-d, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a 1x1 value")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        # never mutate: backward closures may hand the same array to several inputs
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Back-propagate from this node.

        ``grad`` defaults to ones (i.e. the derivative of ``sum(self)``).
        """
        if not self.requires_grad:
            raise RuntimeError("backward() on a value that does not require grad")
        order = _topological_order(self)
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        if seed.shape != self.shape:
            raise ValueError(f"seed gradient shape {seed.shape} != {self.shape}")
        self._accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Value(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _topological_order(root: Value) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents, backward, op):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Value(data, True, parents, backward, op)
    return Value(data, op=op)


def _check_broadcast(a_shape, b_shape):
    if a_shape == b_shape:
        return a_shape
    for small, big in ((b_shape, a_shape), (a_shape, b_shape)):
        if small == (1, 1) or small == (1, big[1]) or small == (big[0], 1):
            return big
    raise ValueError(f"incompatible shapes {a_shape} and {b_shape}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# -- linear algebra -----------------------------------------------------------

def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a) -> Value:
    a = as_value(a)

    def backward(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), backward, "transpose")


def sparse_matmul(m, h) -> Value:
    """``m @ h`` for a constant scipy sparse matrix ``m``."""
    h = as_value(h)
    if m.shape[1] != h.shape[0]:
        raise ValueError(f"sparse_matmul shape mismatch: {m.shape} @ {h.shape}")
    mt = None

    def backward(g):
        nonlocal mt
        if mt is None:
            mt = m.T.tocsr()
        h._accumulate(np.asarray(mt @ g))

    return _make(np.asarray(m @ h.data), (h,), backward, "sparse_matmul")


def graph_conv(h, W_self, W_neigh, bias, ahat, symmetric=False) -> Value:
    """Fused pre-activation ``h W_self + ahat (h W_neigh) + bias``.

    ``ahat`` is a constant ``n x n`` operator (scipy sparse or dense) and
    ``bias`` a ``1 x d_out`` row added to every node.  Equivalent to
    composing the primitive ops; fused because it dominates training time.
    ``symmetric=True`` lets the backward pass reuse ``ahat`` as its own
    transpose.
    """
    h, W_self, W_neigh, bias = (as_value(x) for x in (h, W_self, W_neigh, bias))
    n, d_in = h.shape
    if W_self.shape != W_neigh.shape or W_self.shape[0] != d_in:
        raise ValueError(f"graph_conv shape mismatch: h {h.shape}, W {W_self.shape}/{W_neigh.shape}")
    d_out = W_self.shape[1]
    if bias.shape != (1, d_out):
        raise ValueError(f"graph_conv bias shape {bias.shape} != (1, {d_out})")
    if ahat.shape != (n, n):
        raise ValueError("graph_conv operator does not match the number of rows")
    # apply ahat on the narrower side; separate products beat one stacked product
    project_first = d_in > d_out
    if project_first:
        z = np.asarray(ahat @ (h.data @ W_neigh.data))
    else:
        ah = np.asarray(ahat @ h.data)
        z = ah @ W_neigh.data
    z += h.data @ W_self.data
    z += bias.data
    ahat_t = ahat if symmetric else ahat.T

    def backward(g):
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0, keepdims=True))
        if W_self.requires_grad:
            W_self._accumulate(h.data.T @ g)
        agg_g = None
        if project_first and (h.requires_grad or W_neigh.requires_grad):
            agg_g = np.asarray(ahat_t @ g)
        if W_neigh.requires_grad:
            W_neigh._accumulate(h.data.T @ agg_g if project_first else ah.T @ g)
        if h.requires_grad:
            if project_first:
                gh = agg_g @ W_neigh.data.T
            else:
                gh = np.asarray(ahat_t @ (g @ W_neigh.data.T))
            gh += g @ W_self.data.T
            h._accumulate(gh)

    return _make(z, (h, W_self, W_neigh, bias), backward, "graph_conv")


def relu_dropout(a, rate: float, training: bool, rng=None) -> Value:
    """``dropout(relu(a))`` with a single combined mask."""
    a = as_value(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return relu(a)
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask, scale = _keep_bits(rng, a.shape, rate)
    mask &= a.data > 0
    out = a.data * mask
    out *= scale

    def backward(g):
        gm = g * mask
        gm *= scale
        a._accumulate(gm)

    return _make(out, (a,), backward, "relu_dropout")


def neighbor_aggregate(h, graph, layer: int) -> Value:
    """Row ``u`` of the result is ``sum_{v in N(u)} h_v / sqrt(p_u p_v)``
    with ``p = deg + 1`` in the given layer."""
    h = as_value(h)
    if h.shape[0] != graph.node_count:
        raise ValueError(f"h has {h.shape[0]} rows, graph has {graph.node_count} nodes")
    out = sparse_matmul(graph.normalized_adjacency(layer), h)
    out.op = "neighbor_aggregate"
    return out


# -- element-wise -------------------------------------------------------------

def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    shape = _check_broadcast(a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out = a.data + b.data
    assert out.shape == shape
    return _make(out, (a, b), backward, "add")


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, "mul")


def scale(a, c: float) -> Value:
    a = as_value(a)
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward, "scale")


def relu(a) -> Value:
    a = as_value(a)
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward, "relu")


def tanh(a) -> Value:
    a = as_value(a)
    t = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - t * t))

    return _make(t, (a,), backward, "tanh")


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Value:
    a = as_value(a)
    s = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * s * (1.0 - s))

    return _make(s, (a,), backward, "sigmoid")


def softmax_rows(a) -> Value:
    a = as_value(a)
    if np.isnan(a.data).any():
        raise ValueError("softmax_rows: NaN input")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        a._accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _make(s, (a,), backward, "softmax_rows")


def dropout(a, rate: float, training: bool, rng: np.random.Generator | None = None) -> Value:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    a = as_value(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = _keep_mask(rng, a.shape, rate)

    def backward(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward, "dropout")


def _keep_bits(rng, shape, rate):
    """Boolean keep mask from 8- or 16-bit uniforms, plus the matching rescale.

    The keep probability is rounded to a multiple of 2**-16 (exact for
    rates such as 0.5 that need only 8 bits); scaling by the inverse of the
    rounded probability keeps the expected output unchanged.
    """
    levels, dtype = (256, np.uint8) if float(rate * 256).is_integer() else (65536, np.uint16)
    cut = int(round(rate * levels))
    if cut >= levels:
        raise ValueError("dropout rate too close to 1")
    size = int(np.prod(shape))
    bits = np.frombuffer(rng.bytes(size * np.dtype(dtype).itemsize), dtype=dtype).reshape(shape)
    return bits >= cut, levels / (levels - cut)


def _keep_mask(rng, shape, rate):
    keep, scale = _keep_bits(rng, shape, rate)
    return keep * scale


# -- reductions and reshaping -------------------------------------------------

def sum_rows(a) -> Value:
    """Column-wise sum over rows, giving a ``1 x d`` row."""
    a = as_value(a)

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(a.data.sum(axis=0, keepdims=True), (a,), backward, "sum_rows")


def mean_all(a) -> Value:
    a = as_value(a)
    n = a.data.size

    def backward(g):
        a._accumulate(np.full(a.shape, g[0, 0] / n))

    return _make(a.data.mean().reshape(1, 1), (a,), backward, "mean_all")


def hstack(values: Sequence[Value]) -> Value:
    values = [as_value(v) for v in values]
    rows = {v.shape[0] for v in values}
    if len(rows) != 1:
        raise ValueError("hstack: row counts differ")
    widths = np.cumsum([0] + [v.shape[1] for v in values])

    def backward(g):
        for v, lo, hi in zip(values, widths[:-1], widths[1:]):
            if v.requires_grad:
                v._accumulate(g[:, lo:hi])

    return _make(np.hstack([v.data for v in values]), values, backward, "hstack")


def column(a, j: int) -> Value:
    a = as_value(a)

    def backward(g):
        full = np.zeros(a.shape)
        full[:, j:j + 1] = g
        a._accumulate(full)

    return _make(a.data[:, j:j + 1], (a,), backward, "column")


def bce_loss(psi, y) -> Value:
    """Mean binary cross-entropy; ``psi`` is clamped to ``[1e-12, 1-1e-12]``."""
    psi = as_value(psi)
    y = np.asarray(y, dtype=np.float64)
    if y.size != psi.data.size:
        raise ValueError("bce_loss: psi and y lengths differ")
    y = y.reshape(psi.shape)
    n = psi.data.size
    p = np.clip(psi.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum() / n
    inside = (psi.data > BCE_CLAMP) & (psi.data < 1.0 - BCE_CLAMP)

    def backward(g):
        d = (-y / p + (1.0 - y) / (1.0 - p)) / n
        psi._accumulate(g[0, 0] * d * inside)

    return _make(np.array([[loss]]), (psi,), backward, "bce")


def total(values: Iterable[Value]) -> Value:
    values = list(values)
    if not values:
        raise ValueError("total of an empty list")
    out = values[0]
    for v in values[1:]:
        out = add(out, v)
    return out


# -- verification -------------------------------------------------------------

def grad_check(f: Callable[[], Value], params: Sequence[Value], eps: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Largest relative error between reverse-mode and central-difference
    gradients of the scalar ``f()`` over every entry of ``params``.

    ``f`` must read parameter data at call time and be deterministic.
    The relative error of one entry is ``|a - n| / max(|a|, |n|, floor)``.
    The floor keeps gradients that are zero up to rounding (say 1e-10,
    where the difference quotient is mostly roundoff) from dominating.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar function")
    if not np.isfinite(out.data).all():
        raise ValueError("grad_check: f is not finite")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f().item()
            flat[i] = orig - eps
            fm = f().item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError("grad_check: f is not finite")
            numeric = (fp - fm) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
