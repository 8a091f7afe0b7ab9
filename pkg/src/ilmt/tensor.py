"""Minimal dense-tensor math with reverse-mode automatic differentiation.

Tensors are rank-1/2/3 float32 numpy arrays. Every operation that involves a
tensor with ``requires_grad`` appends a record to the active compute graph;
``backward`` replays the records in reverse insertion order. The graph is
rebuilt on every forward pass, which keeps RNN unrolling simple and correct.

Shapes follow numpy row-major convention: a sequence of L vectors of width D
is stored as (L, D), a batch of those as (B, L, D).
"""

import contextlib

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericOverflowError(FloatingPointError):
    """Raised when a forward operation produces NaN or infinity."""


class ComputeGraph:
    """Ordered tape of operation records.

    Each record is (output, inputs, backward_fn). ``backward_fn(grad_out)``
    returns one gradient array per input (or None for inputs that do not
    need gradients). Insertion order is a valid topological order because
    outputs are created after their inputs.
    """

    def __init__(self):
        self.nodes = []
        self.enabled = True

    def record(self, out, inputs, backward_fn):
        self.nodes.append((out, inputs, backward_fn))

    def clear(self):
        self.nodes.clear()


_graph = ComputeGraph()


def active_graph():
    return _graph


@contextlib.contextmanager
def no_grad():
    """Disable taping; forward results are plain tensors."""
    prev = _graph.enabled
    _graph.enabled = False
    try:
        yield
    finally:
        _graph.enabled = prev


@contextlib.contextmanager
def fresh_graph():
    """Run with a private, empty graph (used by grad_check and tests)."""
    global _graph
    prev = _graph
    _graph = ComputeGraph()
    try:
        yield _graph
    finally:
        _graph = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 3:
            raise DimensionError(f"rank {arr.ndim} > 3 not supported")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad)


def _check_finite(arr, opname):
    if not np.all(np.isfinite(arr)):
        raise NumericOverflowError(f"{opname} produced non-finite values")


def _make_output(data, inputs, backward_fn, opname):
    _check_finite(data, opname)
    needs = _graph.enabled and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = needs
    out.grad = None
    out.is_leaf = not needs
    if needs:
        _graph.record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape}")

    def backward(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _make_output(a.data @ b.data, (a, b), backward, "matmul")


def bmm(a, b):
    """Batched matmul: (B,m,k) @ (B,k,n) -> (B,m,n)."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0] \
            or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shapes {a.shape} x {b.shape}")

    def backward(g):
        return (g @ b.data.transpose(0, 2, 1) if a.requires_grad else None,
                a.data.transpose(0, 2, 1) @ g if b.requires_grad else None)

    return _make_output(a.data @ b.data, (a, b), backward, "bmm")


def _require_same_shape(a, b, opname):
    if a.shape != b.shape:
        raise DimensionError(f"{opname} shapes {a.shape} vs {b.shape}")


def add(a, b):
    _require_same_shape(a, b, "add")

    def backward(g):
        return (g if a.requires_grad else None,
                g if b.requires_grad else None)

    return _make_output(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    _require_same_shape(a, b, "sub")

    def backward(g):
        return (g if a.requires_grad else None,
                -g if b.requires_grad else None)

    return _make_output(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    _require_same_shape(a, b, "mul")

    def backward(g):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)

    return _make_output(a.data * b.data, (a, b), backward, "mul")


def scale(a, c):
    c = float(c)

    def backward(g):
        return (g * c,)

    return _make_output(a.data * c, (a,), backward, "scale")


def bias_add(x, b):
    """Explicit broadcast: add vector b over the rows of matrix x."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"bias_add shapes {x.shape} + {b.shape}")

    def backward(g):
        return (g if x.requires_grad else None,
                g.sum(axis=0, dtype=np.float64).astype(g.dtype)
                if b.requires_grad else None)

    return _make_output(x.data + b.data, (x, b), backward, "bias_add")


def broadcast_add_mid(x, q):
    """(B,L,D) + (B,1,D)-style broadcast of q: (B,D) over the middle axis."""
    if x.data.ndim != 3 or q.data.ndim != 2 or x.shape[0] != q.shape[0] \
            or x.shape[2] != q.shape[1]:
        raise DimensionError(f"broadcast_add_mid shapes {x.shape} + {q.shape}")

    def backward(g):
        return (g if x.requires_grad else None,
                g.sum(axis=1, dtype=np.float64).astype(g.dtype)
                if q.requires_grad else None)

    return _make_output(x.data + q.data[:, None, :], (x, q), backward,
                        "broadcast_add_mid")


def tanh(x):
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _make_output(y, (x,), backward, "tanh")


def sigmoid(x):
    # computed via tanh for numerical stability at large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _make_output(y.astype(x.data.dtype), (x,), backward, "sigmoid")


def softmax(x):
    """Softmax over the last axis, with max-subtraction for stability."""
    if x.data.size == 0 or x.shape[-1] == 0:
        raise DimensionError("softmax of empty input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = (e / e.sum(axis=-1, keepdims=True, dtype=np.float64)) \
        .astype(x.data.dtype)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True, dtype=np.float64)
        return ((y * (g - dot)).astype(y.dtype),)

    return _make_output(y, (x,), backward, "softmax")


def masked_softmax(scores, mask):
    """Row softmax of (B,L) scores restricted to positions where mask==1.

    ``mask`` is a plain float/bool numpy array; fully-masked rows are an
    error (attention always has at least one valid position).
    """
    if scores.data.ndim != 2:
        raise DimensionError(f"masked_softmax rank {scores.data.ndim}")
    m = np.asarray(mask, dtype=bool)
    if m.shape != scores.shape:
        raise DimensionError(f"mask shape {m.shape} vs {scores.shape}")
    if not m.any(axis=1).all():
        raise DimensionError("masked_softmax row with no valid positions")
    z = np.where(m, scores.data, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(m, np.exp(z), 0.0)
    y = (e / e.sum(axis=1, keepdims=True, dtype=np.float64)) \
        .astype(scores.data.dtype)

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True, dtype=np.float64)
        return ((y * (g - dot)).astype(y.dtype),)

    return _make_output(y, (scores,), backward, "masked_softmax")


def weighted_sum(weights, memory):
    """Context vector: (B,L) weights over (B,L,D) memory -> (B,D)."""
    if weights.data.ndim != 2 or memory.data.ndim != 3 \
            or weights.shape != memory.shape[:2]:
        raise DimensionError(
            f"weighted_sum shapes {weights.shape} over {memory.shape}")

    def backward(g):
        gw = np.einsum("bd,bld->bl", g, memory.data) \
            if weights.requires_grad else None
        gm = weights.data[:, :, None] * g[:, None, :] \
            if memory.requires_grad else None
        return (gw, gm)

    out = np.einsum("bl,bld->bd", weights.data, memory.data) \
        .astype(memory.data.dtype)
    return _make_output(out, (weights, memory), backward, "weighted_sum")


def concat(a, b, axis=0):
    na, nb = a.data.ndim, b.data.ndim
    if na != nb:
        raise DimensionError(f"concat ranks {na} vs {nb}")
    ax = axis if axis >= 0 else na + axis
    for d in range(na):
        if d != ax and a.shape[d] != b.shape[d]:
            raise DimensionError(
                f"concat shapes {a.shape} / {b.shape} on axis {axis}")
    split = a.shape[ax]

    def backward(g):
        ga, gb = np.split(g, [split], axis=ax)
        return (np.ascontiguousarray(ga) if a.requires_grad else None,
                np.ascontiguousarray(gb) if b.requires_grad else None)

    return _make_output(np.concatenate([a.data, b.data], axis=ax),
                        (a, b), backward, "concat")


def stack_steps(steps):
    """Stack per-step (B,D) tensors into (B,T,D)."""
    if not steps:
        raise DimensionError("stack_steps of empty list")

    def backward(g):
        return tuple(np.ascontiguousarray(g[:, t, :])
                     if s.requires_grad else None
                     for t, s in enumerate(steps))

    out = np.stack([s.data for s in steps], axis=1)
    return _make_output(out, tuple(steps), backward, "stack_steps")


def select_step(x, t):
    """Slice step t from (B,T,D) -> (B,D)."""
    if x.data.ndim != 3:
        raise DimensionError(f"select_step rank {x.data.ndim}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, t, :] = g
        return (gx,)

    return _make_output(np.ascontiguousarray(x.data[:, t, :]), (x,),
                        backward, "select_step")


def slice_cols(x, start, stop):
    """Column slice of a matrix: (N,D)[:, start:stop]."""
    if x.data.ndim != 2:
        raise DimensionError(f"slice_cols rank {x.data.ndim}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _make_output(np.ascontiguousarray(x.data[:, start:stop]), (x,),
                        backward, "slice_cols")


def reshape(x, shape):
    shape = tuple(shape)
    old = x.data.shape

    def backward(g):
        return (g.reshape(old),)

    return _make_output(x.data.reshape(shape), (x,), backward, "reshape")


def reverse_sequence(x, lengths):
    """Reverse the first lengths[b] steps of each row of (B,T,D); self-inverse."""
    if x.data.ndim != 3:
        raise DimensionError(f"reverse_sequence rank {x.data.ndim}")
    B, T, _ = x.shape
    idx = np.tile(np.arange(T), (B, 1))
    for b, n in enumerate(lengths):
        idx[b, :n] = np.arange(n - 1, -1, -1)
    rows = np.arange(B)[:, None]

    def backward(g):
        return (g[rows, idx],)

    return _make_output(np.ascontiguousarray(x.data[rows, idx]), (x,),
                        backward, "reverse_sequence")


def rows(table, ids):
    """Embedding lookup: rows ids of (V,D) -> (len(ids), D); grad scatters."""
    if table.data.ndim != 2:
        raise DimensionError(f"rows on rank {table.data.ndim}")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise DimensionError("rows expects a flat id sequence")
    bad = (ids < 0) | (ids >= table.shape[0])
    if bad.any():
        pos = int(np.argmax(bad))
        raise IndexError(
            f"token id {int(ids[pos])} out of range at position {pos}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make_output(table.data[ids].copy(), (table,), backward, "rows")


def tsum(x):
    out = np.array([x.data.sum(dtype=np.float64)], dtype=x.data.dtype)

    def backward(g):
        return (np.full_like(x.data, g.reshape(-1)[0]),)

    return _make_output(out, (x,), backward, "sum")


def tmean(x):
    n = x.data.size
    out = np.array([x.data.sum(dtype=np.float64) / n], dtype=x.data.dtype)

    def backward(g):
        return (np.full_like(x.data, g.reshape(-1)[0] / n),)

    return _make_output(out, (x,), backward, "mean")


def cross_entropy_logits(logits, targets, weights=None):
    """Summed NLL of integer targets under row softmax of (N,V) logits.

    ``weights`` (numpy, length N) scales each row's contribution; rows with
    weight 0 (padding) contribute nothing, in value or gradient. Returns a
    scalar tensor holding the weighted sum (not the mean).
    """
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy rank {logits.data.ndim}")
    targets = np.asarray(targets, dtype=np.int64)
    N, V = logits.shape
    if targets.shape != (N,):
        raise DimensionError(f"targets shape {targets.shape} vs N={N}")
    w = np.ones(N, dtype=np.float64) if weights is None \
        else np.asarray(weights, dtype=np.float64)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, dtype=np.float64))
    nll = lse - z[np.arange(N), targets]
    out = np.array([(nll * w).sum()], dtype=logits.data.dtype)

    def backward(g):
        p = np.exp(z.astype(np.float64) - lse[:, None])
        p[np.arange(N), targets] -= 1.0
        return ((p * (w[:, None] * g.reshape(-1)[0]))
                .astype(logits.data.dtype),)

    return _make_output(out, (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------------------
# backward pass


def backward(loss):
    """Populate gradients of every reachable requires_grad leaf tensor.

    Leaf gradients accumulate across calls; reset with ``zero_grad``.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward on non-scalar shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for out, inputs, backward_fn in reversed(_graph.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, backward_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.is_leaf:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi
            else:
                acc = grads.get(id(inp))
                if acc is None:
                    grads[id(inp)] = gi.copy()
                else:
                    acc += gi
    if loss.is_leaf and loss.requires_grad:
        loss.grad = (loss.grad if loss.grad is not None
                     else np.zeros_like(loss.data))
        loss.grad += 1.0


def grad_check(f, theta, h=1e-3):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps the parameter tensor to a scalar tensor; it may read other
    (fixed) tensors. Relative error per coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

    Every leaf tensor feeding the computation is temporarily promoted to
    float64 so the finite-difference oracle is not drowned by float32
    rounding of the loss; the tensors are restored afterwards. The check
    therefore validates the backward rules, which are dtype-independent.
    """
    with fresh_graph() as g:
        loss = f(theta)
        if not np.all(np.isfinite(loss.data)):
            raise NumericOverflowError("grad_check: non-finite f(theta)")
        leaves = {id(theta): theta}
        for _out, inputs, _fn in g.nodes:
            for t in inputs:
                if t.is_leaf:
                    leaves.setdefault(id(t), t)

    saved_data = {i: t.data for i, t in leaves.items()}
    saved_grad = theta.grad
    for t in leaves.values():
        t.data = t.data.astype(np.float64)
    try:
        with fresh_graph():
            loss = f(theta)
            theta.grad = np.zeros_like(theta.data)
            backward(loss)
            analytic = theta.grad.reshape(-1).copy()

        flat = theta.data.reshape(-1)
        numeric = np.zeros_like(analytic)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            with fresh_graph(), no_grad():
                fp = f(theta).item()
            flat[i] = keep - h
            with fresh_graph(), no_grad():
                fm = f(theta).item()
            flat[i] = keep
            numeric[i] = (fp - fm) / (2.0 * h)
    finally:
        for i, t in leaves.items():
            t.data = saved_data[i]
        theta.grad = saved_grad

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
