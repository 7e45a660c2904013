"""Dense float64 tensors with recorded reverse-mode differentiation.

All model arithmetic downstream (encoders, attention, fusion, heads,
loss) is expressed through the ops in this module.  Ops executed while a
:class:`Tape` is active are recorded; :func:`backward` replays the tape
once in reverse, accumulating gradients additively into every tensor that
requires them.  :func:`grad_check` compares those analytic gradients
against central finite differences.

Values are always 64-bit floats in row-major order.  Non-finite inputs
are rejected at construction; a non-finite value produced by an op aborts
with a :class:`~memefuse.errors.NumericError` naming the op.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import (
    ContractError,
    GradientAbsentError,
    NumericError,
    ShapeError,
)

_LOG_FLOOR = 1e-12      # probability floor guarding log()
_COSINE_GUARD = 1e-12   # ||x||*||y|| below this => cosine treated as 0


class Tensor:
    """A dense array with an optional gradient slot.

    `data` is a float64 ndarray (row-major).  `grad` raises until
    populated by :func:`backward`; use `has_grad` to probe.
    """

    __slots__ = ("data", "requires_grad", "_grad", "name")

    def __init__(self, values, requires_grad=False, name=None, _validate=True):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        arr = np.ascontiguousarray(arr)
        if _validate and not np.isfinite(arr).all():
            raise NumericError(
                f"tensor {name or '<unnamed>'} constructed with non-finite values"
            )
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            raise GradientAbsentError(
                f"tensor {self.name or '<unnamed>'} has no gradient "
                "(detached from the graph or backward not run)"
            )
        return self._grad

    @property
    def has_grad(self) -> bool:
        return self._grad is not None

    def zero_grad(self):
        self._grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad += g

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


class TapeNode:
    """One recorded op: inputs, output, and the local gradient rule.

    `backward` maps the output gradient to a tuple of per-input gradients
    (None for inputs that need none).
    """

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


_ACTIVE = threading.local()


def _tape_stack():
    stack = getattr(_ACTIVE, "stack", None)
    if stack is None:
        stack = []
        _ACTIVE.stack = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of ops from one forward pass.

    Nodes are appended in execution order, so every node's inputs precede
    it and one reverse sweep visits each node exactly once.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, op, inputs, output, backward):
        self.nodes.append(TapeNode(op, inputs, output, backward))

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor, tape: Tape):
    """Populate gradients of `loss` w.r.t. every requires-grad tensor.

    `loss` must be scalar and the output of the tape's final node.
    Gradients accumulate additively across fan-out; call `zero_grad` on
    leaves before reusing them on a fresh tape.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.nodes or tape.nodes[-1].output is not loss:
        raise ContractError("loss is not the final node of the tape")
    loss._grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        gout = node.output._grad
        if gout is None:
            continue
        gins = node.backward(gout)
        for inp, gin in zip(node.inputs, gins):
            if gin is None or not inp.requires_grad:
                continue
            inp.accumulate_grad(gin)


def _check_finite(op, arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"op '{op}' produced non-finite values")


def _apply(op, inputs, out_values, backward_fn) -> Tensor:
    out = Tensor(
        out_values,
        requires_grad=any(t.requires_grad for t in inputs),
        _validate=False,
    )
    _check_finite(op, out.data)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(op, inputs, out, backward_fn)
    return out


def _need_2d(op, *tensors):
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeError(f"{op} expects 2-d tensors, got shape {t.shape}")


# ---------------------------------------------------------------------------
# recorded ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product (p,q)@(q,r); dA = G.B^T, dB = A^T.G."""
    _need_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    av, bv = a.data, b.data

    def back(g):
        return g @ bv.T, av.T @ g

    return _apply("matmul", (a, b), av @ bv, back)


def _binary_elementwise(op, a, b, out, da, db):
    _need_2d(op, a, b)
    if a.shape != b.shape:
        raise ShapeError(f"{op} shapes differ: {a.shape} vs {b.shape}")

    def back(g):
        return da(g), db(g)

    return _apply(op, (a, b), out, back)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary_elementwise("add", a, b, a.data + b.data,
                               lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary_elementwise("sub", a, b, a.data - b.data,
                               lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.data, b.data
    return _binary_elementwise("mul", a, b, av * bv,
                               lambda g: g * bv, lambda g: g * av)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (not a tracked tensor)."""
    c = float(c)
    return _apply("scale", (x,), x.data * c, lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    """Add a python constant elementwise."""
    return _apply("add_scalar", (x,), x.data + float(c), lambda g: (g,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _apply("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    return _apply("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def log(x: Tensor) -> Tensor:
    """Natural log with inputs floored at 1e-12 (guards log of zero)."""
    clamped = np.maximum(x.data, _LOG_FLOOR)
    live = x.data >= _LOG_FLOOR  # flat below the floor, so zero gradient there
    return _apply("log", (x,), np.log(clamped),
                  lambda g: (g * live / clamped,))


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction."""
    _need_2d("softmax_rows", x)
    if x.shape[1] < 1:
        raise ShapeError(f"softmax_rows on empty rows, shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        # dL/dx = y * (g - sum_j g_j y_j) per row
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _apply("softmax_rows", (x,), y, back)


def transpose(x: Tensor) -> Tensor:
    _need_2d("transpose", x)
    return _apply("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


def concat(tensors, axis: int) -> Tensor:
    """Concatenate 2-d tensors along axis 0 (rows) or 1 (columns)."""
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of zero tensors")
    if axis not in (0, 1):
        raise ShapeError(f"concat axis must be 0 or 1, got {axis}")
    _need_2d("concat", *tensors)
    other = 1 - axis
    ref = tensors[0].shape[other]
    for t in tensors[1:]:
        if t.shape[other] != ref:
            raise ShapeError(
                f"concat axis {axis}: extents {tensors[0].shape} vs {t.shape}"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.array(part) for part in np.split(g, splits, axis=axis))

    return _apply("concat", tuple(tensors), out, back)


def row_sum(x: Tensor) -> Tensor:
    """Sum along columns -> (rows, 1)."""
    _need_2d("row_sum", x)
    cols = x.shape[1]
    return _apply("row_sum", (x,), x.data.sum(axis=1, keepdims=True),
                  lambda g: (np.repeat(g, cols, axis=1),))


def col_sum(x: Tensor) -> Tensor:
    """Sum along rows -> (1, cols)."""
    _need_2d("col_sum", x)
    rows = x.shape[0]
    return _apply("col_sum", (x,), x.data.sum(axis=0, keepdims=True),
                  lambda g: (np.repeat(g, rows, axis=0),))


def sum_all(x: Tensor) -> Tensor:
    """Sum every entry -> (1, 1) scalar."""
    shape = x.data.shape
    return _apply("sum_all", (x,), x.data.sum().reshape(1, 1),
                  lambda g: (np.full(shape, g.reshape(-1)[0]),))


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten to a single row (1, r*c)."""
    shape = x.data.shape
    return _apply("flatten", (x,), x.data.reshape(1, -1).copy(),
                  lambda g: (g.reshape(shape),))


def lookup_rows(table: Tensor, indices) -> Tensor:
    """Gather rows of `table`; gradient scatter-adds back into those rows."""
    _need_2d("lookup_rows", table)
    idx = [int(i) for i in indices]
    if not idx:
        raise ContractError("lookup_rows with no indices")
    rows = table.shape[0]
    for i in idx:
        if not 0 <= i < rows:
            raise ShapeError(f"lookup_rows index {i} out of range for {rows} rows")
    idx_arr = np.array(idx)

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx_arr, g)
        return (gt,)

    return _apply("lookup_rows", (table,), table.data[idx_arr].copy(), back)


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row j of x by scalar s[j]; s has shape (rows, 1)."""
    _need_2d("scale_rows", x, s)
    if s.shape != (x.shape[0], 1):
        raise ShapeError(f"scale_rows needs s of shape ({x.shape[0]}, 1), got {s.shape}")
    xv, sv = x.data, s.data

    def back(g):
        return g * sv, (g * xv).sum(axis=1, keepdims=True)

    return _apply("scale_rows", (x, s), xv * sv, back)


def scalar_mul(x: Tensor, s: Tensor) -> Tensor:
    """Multiply every entry of x by a (1,1) scalar tensor."""
    _need_2d("scalar_mul", x, s)
    if s.shape != (1, 1):
        raise ShapeError(f"scalar_mul needs a (1,1) scalar, got {s.shape}")
    xv, sv = x.data, s.data

    def back(g):
        return g * sv, (g * xv).sum().reshape(1, 1)

    return _apply("scalar_mul", (x, s), xv * sv, back)


def row_cosine(x: Tensor, y: Tensor) -> Tensor:
    """Per-row cosine similarity -> (rows, 1).

    Rows where ||x_j||*||y_j|| < 1e-12 yield cosine 0 with zero gradient,
    so downstream 1-cosine relevance degrades to pass-through on blank
    rows instead of dividing by ~0.
    """
    _need_2d("row_cosine", x, y)
    if x.shape != y.shape:
        raise ShapeError(f"row_cosine shapes differ: {x.shape} vs {y.shape}")
    xv, yv = x.data, y.data
    dot = (xv * yv).sum(axis=1, keepdims=True)
    nx = np.sqrt((xv * xv).sum(axis=1, keepdims=True))
    ny = np.sqrt((yv * yv).sum(axis=1, keepdims=True))
    denom = nx * ny
    live = denom >= _COSINE_GUARD
    safe = np.where(live, denom, 1.0)
    cos = np.where(live, dot / safe, 0.0)

    def back(g):
        g = g * live
        # d cos / dx_j = y_j/(|x||y|) - cos * x_j/|x|^2 (and symmetrically for y)
        nx2 = np.where(live, nx * nx, 1.0)
        ny2 = np.where(live, ny * ny, 1.0)
        gx = g * (yv / safe - cos * xv / nx2)
        gy = g * (xv / safe - cos * yv / ny2)
        return gx, gy

    return _apply("row_cosine", (x, y), cos, back)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows -> (1, cols). Composite of col_sum + scale."""
    return scale(col_sum(x), 1.0 / x.shape[0])


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def grad_check(f, params, step=1e-5):
    """Compare analytic and central-difference gradients of a scalar f.

    `f` must be a deterministic zero-argument callable returning a scalar
    Tensor built from the tensors in `params` (dict name -> Tensor).  For
    every scalar entry theta the numeric gradient (f(theta+h)-f(theta-h))/2h
    is compared to the taped gradient; relative error is
    |a - n| / max(|a| + |n|, 1e-8).  Returns dict name -> max relative error.
    """
    if step <= 0:
        raise ContractError(f"grad_check step must be positive, got {step}")
    params = dict(params)
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(loss, tape)
    analytic = {
        name: (p._grad.copy() if p.has_grad else np.zeros_like(p.data))
        for name, p in params.items()
    }

    def value():
        out = f()
        if out.data.size != 1:
            raise ContractError("grad_check expects a scalar-valued f")
        return float(out.data.reshape(-1)[0])

    worst = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        err = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            f_plus = value()
            flat[i] = saved - step
            f_minus = value()
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(a_flat[i] - numeric) / max(abs(a_flat[i]) + abs(numeric), 1e-8)
            err = max(err, rel)
        worst[name] = err
    return worst
