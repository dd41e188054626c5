"""Small reverse-mode autodiff over float64 numpy arrays.

Operations run eagerly. While a :class:`Tape` is active, every op whose inputs
need gradients appends a record (output, inputs, vector-Jacobian product) to
it; :func:`backward` replays those records in reverse.

    store = ParameterStore()
    store.register("w", (3,))
    glorot_init(store, seed=0)
    with Tape():
        loss = reduce_sum(tanh(store.tensor("w")))
    grads = backward(loss, store)
"""

from __future__ import annotations

import threading
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NoTape, NumericalError, ShapeMismatch, UnknownParameter

NORM_FLOOR = 1e-12

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tensor:
    __slots__ = ("value", "requires_grad", "param", "tape")

    def __init__(self, value, requires_grad=False, param=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.param = param
        self.tape = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f", param={self.param!r}" if self.param else ""
        return f"Tensor(shape={self.shape}{tag})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class _Record:
    name: str
    out: Tensor
    inputs: tuple
    vjp: Callable


class Tape:
    """Context manager that records ops for a single backward pass."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def __len__(self):
        return len(self.records)


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(name, value, inputs, vjp) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{name} produced non-finite values")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=track)
    if track:
        out.tape = tape
        tape.records.append(_Record(name, out, tuple(inputs), vjp))
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _op("add", a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _op("sub", a.value - b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _op("mul", a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _op("neg", -a.value, (a,), lambda g: (-g,))


def add_n(xs: Sequence) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeMismatch("add_n needs at least one tensor")
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ShapeMismatch(f"add_n: mixed shapes {[x.shape for x in xs]}")
    total = xs[0].value.copy()
    for x in xs[1:]:
        total = total + x.value
    return _op("add_n", total, xs, lambda g: tuple(g for _ in xs))


# --- nonlinearities -----------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _op("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _op("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ez = np.exp(v[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(np.atleast_1d(x.value)).reshape(x.shape)
    return _op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.value)
    return _op("exp", y, (x,), lambda g: (g * y,))


def log(x, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(x, floor)``; no gradient flows where the floor binds."""
    x = as_tensor(x)
    active = x.value > floor
    safe = np.where(active, x.value, max(floor, NORM_FLOOR))
    y = np.log(np.maximum(x.value, floor)) if floor > 0 else np.log(x.value)
    return _op("log", y, (x,), lambda g: (np.where(active, g / safe, 0.0),))


# --- linear algebra -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return _op("matmul", av @ bv, (a, b), vjp)


def linear(W, b, x) -> Tensor:
    """Affine map ``x @ W.T + b`` for ``x`` of shape (in,) or (n, in)."""
    W, b, x = as_tensor(W), as_tensor(b), as_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeMismatch(f"linear: W{W.shape} b{b.shape} x{x.shape}")
    Wv, xv = W.value, x.value

    def vjp(g):
        if xv.ndim == 1:
            return np.outer(g, xv), g, g @ Wv
        return g.T @ xv, g.sum(axis=0), g @ Wv

    return _op("linear", xv @ Wv.T + b.value, (W, b, x), vjp)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {x.shape}")
    return _op("transpose", x.value.T, (x,), lambda g: (g.T,))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.value.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {x.shape} to {shape}") from None
    return _op("reshape", y, (x,), lambda g: (g.reshape(x.shape),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        y = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _op("concat", y, xs, lambda g: tuple(np.split(g, bounds, axis=axis)))


def gather(x, idx) -> Tensor:
    """Rows ``x[idx]``; repeated indices accumulate in the backward pass."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < -x.shape[0] or idx.max() >= x.shape[0]):
        raise ShapeMismatch(f"gather: index out of range for {x.shape[0]} rows")

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return _op("gather", x.value[idx], (x,), vjp)


def sparse_matmul(A, x) -> Tensor:
    """Product of a constant scipy sparse matrix with a tensor."""
    x = as_tensor(x)
    if A.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"sparse_matmul: {A.shape} @ {x.shape}")
    AT = A.T.tocsr()
    return _op("sparse_matmul", np.asarray(A @ x.value), (x,), lambda g: (np.asarray(AT @ g),))


# --- reductions ---------------------------------------------------------------

def reduce_sum(x, axis=None) -> Tensor:
    x = as_tensor(x)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _op("sum", np.sum(x.value, axis=axis), (x,), vjp)


def reduce_mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise ShapeMismatch("mean of an empty tensor")

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _op("mean", np.mean(x.value, axis=axis), (x,), vjp)


def softmax(x) -> Tensor:
    """Softmax along the last axis."""
    x = as_tensor(x)
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _op("softmax", y, (x,),
               lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def segment_softmax(x, segments, n_segments: int) -> Tensor:
    """Softmax of a 1-D tensor within groups given by ``segments``."""
    x = as_tensor(x)
    seg = np.asarray(segments, dtype=np.intp)
    if x.ndim != 1 or seg.shape != x.shape:
        raise ShapeMismatch(f"segment_softmax: values {x.shape}, segments {seg.shape}")
    top = np.full(n_segments, -np.inf)
    np.maximum.at(top, seg, x.value)
    e = np.exp(x.value - top[seg])
    denom = np.zeros(n_segments)
    np.add.at(denom, seg, e)
    y = e / denom[seg]

    def vjp(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, seg, g * y)
        return (y * (g - dot[seg]),)

    return _op("segment_softmax", y, (x,), vjp)


# --- similarity ---------------------------------------------------------------

def l2_normalize(x, floor: float = NORM_FLOOR) -> Tensor:
    """Scale a vector (or each row of a matrix) to unit length.

    Norms below ``floor`` are replaced by ``floor``.
    """
    x = as_tensor(x)
    xv = x.value
    norm = np.maximum(np.linalg.norm(xv, axis=-1, keepdims=True), floor)
    u = xv / norm
    floored = np.linalg.norm(xv, axis=-1, keepdims=True) <= floor

    def vjp(g):
        proj = np.where(floored, 0.0, (g * u).sum(axis=-1, keepdims=True))
        return ((g - u * proj) / norm,)

    return _op("l2_normalize", u, (x,), vjp)


def clamp_unit(x) -> Tensor:
    """Clamp into [-1, 1] with an identity gradient (corrects rounding only)."""
    x = as_tensor(x)
    return _op("clamp_unit", np.clip(x.value, -1.0, 1.0), (x,), lambda g: (g,))


def cosine(u, v) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 1 or u.shape != v.shape:
        raise ShapeMismatch(f"cosine: {u.shape} vs {v.shape}")
    return clamp_unit(matmul(l2_normalize(u), l2_normalize(v)))


def cosine_matrix(X, Y) -> Tensor:
    """``S[i, j] = cosine(X[i], Y[j])``."""
    X, Y = as_tensor(X), as_tensor(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ShapeMismatch(f"cosine_matrix: {X.shape} vs {Y.shape}")
    return clamp_unit(matmul(l2_normalize(X), transpose(l2_normalize(Y))))


# --- backward -----------------------------------------------------------------

def backward(loss: Tensor, store: ParameterStore | None = None) -> dict:
    """Gradients of a scalar ``loss`` with respect to every parameter leaf.

    With ``store`` given, the result covers all of its parameters and
    unreachable ones get zero arrays.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ShapeMismatch("backward needs a scalar tensor")
    param_grads: dict[str, np.ndarray] = {}
    if loss.param is not None:
        param_grads[loss.param] = np.ones_like(loss.value)
    elif loss.tape is None:
        raise NoTape("loss was computed without an active Tape")
    else:
        grads = {id(loss): np.ones_like(loss.value)}
        for rec in reversed(loss.tape.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.vjp(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.param is not None:
                    prev = param_grads.get(t.param)
                    param_grads[t.param] = gi.copy() if prev is None else prev + gi
                else:
                    prev = grads.get(id(t))
                    grads[id(t)] = gi if prev is None else prev + gi
    if store is None:
        return param_grads
    return {name: param_grads.get(name, np.zeros(store[name].shape)) for name in store}


# --- parameters ---------------------------------------------------------------

PARAM_KINDS = ("weight", "bias", "embedding")


def named_rng(seed: int, name: str) -> np.random.Generator:
    """PCG64 stream keyed by ``(seed, name)``, independent of creation order."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return np.random.Generator(np.random.PCG64(ss))


class ParameterStore:
    """Named float64 arrays with fixed shapes."""

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._kinds: dict[str, str] = {}

    def register(self, name: str, shape, kind: str = "weight") -> None:
        if kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameter kind {kind!r}")
        if name in self._values:
            raise ValueError(f"parameter {name!r} already registered")
        self._values[name] = np.zeros(tuple(shape))
        self._kinds[name] = kind

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self._values[name]
        except KeyError:
            raise UnknownParameter(f"no parameter named {name!r}") from None

    def __setitem__(self, name, value) -> None:
        current = self[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != current.shape:
            raise ShapeMismatch(f"{name}: expected shape {current.shape}, got {value.shape}")
        self._values[name] = value.copy()

    def __contains__(self, name) -> bool:
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def kind(self, name) -> str:
        self[name]
        return self._kinds[name]

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self._values.items()}

    def n_parameters(self) -> int:
        return sum(v.size for v in self._values.values())

    def tensor(self, name) -> Tensor:
        return Tensor(self[name], requires_grad=True, param=name)

    def export(self) -> dict:
        return {k: v.copy() for k, v in self._values.items()}

    def load(self, arrays: dict) -> None:
        unknown = set(arrays) - set(self._values)
        if unknown:
            raise UnknownParameter(f"unknown parameters {sorted(unknown)}")
        for name, value in arrays.items():
            self[name] = value

    def copy(self) -> ParameterStore:
        out = ParameterStore()
        for name, value in self._values.items():
            out._values[name] = value.copy()
            out._kinds[name] = self._kinds[name]
        return out


def glorot_init(store: ParameterStore, seed: int) -> ParameterStore:
    """Initialize every parameter in place from ``seed``.

    Weight matrices (out, in) are uniform in +-sqrt(6 / (in + out)), biases are
    zero and embedding tables are uniform in +-0.1.
    """
    for name in store:
        shape = store[name].shape
        kind = store.kind(name)
        if kind == "bias":
            store[name] = np.zeros(shape)
            continue
        rng = named_rng(seed, name)
        if kind == "embedding":
            store[name] = rng.uniform(-0.1, 0.1, size=shape)
        else:
            fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            store[name] = rng.uniform(-limit, limit, size=shape)
    return store


# --- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParameterStore, grads: dict, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``store`` in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        p = store[name]
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            v = state.v[name] = np.zeros_like(p)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        store[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# --- gradient checking --------------------------------------------------------

def check_gradients(loss_fn: Callable[[ParameterStore], Tensor], store: ParameterStore,
                    epsilon: float = 1e-4, names=None) -> float:
    """Max relative error between backward() and central differences.

    ``loss_fn(store)`` must return a scalar tensor built from
    ``store.tensor(...)`` leaves. The error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    with Tape():
        loss = loss_fn(store)
    analytic = backward(loss, store)
    worst = 0.0
    for name in names or list(store):
        values = store[name]
        flat = values.reshape(-1)
        grad = analytic[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_fn(store).item()
            flat[k] = orig - epsilon
            down = loss_fn(store).item()
            flat[k] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(grad[k] - numeric) / max(1e-8, abs(grad[k]) + abs(numeric))
            worst = max(worst, err)
    return worst
