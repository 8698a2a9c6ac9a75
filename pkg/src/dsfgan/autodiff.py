"""Small reverse-mode automatic differentiation engine over float64 arrays.

Every operation is eager: calling it computes the forward value and records a
node (parents plus a closure producing the parents' gradients) on an implicit
tape. ``Tensor.backward`` walks that tape in reverse topological order and
accumulates gradients into every tensor that requires them.

Shape rules follow numpy broadcasting for the elementwise ops; gradients of
broadcast operands are summed back to the operand shape.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteError

__all__ = [
    "Tensor",
    "Linear",
    "MLP",
    "AdamState",
    "Adam",
    "adam_step",
    "as_tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "softmax",
    "log",
    "exp",
    "sqrt",
    "clamp",
    "mean",
    "sum",
    "concat",
    "detach",
    "gumbel_softmax",
]


class Tensor:
    """A dense float64 array that can take part in a gradient tape.

    Parameters
    ----------
    data : array-like
        Values; copied into a float64 array.
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` receive ``.grad`` after
        ``backward``.
    name : str, optional
        Only used in diagnostics.
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._released = False

    # --- bookkeeping -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._op == "leaf"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    def backward(self, retain_graph=False):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        ``self`` must be a scalar produced by recorded operations. The tape
        is released afterwards unless ``retain_graph`` is set.
        """
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {self.shape}")
        if self._released:
            raise RuntimeError("backward called on a tape that was already released")
        if not self.requires_grad:
            raise RuntimeError("backward called on a tensor with no recorded forward graph")

        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
            if not retain_graph:
                node._released = True
                node._backward = None
                node._parents = ()

    # --- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a constant")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _index(self, index)


def _topological_order(root):
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
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._op = op
    out._released = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --- arithmetic ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    """(n, k) @ (k, m) -> (n, m). 1-d operands are not supported."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


# --- elementwise nonlinearities --------------------------------------------

def relu(a):
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope=0.2):
    scale = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _result(out, (a,), lambda g: (g / a.data,), "log")


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def sqrt(a):
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore"):
            return (g * 0.5 / out,)

    return _result(out, (a,), backward, "sqrt")


def clamp(a, low, high):
    """Clip to [low, high]; gradient passes only where the input was inside."""
    inside = (a.data >= low) & (a.data <= high)
    return _result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clamp")


def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward, "softmax")


# --- reductions and structure ------------------------------------------------

def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    out = np.asarray(a.data.sum(axis=axis))

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward, "sum")


def mean(a, axis=None):
    count = a.data.size if axis is None else a.shape[axis]
    out = np.asarray(a.data.mean(axis=axis))

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _result(out, (a,), backward, "mean")


def concat(tensors, axis=1):
    """Concatenate along ``axis`` (the feature axis by default)."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _result(out, tuple(tensors), backward, "concat")


def _index(a, index):
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, dtype=np.float64), (a,), backward, "index")


def detach(a):
    """Same values, cut from the tape: nothing upstream receives gradient."""
    return Tensor(a.data.copy())


def gumbel_softmax(logits, tau, rng, axis=-1):
    """Relaxed one-hot sample: softmax((logits + Gumbel noise) / tau)."""
    u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=logits.shape)
    noise = -np.log(-np.log(u))
    return softmax(mul(add(logits, noise), 1.0 / tau), axis=axis)


# --- layers ---------------------------------------------------------------

class Linear:
    """Affine layer ``x @ W + b`` with uniform(+-1/sqrt(fan_in)) init."""

    def __init__(self, n_in, n_out, rng):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, size=(1, n_out)), requires_grad=True)

    def __call__(self, x):
        return add(matmul(x, self.weight), self.bias)

    def parameters(self):
        return [self.weight, self.bias]


_ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


class MLP:
    """Stack of ``Linear`` layers with an activation between them.

    The final layer is left linear; callers apply their own output head.
    """

    def __init__(self, sizes, activation, rng, slope=0.2):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least an input and an output size")
        self.sizes = list(sizes)
        self.activation = activation
        self.slope = slope
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x):
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"MLP expects input of width {self.sizes[0]}, got shape {x.shape}")
        act = _ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x, self.slope) if self.activation == "leaky_relu" else act(x)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


# --- optimizer ------------------------------------------------------------

class AdamState:
    """First/second moment buffers and step counter for a list of parameters."""

    def __init__(self, shapes, lr=2e-4, beta1=0.5, beta2=0.9, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]


def adam_step(params, grads, state):
    """One bias-corrected Adam update of ``params`` (numpy arrays, in place).

    Returns the same list for convenience.
    """
    if not (len(params) == len(grads) == len(state.m)):
        raise ValueError("params, grads and optimizer state have different lengths")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch in adam_step: param {p.shape}, grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Adam over a list of leaf tensors; missing gradients count as zero."""

    def __init__(self, params, lr=2e-4, betas=(0.5, 0.9), eps=1e-8):
        self.params = list(params)
        self.state = AdamState([p.shape for p in self.params], lr, betas[0], betas[1], eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)
