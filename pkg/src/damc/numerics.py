"""Dense 2-D tensors with reverse-mode differentiation, plus SGD with momentum.

Every value is a float64 matrix. Operations on tensors that require gradients
record a node pointing back at their inputs; ``backward`` walks those nodes in
reverse topological order and accumulates ``d loss / d value`` into each
reachable :class:`Parameter`. A recorded graph is single-use.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "GraphError",
    "GradCheckError",
    "OptimizerConfig",
    "as_tensor",
    "matmul",
    "relu",
    "exp",
    "log",
    "abs_",
    "log_softmax",
    "softmax",
    "tsum",
    "tmean",
    "backward",
    "no_grad",
    "zero_grad",
    "sgd_step",
    "lr_at",
    "grad_check",
]


class GraphError(RuntimeError):
    """Raised on an invalid backward request (non-scalar or already consumed)."""


class GradCheckError(ArithmeticError):
    """Raised when the checked function returns a non-finite value."""

    def __init__(self, param_index: int, coord: tuple[int, int], value: float):
        super().__init__(
            f"non-finite function value {value!r} at parameter {param_index}, coordinate {coord}"
        )
        self.param_index = param_index
        self.coord = coord


def _as2d(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ValueError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A row-major float64 matrix, optionally a node of a differentiation graph."""

    __slots__ = ("data", "requires_grad", "_parents", "_backward", "_op", "_consumed")
    __array_priority__ = 100  # numpy defers mixed arithmetic to Tensor

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as2d(data)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
        self._op = ""
        self._consumed = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", op={self._op!r}" if self._op else ""
        return f"{type(self).__name__}(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable tensor with its own gradient accumulator and momentum velocity."""

    __slots__ = ("grad", "velocity", "name")

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.velocity = np.zeros_like(self.data)
        self.name = name


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_recording = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording graph nodes."""
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


def _node(data: np.ndarray, parents: Sequence[Tensor], fn, op: str) -> Tensor:
    out = Tensor(data)
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
        out._op = op
    return out


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                 "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0; np.maximum lets NaN through so it gets reported
    mask = a.data > 0
    return _node(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log of ``max(a, floor)``; the gradient is zero where the floor is active."""
    x = a.data
    active = x > floor
    safe = np.where(active, x, floor)
    return _node(np.log(safe), (a,), lambda g: (np.where(active, g / safe, 0.0),), "log")


def abs_(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (g * s,), "abs")


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax with max subtraction."""
    z = a.data - a.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(out)
    return _node(out, (a,), lambda g: (g - p * g.sum(axis=1, keepdims=True),), "log_softmax")


def softmax(a: Tensor) -> Tensor:
    return exp(log_softmax(a))


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum keeping two dimensions; ``axis=None`` reduces to 1x1."""
    shape = a.shape
    if axis is None:
        out = np.array([[a.data.sum()]])
    else:
        out = a.data.sum(axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


# ---------------------------------------------------------------- backward


def _topo(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d value`` into the ``grad`` of every reachable Parameter.

    The recorded graph is released afterwards; a second call on the same
    recording raises :class:`GraphError`.
    """
    if loss.shape != (1, 1):
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("graph already consumed by a previous backward pass; re-record it")
    if not loss.requires_grad:
        loss._consumed = True
        return
    order = _topo(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if isinstance(node, Parameter):
            if g is not None:
                node.grad += g
            continue
        if node._backward is None:
            if node._parents:
                raise GraphError("graph already consumed by a previous backward pass; re-record it")
            continue
        if g is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    # parameters stay reusable as leaves of future graphs
    for node in order:
        if not isinstance(node, Parameter):
            node._backward = None
            node._consumed = True


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


# ---------------------------------------------------------------- optimizer


@dataclass(frozen=True)
class OptimizerConfig:
    eta0: float
    momentum: float = 0.9
    weight_decay: float = 5.0e-4
    max_iter: int = 0  # filled in by the training loop when left at 0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")


def lr_at(iteration: int, config: OptimizerConfig) -> float:
    """Annealed learning rate ``eta0 * (1 + 10 * iter / max_iter) ** -0.75``."""
    if config.max_iter < 1:
        raise ValueError("max_iter must be >= 1 to evaluate the schedule")
    if not 0 <= iteration <= config.max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {config.max_iter}]")
    if iteration == 0:
        return config.eta0
    return config.eta0 * (1.0 + 10.0 * iteration / config.max_iter) ** -0.75


def sgd_step(params: Iterable[Parameter], lr: float, config: OptimizerConfig) -> None:
    """velocity <- momentum * velocity + grad + wd * value; value <- value - lr * velocity.

    Gradients are left untouched.
    """
    for p in params:
        if p.grad.shape != p.data.shape or p.velocity.shape != p.data.shape:
            raise RuntimeError(
                f"parameter {p.name!r}: grad {p.grad.shape} / velocity {p.velocity.shape} "
                f"do not match value {p.data.shape}"
            )
        p.velocity *= config.momentum
        p.velocity += p.grad
        if config.weight_decay:
            p.velocity += config.weight_decay * p.data
        p.data -= lr * p.velocity


# ---------------------------------------------------------------- checking


def grad_check(fn: Callable[[], Tensor], params: Sequence[Parameter], step: float = 1e-5) -> float:
    """Largest ``|analytic - central difference| / max(1, |analytic|)`` over all coordinates.

    ``fn`` must rebuild its graph from the current parameter values on each call.
    Existing gradients are overwritten.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    params = list(params)
    zero_grad(params)
    loss = fn()
    if not np.isfinite(loss.item()):
        raise GradCheckError(-1, (-1, -1), loss.item())
    backward(loss)
    worst = 0.0
    for pi, p in enumerate(params):
        analytic = p.grad.copy()
        for idx in np.ndindex(*p.shape):
            orig = p.data[idx]
            p.data[idx] = orig + step
            up = fn().item()
            p.data[idx] = orig - step
            down = fn().item()
            p.data[idx] = orig
            for v in (up, down):
                if not np.isfinite(v):
                    raise GradCheckError(pi, idx, v)
            numeric = (up - down) / (2 * step)
            a = analytic[idx]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    zero_grad(params)
    return worst
