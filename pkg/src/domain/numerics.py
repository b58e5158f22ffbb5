"""
Dense float64 tensors with taped reverse-mode differentiation.

Each operation records its parents and a closure that pushes the output
gradient back to them. `Tensor.backward` walks the tape in reverse
topological order, visiting every node once. Only first-order derivatives
are supported.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections.abc import Callable, Iterator, Sequence
from typing import Any

import numpy as np
from scipy.special import expit

from src.domain.exceptions import ContractError, DimensionError, DomainError

_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording inside the block (evaluation rollouts)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sums a broadcast gradient back down to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    A float64 array node of the computation graph.

    Attributes:
        data: Row-major values; always float64.
        grad: Accumulated gradient of the last backward pass (None until reached).
        requires_grad: Whether gradients are tracked through this node.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")
    __array_priority__ = 100.0

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        _parents: tuple[Tensor, ...] = (),
        _op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Callable[[], None] | None = None
        self._op = _op

    # --- graph plumbing ---

    @staticmethod
    def _result(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
        track = _GRAD_ENABLED.get() and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=track, _parents=parents if track else (), _op=op)

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulates d(self)/d(node) into every reachable node's `grad`."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = self._topological_order()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # --- properties ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def T(self) -> Tensor:
        out = Tensor._result(self.data.T.copy(), (self,), "transpose")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad.T)
            out._backward = _backward
        return out

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # --- elementwise arithmetic ---

    def __add__(self, other: Any) -> Tensor:
        other = _as_tensor(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad)
                other._accumulate(out.grad)
            out._backward = _backward
        return out

    def __radd__(self, other: Any) -> Tensor:
        return _as_tensor(other) + self

    def __sub__(self, other: Any) -> Tensor:
        other = _as_tensor(other)
        out = Tensor._result(self.data - other.data, (self, other), "sub")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad)
                other._accumulate(-out.grad)
            out._backward = _backward
        return out

    def __rsub__(self, other: Any) -> Tensor:
        return _as_tensor(other) - self

    def __mul__(self, other: Any) -> Tensor:
        other = _as_tensor(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * other.data)
                other._accumulate(out.grad * self.data)
            out._backward = _backward
        return out

    def __rmul__(self, other: Any) -> Tensor:
        return _as_tensor(other) * self

    def __truediv__(self, other: Any) -> Tensor:
        other = _as_tensor(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad / other.data)
                other._accumulate(-out.grad * self.data / other.data**2)
            out._backward = _backward
        return out

    def __rtruediv__(self, other: Any) -> Tensor:
        return _as_tensor(other) / self

    def __neg__(self) -> Tensor:
        out = Tensor._result(-self.data, (self,), "neg")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(-out.grad)
            out._backward = _backward
        return out

    def __pow__(self, exponent: float) -> Tensor:
        if not isinstance(exponent, (int, float)):
            raise DomainError(f"Only constant exponents are supported, got {type(exponent).__name__}")
        out = Tensor._result(self.data**exponent, (self,), f"pow{exponent}")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * exponent * self.data ** (exponent - 1))
            out._backward = _backward
        return out

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, _as_tensor(other))

    def __getitem__(self, index: Any) -> Tensor:
        out = Tensor._result(np.array(self.data[index], copy=True), (self,), "getitem")
        if out.requires_grad:
            def _backward() -> None:
                full = np.zeros_like(self.data)
                np.add.at(full, index, out.grad)
                self._accumulate(full)
            out._backward = _backward
        return out

    # --- unary functions ---

    def exp(self) -> Tensor:
        out = Tensor._result(np.exp(self.data), (self,), "exp")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * out.data)
            out._backward = _backward
        return out

    def log(self) -> Tensor:
        if np.any(self.data <= 0):
            raise DomainError("log() of a non-positive value")
        out = Tensor._result(np.log(self.data), (self,), "log")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad / self.data)
            out._backward = _backward
        return out

    def tanh(self) -> Tensor:
        out = Tensor._result(np.tanh(self.data), (self,), "tanh")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * (1.0 - out.data**2))
            out._backward = _backward
        return out

    def sigmoid(self) -> Tensor:
        out = Tensor._result(expit(self.data), (self,), "sigmoid")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * out.data * (1.0 - out.data))
            out._backward = _backward
        return out

    def softplus(self) -> Tensor:
        """log(1 + exp(x)), finite for any finite x."""
        out = Tensor._result(np.logaddexp(0.0, self.data), (self,), "softplus")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad * expit(self.data))
            out._backward = _backward
        return out

    def clamp(self, low: float, high: float) -> Tensor:
        out = Tensor._result(np.clip(self.data, low, high), (self,), "clamp")
        if out.requires_grad:
            inside = (self.data >= low) & (self.data <= high)

            def _backward() -> None:
                self._accumulate(out.grad * inside)
            out._backward = _backward
        return out

    # --- reductions and reshaping ---

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        out = Tensor._result(np.sum(self.data, axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            def _backward() -> None:
                grad = out.grad
                if axis is not None and not keepdims:
                    grad = np.expand_dims(grad, axis)
                self._accumulate(np.broadcast_to(grad, self.data.shape))
            out._backward = _backward
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, shape: tuple[int, ...]) -> Tensor:
        out = Tensor._result(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            def _backward() -> None:
                self._accumulate(out.grad.reshape(self.data.shape))
            out._backward = _backward
        return out


class Parameter(Tensor):
    """
    A learnable leaf tensor.

    The gradient always exists and has the value's shape; optimizers zero it
    between updates.
    """

    __slots__ = ("name",)

    def __init__(self, name: str, value: Any):
        super().__init__(np.ascontiguousarray(np.array(value, dtype=np.float64, copy=True)), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def _as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# --- free functions ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D and 2-D operands (vectors act as rows/columns)."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor._result(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _backward() -> None:
            g = out.grad
            if a.ndim == 2 and b.ndim == 2:
                a._accumulate(g @ b.data.T)
                b._accumulate(a.data.T @ g)
            elif a.ndim == 1 and b.ndim == 2:
                a._accumulate(b.data @ g)
                b._accumulate(np.outer(a.data, g))
            elif a.ndim == 2 and b.ndim == 1:
                a._accumulate(np.outer(g, b.data))
                b._accumulate(a.data.T @ g)
            else:
                a._accumulate(g * b.data)
                b._accumulate(g * a.data)
        out._backward = _backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def softmax(x: Tensor, temperature: float = 1.0, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted) along `axis`."""
    if x.size == 0:
        raise DomainError("softmax of an empty tensor")
    if temperature <= 0:
        raise DomainError(f"softmax temperature must be positive, got {temperature}")
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._result(s, (x,), "softmax")
    if out.requires_grad:
        def _backward() -> None:
            g = out.grad
            x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)) / temperature)
        out._backward = _backward
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.size == 0:
        raise DomainError("log_softmax of an empty tensor")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    result = z - lse
    out = Tensor._result(result, (x,), "log_softmax")
    if out.requires_grad:
        probs = np.exp(result)

        def _backward() -> None:
            g = out.grad
            x._accumulate(g - probs * g.sum(axis=axis, keepdims=True))
        out._backward = _backward
    return out


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalises over the last axis, then applies the optional affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    normed = Tensor._result(xhat, (x,), "layer_norm")
    if normed.requires_grad:
        def _backward() -> None:
            g = normed.grad
            x._accumulate(
                inv_std * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True))
            )
        normed._backward = _backward
    out = normed
    if gamma is not None:
        out = out * gamma
    if beta is not None:
        out = out + beta
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    parts = [t.data for t in tensors]
    try:
        data = np.concatenate(parts, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat shape mismatch: {[p.shape for p in parts]}") from exc
    out = Tensor._result(data, tuple(tensors), "concat")
    if out.requires_grad:
        splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

        def _backward() -> None:
            for tensor, piece in zip(tensors, np.split(out.grad, splits, axis=axis)):
                tensor._accumulate(piece)
        out._backward = _backward
    return out


def scatter_rows(base: Tensor, rows: Tensor, index: Sequence[int]) -> Tensor:
    """
    Copy of `base` whose rows at `index` are replaced by `rows`.

    Rows outside `index` are copied from `base` bit for bit.
    """
    idx = np.asarray(index, dtype=np.int64)
    n_rows = base.shape[0]
    if idx.ndim != 1 or len(idx) != rows.shape[0]:
        raise ContractError(f"scatter needs one row per index: {rows.shape[0]} rows for {len(idx)} indices")
    if len(idx) and (idx.min() < 0 or idx.max() >= n_rows):
        raise ContractError(f"scatter index out of range [0, {n_rows}): {idx.tolist()}")
    if len(np.unique(idx)) != len(idx):
        raise ContractError(f"scatter indices must be distinct: {idx.tolist()}")
    data = base.data.copy()
    data[idx] = rows.data
    out = Tensor._result(data, (base, rows), "scatter_rows")
    if out.requires_grad:
        def _backward() -> None:
            g_base = out.grad.copy()
            g_base[idx] = 0.0
            base._accumulate(g_base)
            rows._accumulate(out.grad[idx])
        out._backward = _backward
    return out


def straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    """Forward value is exactly `hard`; the backward pass treats it as `soft`."""
    hard = np.asarray(hard, dtype=np.float64)
    if hard.shape != soft.shape:
        raise DimensionError(f"straight_through shape mismatch: {hard.shape} vs {soft.shape}")
    out = Tensor._result(hard.copy(), (soft,), "straight_through")
    if out.requires_grad:
        def _backward() -> None:
            soft._accumulate(out.grad)
        out._backward = _backward
    return out


def backward(loss: Tensor) -> None:
    loss.backward()


def zero_grad(parameters: Sequence[Parameter]) -> None:
    for parameter in parameters:
        parameter.zero_grad()
