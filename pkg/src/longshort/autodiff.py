"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

A ``Tensor`` wraps a numpy array and records the operation that produced it,
so a scalar loss can be backpropagated through arbitrary DAGs of the ops
defined here. Design constraints:

* everything is float64 (the closed-form comparisons downstream need it),
* no silent broadcasting: elementwise ops require exactly matching shapes,
  scalars enter via ``scale``/``addc``, and any other shape expansion must go
  through the explicit ``broadcast_to`` op,
* gradients accumulate; call ``zero_grads`` between optimizer steps.

Graph construction and backward are single-threaded; tensors that carry no
backward record are safe to share across threads for read-only evaluation.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "apply", "concat", "zero_grads", "topo_order"]


class ShapeMismatch(ValueError):
    """Raised when operand shapes do not conform for an operation."""


class DomainError(ValueError):
    """Raised when an input leaves an op's mathematical domain (log/sqrt/...)."""


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _check_same_shape(op: str, a: "Tensor", b: "Tensor") -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """A dense float64 array plus an optional backward record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, _op="leaf"):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        # parents are kept only while some input needs a gradient: constants
        # never pin graph memory
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.op = _op

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- elementwise arithmetic (exact shape match) ---------------------------

    def __add__(self, other: "Tensor") -> "Tensor":
        _check_same_shape("add", self, other)
        out = Tensor(self.data + other.data, _parents=(self, other), _op="add")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(g)

        out._backward = backward if out.requires_grad else None
        return out

    def __sub__(self, other: "Tensor") -> "Tensor":
        _check_same_shape("sub", self, other)
        out = Tensor(self.data - other.data, _parents=(self, other), _op="sub")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(-g)

        out._backward = backward if out.requires_grad else None
        return out

    def __mul__(self, other: "Tensor") -> "Tensor":
        _check_same_shape("mul", self, other)
        out = Tensor(self.data * other.data, _parents=(self, other), _op="mul")

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * other.data)
            if other.requires_grad:
                other._accumulate(g * self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def scale(self, s: float) -> "Tensor":
        """Multiply by a python scalar (the only sanctioned broadcast)."""
        s = float(s)
        out = Tensor(self.data * s, _parents=(self,), _op="scale")

        def backward(g):
            self._accumulate(g * s)

        out._backward = backward if out.requires_grad else None
        return out

    def addc(self, c: float) -> "Tensor":
        """Add a python scalar elementwise."""
        out = Tensor(self.data + float(c), _parents=(self,), _op="addc")

        def backward(g):
            self._accumulate(g)

        out._backward = backward if out.requires_grad else None
        return out

    def __neg__(self) -> "Tensor":
        return self.scale(-1.0)

    # -- matmul ---------------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeMismatch(f"matmul: operands must be >=2-d, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
        # leading dims must match exactly unless one operand is a plain matrix
        if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeMismatch(f"matmul: leading dims differ, {a.shape} @ {b.shape}")
        out = Tensor(np.matmul(a, b), _parents=(self, other), _op="matmul")

        def backward(g):
            if self.requires_grad:
                self._accumulate(_sum_to(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape))
            if other.requires_grad:
                other._accumulate(_sum_to(np.matmul(np.swapaxes(a, -1, -2), g), b.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return self.matmul(other)

    # -- unary math -----------------------------------------------------------

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        out = Tensor(y, _parents=(self,), _op="exp")

        def backward(g):
            self._accumulate(g * y)

        out._backward = backward if out.requires_grad else None
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise DomainError("log: input must be strictly positive")
        out = Tensor(np.log(self.data), _parents=(self,), _op="log")

        def backward(g):
            self._accumulate(g / self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def sqrt(self) -> "Tensor":
        if np.any(self.data < 0.0):
            raise DomainError("sqrt: input must be nonnegative")
        y = np.sqrt(self.data)
        out = Tensor(y, _parents=(self,), _op="sqrt")

        def backward(g):
            self._accumulate(g * 0.5 / y)

        out._backward = backward if out.requires_grad else None
        return out

    def power(self, p: float) -> "Tensor":
        p = float(p)
        if not p.is_integer() and np.any(self.data < 0.0):
            raise DomainError(f"power: negative base with non-integer exponent {p}")
        out = Tensor(self.data ** p, _parents=(self,), _op="power")

        def backward(g):
            self._accumulate(g * p * self.data ** (p - 1.0))

        out._backward = backward if out.requires_grad else None
        return out

    def reciprocal(self) -> "Tensor":
        y = 1.0 / self.data
        out = Tensor(y, _parents=(self,), _op="reciprocal")

        def backward(g):
            self._accumulate(-g * y * y)

        out._backward = backward if out.requires_grad else None
        return out

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, _parents=(self,), _op="tanh")

        def backward(g):
            self._accumulate(g * (1.0 - y * y))

        out._backward = backward if out.requires_grad else None
        return out

    # -- reductions -----------------------------------------------------------

    def mean(self) -> "Tensor":
        out = Tensor(self.data.mean(), _parents=(self,), _op="mean")
        inv_n = 1.0 / self.data.size

        def backward(g):
            self._accumulate(np.broadcast_to(g * inv_n, self.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _op="sum")

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(gg, self.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def log_softmax(self) -> "Tensor":
        """Row-wise log-softmax over the last axis; rows exp-sum to 1."""
        x = self.data
        m = x.max(axis=-1, keepdims=True)
        lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
        y = x - lse
        out = Tensor(y, _parents=(self,), _op="log_softmax")

        def backward(g):
            self._accumulate(g - np.exp(y) * g.sum(axis=-1, keepdims=True))

        out._backward = backward if out.requires_grad else None
        return out

    # -- structural ops --------------------------------------------------------

    def masked_fill(self, mask: np.ndarray, value: float) -> "Tensor":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.data.shape:
            raise ShapeMismatch(f"masked_fill: mask shape {mask.shape} vs data {self.data.shape}")
        out = Tensor(np.where(mask, float(value), self.data), _parents=(self,), _op="masked_fill")

        def backward(g):
            self._accumulate(np.where(mask, 0.0, g))

        out._backward = backward if out.requires_grad else None
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], _parents=(self,), _op="slice")

        def backward(g):
            full = np.zeros_like(self.data)
            full[key] = g
            self._accumulate(full)

        out._backward = backward if out.requires_grad else None
        return out

    def transpose(self, *axes: int) -> "Tensor":
        ax = axes if axes else tuple(reversed(range(self.data.ndim)))
        out = Tensor(self.data.transpose(ax), _parents=(self,), _op="transpose")
        inv = np.argsort(ax)

        def backward(g):
            self._accumulate(g.transpose(inv))

        out._backward = backward if out.requires_grad else None
        return out

    def reshape(self, *shape: int) -> "Tensor":
        out = Tensor(self.data.reshape(shape), _parents=(self,), _op="reshape")

        def backward(g):
            self._accumulate(g.reshape(self.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def broadcast_to(self, shape: tuple[int, ...]) -> "Tensor":
        try:
            y = np.broadcast_to(self.data, shape)
        except ValueError as e:
            raise ShapeMismatch(f"broadcast_to: cannot broadcast {self.data.shape} to {shape}") from e
        out = Tensor(y.copy(), _parents=(self,), _op="broadcast")

        def backward(g):
            self._accumulate(_sum_to(g, self.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def embedding(self, ids: np.ndarray) -> "Tensor":
        """Gather rows of a (vocab, dim) table by integer ids."""
        if self.data.ndim != 2:
            raise ShapeMismatch(f"embedding: table must be 2-d, got {self.shape}")
        ids = np.asarray(ids)
        out = Tensor(self.data[ids], _parents=(self,), _op="embedding")

        def backward(g):
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            np.add.at(self.grad, ids, g)

        out._backward = backward if out.requires_grad else None
        return out

    def take_index_last(self, idx: np.ndarray) -> "Tensor":
        """Pick one entry per row along the last axis: out[...] = x[..., idx[...]]."""
        idx = np.asarray(idx)
        if idx.shape != self.data.shape[:-1]:
            raise ShapeMismatch(
                f"take_index_last: index shape {idx.shape} vs data {self.data.shape}"
            )
        picked = np.take_along_axis(self.data, idx[..., None], axis=-1)[..., 0]
        out = Tensor(picked, _parents=(self,), _op="take_index_last")

        def backward(g):
            full = np.zeros_like(self.data)
            np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
            self._accumulate(full)

        out._backward = backward if out.requires_grad else None
        return out

    # -- backward pass ----------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar root; grads accumulate into leaves.

        Interior nodes give up their gradient buffers once propagated, so a
        second backward() on the same root adds the same leaf gradients again
        (calling twice without zeroing doubles them).
        """
        if self.data.size != 1:
            raise ShapeMismatch(f"backward: root must be scalar, got shape {self.shape}")
        order = topo_order(self)
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                node.grad = None


def topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order topological sort of the backward graph."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along an axis; shapes elsewhere must match."""
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    base = tensors[0].data.shape
    ax = axis % len(base)
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(base) or any(s[i] != base[i] for i in range(len(base)) if i != ax):
            raise ShapeMismatch(f"concat: shape {s} incompatible with {base} on axis {axis}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax),
                 _parents=tuple(tensors), _op="concat")
    sizes = [t.data.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=ax)):
            if t.requires_grad:
                t._accumulate(piece)

    out._backward = backward if out.requires_grad else None
    return out


def zero_grads(params) -> None:
    """Clear gradients on an iterable (or dict) of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.zero_grad()


_APPLY_TABLE = {
    "matmul": lambda ins, kw: ins[0].matmul(ins[1]),
    "add": lambda ins, kw: ins[0] + ins[1],
    "sub": lambda ins, kw: ins[0] - ins[1],
    "mul": lambda ins, kw: ins[0] * ins[1],
    "scale": lambda ins, kw: ins[0].scale(kw["s"]),
    "addc": lambda ins, kw: ins[0].addc(kw["c"]),
    "exp": lambda ins, kw: ins[0].exp(),
    "log": lambda ins, kw: ins[0].log(),
    "sqrt": lambda ins, kw: ins[0].sqrt(),
    "power": lambda ins, kw: ins[0].power(kw["p"]),
    "reciprocal": lambda ins, kw: ins[0].reciprocal(),
    "tanh": lambda ins, kw: ins[0].tanh(),
    "mean": lambda ins, kw: ins[0].mean(),
    "sum-over-axis": lambda ins, kw: ins[0].sum(axis=kw.get("axis"),
                                                keepdims=kw.get("keepdims", False)),
    "row-log-softmax": lambda ins, kw: ins[0].log_softmax(),
    "masked-fill": lambda ins, kw: ins[0].masked_fill(kw["mask"], kw["value"]),
    "concat": lambda ins, kw: concat(list(ins), axis=kw.get("axis", -1)),
    "slice": lambda ins, kw: ins[0][kw["key"]],
    "transpose": lambda ins, kw: ins[0].transpose(*kw.get("axes", ())),
    "reshape": lambda ins, kw: ins[0].reshape(*kw["shape"]),
    "broadcast": lambda ins, kw: ins[0].broadcast_to(kw["shape"]),
    "embedding": lambda ins, kw: ins[0].embedding(kw["ids"]),
    "take-index-last": lambda ins, kw: ins[0].take_index_last(kw["idx"]),
}


def apply(kind: str, inputs: list[Tensor], **kwargs) -> Tensor:
    """Uniform dispatch over the op vocabulary (kind name + input tensors)."""
    if kind not in _APPLY_TABLE:
        raise ValueError(f"apply: unknown op kind {kind!r}")
    return _APPLY_TABLE[kind](inputs, kwargs)
