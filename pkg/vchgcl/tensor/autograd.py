"""
Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation records its parents and a closure mapping the output gradient to
one gradient per parent. ``Tensor.backward`` walks the recorded graph in reverse
topological order and accumulates into ``.grad`` of every tensor that requires it.
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from vchgcl.core.errors import ContractError, DegenerateInputError, NumericError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node of the computation graph holding a float64 array."""

    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: Tuple["Tensor", ...], backward: BackwardFn) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        # untracked results keep no tape
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -------------------------------------------------------------- arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._result(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor._result(self.data - other.data, (self, other), backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._result(a * b, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __truediv__(self, other: Union[float, int, np.ndarray]) -> "Tensor":
        if isinstance(other, Tensor):
            raise ContractError("division is only defined by constants; compose with exp/log otherwise")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # ----------------------------------------------------------- restructuring

    def transpose(self) -> "Tensor":
        """Swap the last two axes."""
        if self.ndim < 2:
            raise ShapeError("transpose needs at least two axes", self.shape)
        return Tensor._result(np.swapaxes(self.data, -1, -2), (self,),
                              lambda g: (np.swapaxes(g, -1, -2),))

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            data = self.data.reshape(shape)
        except ValueError:
            raise ShapeError("cannot reshape", original, shape) from None
        return Tensor._result(data, (self,), lambda g: (g.reshape(original),))

    def __getitem__(self, key) -> "Tensor":
        original = self.shape

        def backward(g):
            full = np.zeros(original)
            np.add.at(full, key, g)
            return (full,)

        return Tensor._result(np.array(self.data[key], dtype=np.float64), (self,), backward)

    # -------------------------------------------------------------- reductions

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        original = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, original).copy(),)

        return Tensor._result(np.array(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ---------------------------------------------------------- elementwise

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        return Tensor._result(y, (self,), lambda g: (g * (1.0 - y * y),))

    def sigmoid(self) -> "Tensor":
        y = expit(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y * (1.0 - y),))

    def relu(self) -> "Tensor":
        mask = (self.data > 0).astype(np.float64)
        return Tensor._result(self.data * mask, (self,), lambda g: (g * mask,))

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y,))

    def log(self) -> "Tensor":
        x = self.data
        return Tensor._result(np.log(x), (self,), lambda g: (g / x,))

    def softmax(self, axis: int = -1) -> "Tensor":
        return softmax(self, axis=axis)

    # --------------------------------------------------------------- autodiff

    def backward(self) -> None:
        """Accumulate d(self)/d(t) into ``t.grad`` for every reachable tracked tensor."""
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward called on a tensor that is not tracked")

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend((parent, False) for parent in node._parents if id(parent) not in visited)
    return order


def tape_size(root: Tensor) -> int:
    """Number of graph nodes reachable from ``root``."""
    return len(_topological_order(root))


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# ----------------------------------------------------------------- operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul dimension mismatch", a.shape, b.shape)
    x, y = a.data, b.data

    def backward(g):
        return (_unbroadcast(np.matmul(g, np.swapaxes(y, -1, -2)), x.shape),
                _unbroadcast(np.matmul(np.swapaxes(x, -1, -2), g), y.shape))

    return Tensor._result(np.matmul(x, y), (a, b), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat shape mismatch", *[t.shape for t in parts]) from None
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(data, tuple(parts), backward)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    x, shape = as_tensor(x), tuple(shape)
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError("cannot broadcast", x.shape, shape) from None
    original = x.shape
    return Tensor._result(data, (x,), lambda g: (_unbroadcast(g, original),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise ContractError("softmax of an empty tensor")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax received non-finite logits")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._result(s, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and offset by ``shift``."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    n = x.shape[-1]
    if gain.shape != (n,) or shift.shape != (n,):
        raise ShapeError("layer_norm affine parameters must match the last axis", x.shape, gain.shape)
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = gain.data * xhat + shift.data

    def backward(g):
        g_hat = g * gain.data
        dx = inv_std * (g_hat - g_hat.mean(axis=-1, keepdims=True)
                        - xhat * (g_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._result(out, (x, gain, shift), backward)


def cosine_similarity(x: Tensor, y: Tensor) -> Tensor:
    """x.y / (|x| |y|) as a scalar tensor."""
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError("cosine_similarity operands differ", x.shape, y.shape)
    if not np.any(x.data) or not np.any(y.data):
        raise DegenerateInputError("cosine_similarity of a zero-norm vector")
    dot = (x * y).sum()
    log_norms = (x * x).sum().log() + (y * y).sum().log()
    return dot * (log_norms * -0.5).exp()


def activation(x: Tensor, kind: str) -> Tensor:
    """Apply a named nonlinearity."""
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "relu":
        return x.relu()
    if kind == "identity":
        return x
    raise ContractError(f"unknown activation {kind!r}")


def graph_leaves(root: Tensor) -> List[Tensor]:
    """Tracked tensors reachable from ``root`` that were not produced by an operation."""
    return [node for node in _topological_order(root) if node.requires_grad and node._backward is None]
