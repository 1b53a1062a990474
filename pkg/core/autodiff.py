"""
Minimal reverse-mode differentiation over float64 numpy arrays.

A ``Tensor`` is one node of the recorded graph: its value, the nodes it was
computed from and the closed-form adjoint of the primitive that produced it.
Only first-order gradients are supported.
"""

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import DegenerateInputError, DimensionError, LabelError


ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Differentiable value node.

    Leaves are created directly (``Tensor(data, requires_grad=True)`` for
    parameters, ``requires_grad=False`` for constants); interior nodes are
    created by the primitives below and remember their parents only when some
    parent requires a gradient.
    """

    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 parents: Tuple['Tensor', ...] = (),
                 backward_fn: Optional[BackwardFn] = None, op: str = 'leaf'):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.grad: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    @property
    def T(self) -> 'Tensor':
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        """Same value, cut from the graph (treated as a constant)."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # Operator overloads
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None) -> 'Tensor':
        count = self.size if axis is None else self.shape[axis]
        return tensor_sum(self, axis=axis) / count

    def reshape(self, *shape) -> 'Tensor':
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def relu(self) -> 'Tensor':
        return relu(self)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap plain arrays as constant leaves; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _require_finite(data: np.ndarray, what: str):
    if not np.all(np.isfinite(data)):
        raise DegenerateInputError(f"{what} contains NaN or Inf")


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: BackwardFn,
          op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents,
                      backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from e

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward_fn, 'add')


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise DimensionError(f"cannot subtract shapes {a.shape} and {b.shape}") from e

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), backward_fn, 'sub')


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from e

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), backward_fn, 'mul')


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul expects vectors or matrices, got {a.shape} and {b.shape}")
    a2 = a.data if a.ndim == 2 else a.data[None, :]
    b2 = b.data if b.ndim == 2 else b.data[:, None]
    if a2.shape[1] != b2.shape[0]:
        raise DimensionError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward_fn(g):
        g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
        grad_a = (g2 @ b2.T).reshape(a.shape)
        grad_b = (a2.T @ g2).reshape(b.shape)
        return grad_a, grad_b

    return _make(out, (a, b), backward_fn, 'matmul')


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")

    def backward_fn(g):
        return (g.T,)

    return _make(a.data.T.copy(), (a,), backward_fn, 'transpose')


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), backward_fn, 'reshape')


def tensor_sum(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward_fn, 'sum')


def relu(a) -> Tensor:
    a = as_tensor(a)
    _require_finite(a.data, "relu input")
    mask = a.data > 0

    def backward_fn(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0.0), (a,), backward_fn, 'relu')


def take_rows(a, indices: Sequence[int]) -> Tensor:
    """Gather rows of a matrix (or entries of a vector)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise DimensionError(f"row index out of range for {a.shape[0]} rows")

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return _make(a.data[idx], (a,), backward_fn, 'take_rows')


def normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Scale every row (or a single vector) to unit Euclidean norm."""
    a = as_tensor(a)
    norms = np.linalg.norm(a.data, axis=-1, keepdims=True)
    if np.any(norms <= eps) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError(
            f"cannot normalize a vector with norm <= {eps:g}")
    out = a.data / norms

    def backward_fn(g):
        radial = np.sum(out * g, axis=-1, keepdims=True)
        return ((g - out * radial) / norms,)

    return _make(out, (a,), backward_fn, 'normalize')


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over rows, max-subtracted."""
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"logits must be a vector or matrix, got {logits.shape}")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape[0] != z.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for {z.shape[0]} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise LabelError(f"label out of range for {z.shape[1]} classes")
    _require_finite(z, "logits")

    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = log_norm - shifted[rows, labels]
    probs = np.exp(shifted - log_norm[:, None])

    def backward_fn(g):
        grad = probs.copy()
        grad[rows, labels] -= 1.0
        grad *= float(g) / z.shape[0]
        return (grad[0] if single else grad,)

    _require_finite(losses, "cross-entropy loss")
    return _make(np.asarray(losses.mean()), (logits,), backward_fn, 'softmax_xent')


def inverse(a, rcond: float = 1e-8) -> Tensor:
    """Pseudo-inverse of a square matrix, differentiated as a true inverse.

    The adjoint is only exact where ``a`` is invertible.
    """
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"inverse expects a square matrix, got {a.shape}")
    inv = scipy.linalg.pinv(a.data, atol=0.0, rtol=rcond)

    def backward_fn(g):
        return (-inv.T @ g @ inv.T,)

    return _make(inv, (a,), backward_fn, 'inverse')


def eye(n: int) -> Tensor:
    return Tensor(np.eye(n))


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order of the graph below ``root`` (parents before children)."""
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
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor, params: Optional[Iterable[Tensor]] = None):
    """Propagate d(root)/d(node) through the graph.

    Every reached leaf gets its ``grad`` attribute overwritten. When
    ``params`` is given, a list of gradients aligned with it is returned,
    with zeros for parameters that do not influence ``root``; otherwise a
    dict keyed by leaf tensor is returned.
    """
    if root.size != 1:
        raise DimensionError(f"backward needs a scalar root, got shape {root.shape}")

    grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    reached: Dict[Tensor, np.ndarray] = {}
    for node in reversed(_topological_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                node.grad = g
                reached[node] = g
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    if params is None:
        return reached
    return [reached[p] if p in reached else np.zeros_like(p.data) for p in params]


def finite_difference_grad(fn: Callable[[List[np.ndarray]], float],
                           arrays: Sequence[np.ndarray],
                           step: float = 1e-5) -> List[np.ndarray]:
    """Central-difference gradient of a scalar function of several arrays."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for array in arrays:
        grad = np.zeros_like(array)
        flat = array.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = fn(arrays)
            flat[i] = original - step
            lower = fn(arrays)
            flat[i] = original
            grad_flat[i] = (upper - lower) / (2.0 * step)
        grads.append(grad)
    return grads
