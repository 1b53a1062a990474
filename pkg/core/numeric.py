"""
Dense linear algebra kernels shared by every other module.

Matrices are float64 numpy arrays. The arithmetic entry points accept either
plain arrays (returning arrays) or autodiff Tensors (returning Tensors), so
the same call works in evaluation code and inside a training graph.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateInputError, DimensionError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

DEFAULT_TOL = 1e-8
DEFAULT_EPS = 1e-12


def ensure_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise DegenerateInputError(f"{what} contains NaN or Inf")
    return a


def as_matrix(data, rows: Optional[int] = None, cols: Optional[int] = None) -> Matrix:
    """Coerce ``data`` to a finite float64 2-D array, optionally checking its shape."""
    m = np.array(data, dtype=np.float64, ndmin=2)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got {m.ndim} dimensions")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected {cols} columns, got {m.shape[1]}")
    return ensure_finite(m, "matrix")


@dataclass
class RngStream:
    """Seeded random stream.

    Uses numpy's PCG64 bit generator, whose output for a given seed is fixed
    across runs and platforms.
    """
    seed: int
    algorithm: str = "PCG64"
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.algorithm != "PCG64":
            raise ValueError(f"Unsupported generator: {self.algorithm}")
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, offset: int) -> 'RngStream':
        """Independent stream for sub-task ``offset`` (seed + offset)."""
        return RngStream(self.seed + int(offset), self.algorithm)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size)


def matmul(a: Union[Matrix, Tensor], b: Union[Matrix, Tensor]):
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        return ad.matmul(a, b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return ensure_finite(a @ b, "matmul")


def relu(a: Union[Matrix, Tensor]):
    if isinstance(a, Tensor):
        return ad.relu(a)
    return np.maximum(ensure_finite(np.asarray(a, dtype=np.float64), "relu input"), 0.0)


def l2_normalize(v: Union[np.ndarray, Tensor], eps: float = DEFAULT_EPS):
    """Unit-norm copy of a vector (or of every row of a matrix)."""
    if isinstance(v, Tensor):
        return ad.normalize_rows(v, eps)
    return ad.normalize_rows(np.asarray(v, dtype=np.float64), eps).data


def softmax_cross_entropy(logits: Union[np.ndarray, Tensor], label):
    """-log softmax(logits)[label]; mean over rows when ``logits`` is a matrix."""
    loss = ad.softmax_cross_entropy(logits, label)
    return loss if isinstance(logits, Tensor) else loss.item()


def singular_values(a: Matrix) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return np.zeros(0)
    return scipy.linalg.svdvals(a)


def matrix_rank(a: Matrix, tol: float = DEFAULT_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    s = singular_values(a)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def pseudo_inverse(a: Matrix, tol: float = DEFAULT_TOL) -> Matrix:
    """Moore-Penrose pseudo-inverse; singular values below tol * max are dropped."""
    a = as_matrix(a)
    if not a.any():
        return np.zeros((a.shape[1], a.shape[0]))
    return scipy.linalg.pinv(a, atol=0.0, rtol=tol)


def nullspace_basis(v: Matrix, tol: float = DEFAULT_TOL) -> Matrix:
    """Orthonormal basis of {x : v^T x = 0} for a D x m matrix ``v``.

    Uses Householder QR with column pivoting; columns whose pivot falls below
    ``tol`` times the leading pivot count as dependent.
    """
    v = as_matrix(v)
    dim = v.shape[0]
    if v.shape[1] == 0 or not v.any():
        return np.eye(dim)
    q, r, _ = scipy.linalg.qr(v, mode='full', pivoting=True)
    pivots = np.abs(np.diag(r))
    rank = int(np.sum(pivots > tol * pivots[0])) if pivots[0] > 0 else 0
    return q[:, rank:]


def gram_schmidt(columns: Matrix, tol: float = DEFAULT_TOL) -> Matrix:
    """Modified Gram-Schmidt; dependent columns are dropped."""
    columns = as_matrix(columns)
    scale = max(np.linalg.norm(columns, axis=0).max(initial=0.0), 1.0)
    basis = []
    for j in range(columns.shape[1]):
        w = columns[:, j].copy()
        for q in basis:
            w -= (q @ w) * q
        for q in basis:
            w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm > tol * scale:
            basis.append(w / norm)
    if not basis:
        return np.zeros((columns.shape[0], 0))
    return np.column_stack(basis)


def explicit_basis_projector(v: Matrix, tol: float = DEFAULT_TOL) -> Matrix:
    """M M^T for the QR null-space basis M of ``v``."""
    basis = nullspace_basis(v, tol)
    return basis @ basis.T


def is_orthonormal(columns: Matrix, atol: float = 1e-9) -> bool:
    k = columns.shape[1]
    return bool(np.allclose(columns.T @ columns, np.eye(k), atol=atol, rtol=0.0))
