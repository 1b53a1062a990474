"""
Null-space classification head.

Per episode: average the support embeddings of every class, form the error
vectors between the reference combinations and those averages, build the
projector onto the null space of the error vectors and score queries by
projected distance to the references.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, DatasetError
from .numeric import (DEFAULT_EPS, DEFAULT_TOL, RngStream, matrix_rank,
                      nullspace_basis, pseudo_inverse)

logger = logging.getLogger(__name__)

LOGIT_MODES = ('projected-euclidean', 'projected-inner-product')
GRADIENT_MODES = ('stop-gradient-projector', 'differentiate-projector')

TensorLike = Union[Tensor, np.ndarray]


@dataclass
class HeadConfig:
    """Settings of the nulling head."""
    dim: int = 32
    n_ref: int = 20
    logit_mode: str = 'projected-euclidean'
    gradient_mode: str = 'stop-gradient-projector'
    normalize: bool = True
    tol: float = DEFAULT_TOL
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.logit_mode not in LOGIT_MODES:
            raise ValueError(f"Unknown logit mode '{self.logit_mode}'. Choose from {LOGIT_MODES}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"Unknown gradient mode '{self.gradient_mode}'. Choose from {GRADIENT_MODES}")

    def check_way(self, way: int) -> bool:
        """Warn (and return False) when no non-trivial null space is guaranteed."""
        if self.dim <= way:
            logger.warning("Embedding dimension %d does not exceed episode way %d; "
                           "the null space may be trivial", self.dim, way)
            return False
        return True


@dataclass
class ReferenceBank:
    """Learned reference vectors, one fixed label per row."""
    refs: Tensor
    labels: np.ndarray = None

    def __post_init__(self):
        if not isinstance(self.refs, Tensor):
            self.refs = Tensor(self.refs, requires_grad=True)
        if self.refs.ndim != 2:
            raise DimensionError(f"reference bank must be a matrix, got {self.refs.shape}")
        if self.labels is None:
            self.labels = np.arange(self.refs.shape[0])
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(np.unique(self.labels)) != self.refs.shape[0]:
            raise ValueError("reference labels must be distinct, one per row")

    @classmethod
    def initialize(cls, n_ref: int, dim: int, rng: RngStream) -> 'ReferenceBank':
        """Random unit-norm rows labelled 0..n_ref-1."""
        refs = rng.normal(size=(n_ref, dim))
        refs /= np.linalg.norm(refs, axis=1, keepdims=True)
        return cls(Tensor(refs, requires_grad=True))

    @property
    def size(self) -> int:
        return self.refs.shape[0]

    @property
    def dim(self) -> int:
        return self.refs.shape[1]

    def rows(self, indices: Optional[Sequence[int]] = None) -> Tensor:
        """Rows bound to episode slots 0..len(indices)-1."""
        if indices is None:
            return self.refs
        if len(indices) > self.size:
            raise DatasetError(f"episode way {len(indices)} exceeds reference count {self.size}")
        return ad.take_rows(self.refs, indices)

    def copy(self) -> 'ReferenceBank':
        return ReferenceBank(Tensor(self.refs.data.copy(), requires_grad=True), self.labels.copy())


@dataclass
class PrototypeSet:
    protos: Tensor
    slots: np.ndarray

    @property
    def way(self) -> int:
        return self.protos.shape[0]


@dataclass
class ErrorMatrix:
    """D x N_c matrix whose column k is the error vector of class k."""
    errs: Tensor
    normalized: bool = True

    @property
    def matrix(self) -> np.ndarray:
        return self.errs.data


@dataclass
class NullProjector:
    projector: Tensor
    rank: int
    basis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.projector.data

    @property
    def dim(self) -> int:
        return self.projector.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.projector.data))


def class_averages(embeddings: TensorLike, slots: Sequence[int],
                   way: Optional[int] = None) -> PrototypeSet:
    """Per-slot mean of support embeddings (rows of ``embeddings``)."""
    embeddings = ad.as_tensor(embeddings)
    slots = np.asarray(slots, dtype=np.int64)
    if embeddings.ndim != 2 or embeddings.shape[0] != slots.shape[0]:
        raise DimensionError(f"{slots.shape[0]} slots for embeddings of shape {embeddings.shape}")
    way = int(slots.max()) + 1 if way is None else way
    if slots.size and (slots.min() < 0 or slots.max() >= way):
        raise DimensionError(f"class slots must lie in [0, {way}), got {slots.min()}..{slots.max()}")
    counts = np.bincount(slots, minlength=way)
    if np.any(counts[:way] == 0):
        empty = np.flatnonzero(counts[:way] == 0).tolist()
        raise DatasetError(f"class slots {empty} have no support embeddings")

    averaging = np.zeros((way, slots.shape[0]))
    averaging[slots, np.arange(slots.shape[0])] = 1.0 / counts[slots]
    return PrototypeSet(protos=ad.matmul(averaging, embeddings), slots=np.arange(way))


def _unit(rows: Tensor, normalize: bool, eps: float) -> Tensor:
    return ad.normalize_rows(rows, eps) if normalize else rows


def _reference_combinations(refs_hat: Tensor) -> Tensor:
    """Row k: (N_c - 1) phi_k - sum_{l != k} phi_l = N_c phi_k - sum_l phi_l."""
    way = refs_hat.shape[0]
    mixing = way * np.eye(way) - np.ones((way, way))
    return ad.matmul(mixing, refs_hat)


def error_vectors(refs: TensorLike, protos: PrototypeSet, normalize: bool = True,
                  eps: float = DEFAULT_EPS) -> ErrorMatrix:
    refs = ad.as_tensor(refs)
    if refs.shape != protos.protos.shape:
        raise DimensionError(f"references {refs.shape} do not match prototypes {protos.protos.shape}")
    refs_hat = _unit(refs, normalize, eps)
    protos_hat = _unit(protos.protos, normalize, eps)
    errs = ad.transpose(_reference_combinations(refs_hat) - protos_hat)
    return ErrorMatrix(errs=errs, normalized=normalize)


def build_projector(errs: ErrorMatrix, tol: float = DEFAULT_TOL,
                    differentiable: bool = False, with_basis: bool = False) -> NullProjector:
    """P = I - V (V^T V)^+ V^T, the projector onto null(V^T).

    With ``differentiable`` the closed form is recorded on the graph so the
    gradient flows through P; otherwise P is an episode constant.
    """
    v = errs.matrix
    dim, way = v.shape
    if dim <= way:
        logger.warning("Projecting %d error vectors in dimension %d; the null space may be trivial",
                       way, dim)
    rank = matrix_rank(v, tol)
    basis = nullspace_basis(v, tol) if with_basis else None

    if differentiable and errs.errs.requires_grad:
        gram_inv = ad.inverse(ad.matmul(ad.transpose(errs.errs), errs.errs), rcond=tol * tol)
        span = ad.matmul(ad.matmul(errs.errs, gram_inv), ad.transpose(errs.errs))
        projector = ad.eye(dim) - 0.5 * (span + ad.transpose(span))
    else:
        span = v @ pseudo_inverse(v, tol)
        projector = Tensor(np.eye(dim) - 0.5 * (span + span.T))
    return NullProjector(projector=projector, rank=rank, basis=basis)


def nulled_logits(queries: TensorLike, refs: TensorLike, proj: NullProjector,
                  mode: str = 'projected-euclidean', normalize: bool = True,
                  eps: float = DEFAULT_EPS) -> Tensor:
    """Scores of every query (rows, unnormalized) against every episode reference.

    Euclidean mode: -(phi_k - g)^T P (phi_k - g); inner-product mode: phi_k P g.
    A single query vector yields a vector of scores.
    """
    queries = ad.as_tensor(queries)
    refs = ad.as_tensor(refs)
    single = queries.ndim == 1
    if single:
        queries = ad.reshape(queries, (1, queries.shape[0]))
    dim = proj.dim
    if queries.shape[1] != dim or refs.ndim != 2 or refs.shape[1] != dim:
        raise DimensionError(f"queries {queries.shape} / references {refs.shape} "
                             f"do not match projector dimension {dim}")

    refs_hat = _unit(refs, normalize, eps)
    projected_refs = ad.matmul(refs_hat, proj.projector)
    cross = ad.matmul(queries, ad.transpose(projected_refs))
    if mode == 'projected-inner-product':
        scores = cross
    elif mode == 'projected-euclidean':
        ref_energy = ad.tensor_sum(projected_refs * refs_hat, axis=1)
        query_energy = ad.tensor_sum(ad.matmul(queries, proj.projector) * queries, axis=1)
        way = refs.shape[0]
        scores = (2.0 * cross
                  - ad.reshape(ref_energy, (1, way))
                  - ad.reshape(query_energy, (queries.shape[0], 1)))
    else:
        raise ValueError(f"Unknown logit mode '{mode}'")
    return ad.reshape(scores, (scores.shape[1],)) if single else scores


def predict(logits: TensorLike) -> np.ndarray:
    """Argmax per row; the lowest slot wins ties."""
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(values, axis=-1)


def alignment_score(refs: TensorLike, protos: PrototypeSet, proj: NullProjector,
                    normalize: bool = True, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Delta_k = [(N_c-1) phi_k - sum_{l!=k} phi_l] P g_k^T for every class."""
    refs_hat = _unit(ad.as_tensor(refs).detach(), normalize, eps).data
    protos_hat = _unit(protos.protos.detach(), normalize, eps).data
    combos = _reference_combinations(Tensor(refs_hat)).data
    return np.einsum('kd,de,ke->k', combos, proj.matrix, protos_hat)


def zero_forcing_residuals(errs: ErrorMatrix, proj: NullProjector) -> np.ndarray:
    """||P v_k|| for every error column."""
    return np.linalg.norm(proj.matrix @ errs.matrix, axis=0)
