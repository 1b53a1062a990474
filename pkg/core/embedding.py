"""
Embedding network: a stack of affine layers with ReLU between them.

The final layer stays linear so embeddings can take either sign in every
coordinate.
"""

from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .numeric import RngStream


@dataclass
class EmbeddingConfig:
    """Layer layout; ``widths[-1]`` is the embedding dimension D."""
    input_dim: int = 16
    widths: List[int] = field(default_factory=lambda: [64, 32])
    activation: str = 'relu'
    seed: int = 0

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if not self.widths:
            raise ValueError("Embedding needs at least one layer")
        if self.input_dim < 1 or any(w < 1 for w in self.widths):
            raise ValueError(f"Invalid layer sizes: input {self.input_dim}, widths {self.widths}")
        if self.activation != 'relu':
            raise ValueError(f"Unsupported activation: {self.activation}")

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def layer_shapes(self) -> List[tuple]:
        fan_in = [self.input_dim] + self.widths[:-1]
        return list(zip(fan_in, self.widths))


@dataclass
class EmbeddingParams:
    weights: List[Tensor]
    biases: List[Tensor]

    def parameters(self) -> List[Tensor]:
        """Flat list, layer by layer: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy(self) -> 'EmbeddingParams':
        return EmbeddingParams(
            weights=[Tensor(w.data.copy(), requires_grad=True) for w in self.weights],
            biases=[Tensor(b.data.copy(), requires_grad=True) for b in self.biases],
        )


def init_params(config: EmbeddingConfig, rng: RngStream) -> EmbeddingParams:
    """Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return EmbeddingParams(weights=weights, biases=biases)


def embed_batch(params: EmbeddingParams, inputs: Union[np.ndarray, Tensor]) -> Tensor:
    """Forward pass for a B x input_dim batch."""
    h = ad.as_tensor(inputs)
    if h.ndim != 2 or h.shape[1] != params.weights[0].shape[0]:
        raise DimensionError(f"inputs of shape {h.shape} do not match input dimension "
                             f"{params.weights[0].shape[0]}")
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = ad.matmul(h, w) + b
        if i < last:
            h = ad.relu(h)
    return h
