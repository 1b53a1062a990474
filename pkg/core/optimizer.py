"""
Adam over a flat list of parameter tensors, plus the step-decay schedule.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import DimensionError


@dataclass
class AdamState:
    """Moment accumulators aligned with a parameter list."""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> 'AdamState':
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params],
                   beta1=beta1, beta2=beta2, eps=eps)

    def copy(self) -> 'AdamState':
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v],
                         self.step, self.beta1, self.beta2, self.eps)


def adam_update(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray],
                lr: float) -> Sequence[Tensor]:
    """One bias-corrected Adam step, applied in place to every tensor's data."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError(f"{len(params)} parameters, {len(grads)} gradients, "
                             f"{len(state.m)} accumulators")
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise DimensionError(f"parameter {i}: shape {p.shape}, gradient {g.shape}, "
                                 f"accumulator {state.m[i].shape}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * np.square(g)
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def lr_schedule(step: int, config) -> float:
    """Step decay: ``learning_rate * decay_factor ** (step // decay_interval)``.

    ``config`` is any object carrying those three attributes, usually a
    ``TrainConfig``.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    return config.learning_rate * config.decay_factor ** (step // config.decay_interval)
