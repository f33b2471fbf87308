from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .tensor import NamedTensors, NonFiniteError


def global_norm(grads: NamedTensors) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))


def clip_by_global_norm(grads: NamedTensors, clip_norm: float) -> Tuple[NamedTensors, float]:
    """Rescales all gradients together so their joint norm is at most clip_norm.

    Returns the clipped gradients and the norm before clipping.
    """
    if clip_norm <= 0:
        raise ValueError(f"clip norm must be positive, got {clip_norm}")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite gradient norm")
    if norm <= clip_norm:
        return dict(grads), norm
    scale = clip_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


@dataclass
class AdamState:
    """Moments per tensor. Each tensor keeps its own step count, so a
    tensor that sits out a step keeps its moments untouched."""
    m: NamedTensors = field(default_factory=dict)
    v: NamedTensors = field(default_factory=dict)
    t: Dict[str, int] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @property
    def steps(self) -> int:
        return max(self.t.values(), default=0)


def adam_step(params: NamedTensors, grads: NamedTensors, state: AdamState,
              lr: float) -> Tuple[NamedTensors, AdamState]:
    """One Adam update for every tensor named in grads; other tensors pass through unchanged."""
    new_params = dict(params)
    m, v, t = dict(state.m), dict(state.v), dict(state.t)
    b1, b2 = state.beta1, state.beta2

    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        step = t.get(name, 0) + 1
        m_new = b1 * m.get(name, np.zeros_like(param)) + (1 - b1) * grad
        v_new = b2 * v.get(name, np.zeros_like(param)) + (1 - b2) * grad * grad
        m_hat = m_new / (1 - b1 ** step)
        v_hat = v_new / (1 - b2 ** step)
        update = lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(update)):
            raise NonFiniteError(f"non-finite Adam update for {name}")
        new_params[name] = param - update
        m[name], v[name], t[name] = m_new, v_new, step

    return new_params, AdamState(m, v, t, b1, b2, state.eps)
