from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from vchgcl.core.errors import ContractError
from vchgcl.tensor import ParameterStore


@dataclass
class OptimizerState:
    """Momentum buffers keyed by parameter name."""
    lr: float = 1e-3
    momentum: float = 0.9
    step: int = 0
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    max_grad_norm: Optional[float] = None


def clip_scale(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> float:
    """Factor that brings the global L2 norm of ``grads`` down to ``max_norm``."""
    if max_norm is None:
        return 1.0
    if max_norm <= 0:
        raise ContractError(f"max_grad_norm must be positive, got {max_norm}")
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total <= max_norm:
        return 1.0
    return max_norm / total


def sgd_momentum_update(store: ParameterStore, state: OptimizerState) -> OptimizerState:
    """
    One step of heavy-ball SGD: v <- mu v + g, p <- p - lr v.

    Parameters without a gradient are treated as having a zero gradient. With
    ``max_grad_norm`` set, g is first rescaled so its global norm is at most that
    value; the stored gradients are left untouched.
    """
    if state.lr < 0:
        raise ContractError(f"learning rate must be non-negative, got {state.lr}")
    grads = {param.name: param.tensor.grad if param.tensor.grad is not None
             else np.zeros_like(param.tensor.data) for param in store}
    scale = clip_scale(grads, state.max_grad_norm)
    velocity = {}
    for param in store:
        grad = grads[param.name] * scale
        previous = state.velocity.get(param.name)
        v = grad.copy() if previous is None else state.momentum * previous + grad
        param.tensor.data = param.tensor.data - state.lr * v
        velocity[param.name] = v
    return OptimizerState(lr=state.lr, momentum=state.momentum, step=state.step + 1, velocity=velocity,
                          max_grad_norm=state.max_grad_norm)
