"""Soft-attention pooling, visual enhancement MLP and the GRU sequence encoder."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from vchgcl.core.errors import ContractError, ShapeError
from vchgcl.model.layers import MLPParams, linear, mlp_forward
from vchgcl.tensor import ParameterStore, Tensor, activation, as_tensor, concat, matmul, softmax


@dataclass
class AttentionParams:
    W_a: Tensor  # [d x 1]
    b_a: Tensor  # [1]


@dataclass
class AttentionResult:
    pooled: Tensor
    weights: Tensor


@dataclass
class SequenceBatch:
    """Ordered frame-level or token-level features, one step per row; leading axes are independent sequences."""
    steps: Tensor

    def __post_init__(self):
        self.steps = as_tensor(self.steps)
        if self.steps.ndim < 2 or self.steps.shape[-2] < 1:
            raise ShapeError("a sequence needs shape [..., T x d_in] with T >= 1", self.steps.shape)

    def __len__(self) -> int:
        return self.steps.shape[-2]


@dataclass
class GRUParams:
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.U_z.shape[0]


def init_attention_params(store: ParameterStore, prefix: str, dim: int) -> AttentionParams:
    return AttentionParams(W_a=store.create(f"{prefix}.W_a", (dim, 1)),
                           b_a=store.create(f"{prefix}.b_a", (1,), fan_in=dim))


def init_gru_params(store: ParameterStore, prefix: str, input_size: int, hidden_size: int) -> GRUParams:
    tensors = {}
    for gate in ("z", "r", "h"):
        tensors[f"W_{gate}"] = store.create(f"{prefix}.W_{gate}", (input_size, hidden_size))
        tensors[f"U_{gate}"] = store.create(f"{prefix}.U_{gate}", (hidden_size, hidden_size))
        tensors[f"b_{gate}"] = store.create(f"{prefix}.b_{gate}", (hidden_size,), fan_in=hidden_size)
    return GRUParams(**tensors)


def soft_attention(features: Tensor, W_a: Tensor, b_a: Tensor,
                   activation_kind: str = "tanh") -> AttentionResult:
    """
    Pool the rows of ``features`` with learned scalar scores.

    Scores are ``act(features W_a + b_a)``, normalized by a softmax over the rows.
    Leading axes, if any, are treated as independent sets.

    Args:
        features: [..., N x d]
        W_a: [d x 1] score weights
        b_a: [1] score bias
        activation_kind: Nonlinearity applied to the scores before the softmax

    Returns:
        AttentionResult with pooled [..., d] and weights [..., N]
    """
    features = as_tensor(features)
    if features.ndim < 2 or features.shape[-2] < 1:
        raise ShapeError("soft attention needs at least one row", features.shape)
    lead, n, d = features.shape[:-2], features.shape[-2], features.shape[-1]
    logits = activation(linear(features, W_a, b_a), activation_kind).reshape(*lead, n)
    weights = softmax(logits, axis=-1)
    pooled = matmul(weights.reshape(*lead, 1, n), features).reshape(*lead, d)
    return AttentionResult(pooled=pooled, weights=weights)


def enhance_visual(pooled_vco: Tensor, f_ev: Tensor, mlp: MLPParams,
                   hidden_activation: str = "tanh") -> Tensor:
    """MLP over [pooled commonsense object feature : enhanced visual feature]."""
    pooled_vco, f_ev = as_tensor(pooled_vco), as_tensor(f_ev)
    if pooled_vco.ndim != f_ev.ndim:
        raise ShapeError("pooled and enhanced features need matching rank", pooled_vco.shape, f_ev.shape)
    joined = concat([pooled_vco, f_ev], axis=-1)
    if joined.shape[-1] != mlp.in_dim:
        raise ShapeError("enhance MLP input width mismatch", joined.shape, (mlp.in_dim,))
    return mlp_forward(joined, mlp, hidden_activation)


def gru_step(x: Tensor, h: Tensor, params: GRUParams) -> Tensor:
    z = (matmul(x, params.W_z) + matmul(h, params.U_z) + params.b_z).sigmoid()
    r = (matmul(x, params.W_r) + matmul(h, params.U_r) + params.b_r).sigmoid()
    candidate = (matmul(x, params.W_h) + matmul(r * h, params.U_h) + params.b_h).tanh()
    return (1.0 - z) * h + z * candidate


def gru_encode(seq: SequenceBatch, params: GRUParams, h0: Optional[Tensor] = None) -> Tensor:
    """
    Run a single-layer GRU left to right.

    Returns:
        All hidden states, [..., T x d_h]
    """
    steps = seq.steps
    if steps.shape[-1] != params.W_z.shape[0]:
        raise ShapeError("GRU input width mismatch", steps.shape, params.W_z.shape)
    if h0 is None:
        h0 = Tensor(np.zeros(params.hidden_size))
    h0 = as_tensor(h0)
    if h0.shape != (params.hidden_size,):
        raise ContractError(f"h0 shape {h0.shape} does not match hidden size {params.hidden_size}")

    lead = (slice(None),) * (steps.ndim - 2)
    h = h0.reshape(1, -1)
    states = []
    for t in range(len(seq)):
        h = gru_step(steps[lead + (slice(t, t + 1), slice(None))], h, params)
        states.append(h)
    return concat(states, axis=-2)
