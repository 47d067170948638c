from dataclasses import dataclass
from typing import Tuple

from vchgcl.core.errors import ShapeError
from vchgcl.model.layers import MLPParams, init_mlp, mlp_forward
from vchgcl.tensor import ParameterStore, Tensor, as_tensor, layer_norm, matmul, softmax


@dataclass
class CrossAttentionParams:
    """Single-head attention from one stream (queries) over another (keys/values)."""
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor
    ffn: MLPParams
    ln_gain: Tensor
    ln_shift: Tensor


@dataclass
class CrossModalParams:
    text: CrossAttentionParams    # W_QT, W_KV, W_VV, FFN_T
    visual: CrossAttentionParams  # W_QV, W_KT, W_VT, FFN_VCO


@dataclass
class CrossModalState:
    text: Tensor     # [M x d]
    visual: Tensor   # [K x d]
    beta_v: Tensor   # [M x K] text-to-visual attention
    beta_t: Tensor   # [K x M] visual-to-text attention


def _init_side(store: ParameterStore, prefix: str, query: str, key: str, d: int) -> CrossAttentionParams:
    return CrossAttentionParams(
        W_q=store.create(f"{prefix}.W_Q{query}", (d, d)),
        W_k=store.create(f"{prefix}.W_K{key}", (d, d)),
        W_v=store.create(f"{prefix}.W_V{key}", (d, d)),
        ffn=init_mlp(store, f"{prefix}.ffn_{query}", [d, 2 * d, d]),
        ln_gain=store.create(f"{prefix}.ln_{query}.gain", (d,), init="ones"),
        ln_shift=store.create(f"{prefix}.ln_{query}.shift", (d,), init="zeros"),
    )


def init_crossmodal_params(store: ParameterStore, d: int) -> CrossModalParams:
    return CrossModalParams(text=_init_side(store, "crossmodal", "T", "V", d),
                            visual=_init_side(store, "crossmodal", "V", "T", d))


def _attend(queries: Tensor, keys: Tensor, params: CrossAttentionParams, eps: float,
            hidden_activation: str) -> Tuple[Tensor, Tensor]:
    queries, keys = as_tensor(queries), as_tensor(keys)
    if queries.ndim < 2 or keys.ndim < 2 or queries.shape[-1] != keys.shape[-1]:
        raise ShapeError("cross attention streams need a common width", queries.shape, keys.shape)
    # plain dot-product scores, no 1/sqrt(d) scaling; leading axes broadcast
    scores = matmul(matmul(queries, params.W_q), matmul(keys, params.W_k).transpose())
    beta = softmax(scores, axis=-1)
    context = matmul(beta, matmul(keys, params.W_v))
    out = layer_norm(queries + mlp_forward(context, params.ffn, hidden_activation),
                     params.ln_gain, params.ln_shift, eps)
    return out, beta


def attend_text_over_visual(text: Tensor, visual: Tensor, params: CrossAttentionParams,
                            eps: float = 1e-5, hidden_activation: str = "tanh") -> Tuple[Tensor, Tensor]:
    """
    Reinforce every token with the visual rows it attends to.

    Returns:
        (LayerNorm(text + FFN_T(beta . visual W_VV)) of shape [M x d], beta of shape [M x K])
    """
    return _attend(text, visual, params, eps, hidden_activation)


def attend_visual_over_text(visual: Tensor, text: Tensor, params: CrossAttentionParams,
                            eps: float = 1e-5, hidden_activation: str = "tanh") -> Tuple[Tensor, Tensor]:
    """Symmetric to ``attend_text_over_visual`` with visual rows as queries."""
    return _attend(visual, text, params, eps, hidden_activation)


def cross_modal_interact(text: Tensor, visual: Tensor, params: CrossModalParams,
                         eps: float = 1e-5, hidden_activation: str = "tanh") -> CrossModalState:
    text_out, beta_v = attend_text_over_visual(text, visual, params.text, eps, hidden_activation)
    visual_out, beta_t = attend_visual_over_text(visual, text, params.visual, eps, hidden_activation)
    return CrossModalState(text=text_out, visual=visual_out, beta_v=beta_v, beta_t=beta_t)
