"""Finite-difference verification of every differentiable operation and of the full loss."""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from vchgcl.core.config import settings
from vchgcl.core.schemas import Mode, ModelConfig, SynthSpec
from vchgcl.data.synthetic import generate_dataset
from vchgcl.model.crossmodal import cross_modal_interact, init_crossmodal_params
from vchgcl.model.encoders import SequenceBatch, gru_encode, init_attention_params, init_gru_params, soft_attention
from vchgcl.model.grn import build_graph, init_grn_params, relate
from vchgcl.model.losses import ProjectedTriplet, ScoreVector, contrastive_loss, hinge_loss
from vchgcl.model.pipeline import VCHGCLModel
from vchgcl.tensor import (
    ParameterStore,
    Tensor,
    broadcast_to,
    check_parameters,
    concat,
    cosine_similarity,
    gradient_check,
    layer_norm,
    matmul,
    softmax,
)

logger = logging.getLogger(__name__)


Check = Tuple[str, Callable[[Tensor], Tensor], np.ndarray]


def _weighted(rng: np.random.Generator, fn: Callable[[Tensor], Tensor]) -> Callable[[Tensor], Tensor]:
    """Reduce ``fn``'s output to a scalar with fixed random weights."""
    cache = {}

    def scalar(x: Tensor) -> Tensor:
        out = fn(x)
        if out.shape not in cache:
            cache[out.shape] = rng.standard_normal(out.shape)
        return (out * cache[out.shape]).sum()

    return scalar


def operation_checks(seed: int = 0) -> List[Check]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 4))
    other = rng.standard_normal((3, 4))
    right = rng.standard_normal((4, 2))
    left = rng.standard_normal((2, 3))
    row = rng.standard_normal(4)
    away_from_zero = np.sign(x) * (np.abs(x) + 0.1)
    positive = np.abs(x) + 0.5
    gain, shift = rng.standard_normal(4), rng.standard_normal(4)
    w = lambda fn: _weighted(rng, fn)

    return [
        ("add", w(lambda t: t + other), x),
        ("add_broadcast", w(lambda t: Tensor(other) + t[0]), x),
        ("sub", w(lambda t: other - t), x),
        ("mul", w(lambda t: t * t * other), x),
        ("neg", w(lambda t: -t), x),
        ("truediv", w(lambda t: t / 3.0), x),
        ("matmul_left", w(lambda t: matmul(t, right)), x),
        ("matmul_right", w(lambda t: matmul(left, t)), x),
        ("transpose", w(lambda t: matmul(t.T, Tensor(other))), x),
        ("reshape", w(lambda t: t.reshape(2, 6) * 2.0), x),
        ("getitem", w(lambda t: t[1:, ::2]), x),
        ("sum_axis", w(lambda t: t.sum(axis=0)), x),
        ("mean", w(lambda t: t.mean(axis=1, keepdims=True)), x),
        ("tanh", w(lambda t: t.tanh()), x),
        ("sigmoid", w(lambda t: t.sigmoid()), x),
        ("relu", w(lambda t: t.relu()), away_from_zero),
        ("exp", w(lambda t: t.exp()), x),
        ("log", w(lambda t: t.log()), positive),
        ("softmax", w(lambda t: softmax(t, axis=-1)), x),
        ("layer_norm", w(lambda t: layer_norm(t, Tensor(gain), Tensor(shift))), x),
        ("layer_norm_gain", w(lambda g: layer_norm(Tensor(x), g, Tensor(shift))), gain),
        ("concat", w(lambda t: concat([t, Tensor(other)], axis=1)), x),
        ("broadcast_to", w(lambda t: broadcast_to(t[0], (2, 3, 4))), x),
        ("cosine_similarity", lambda t: cosine_similarity(t, Tensor(row)), rng.standard_normal(4)),
    ]


def module_checks(seed: int = 0) -> List[Check]:
    rng = np.random.default_rng(seed)
    store = ParameterStore(seed)
    d = 4
    attention = init_attention_params(store, "check.attention", d)
    gru = init_gru_params(store, "check.gru", 3, d)
    crossmodal = init_crossmodal_params(store, d)
    grn = init_grn_params(store, d)
    visual, text = rng.standard_normal((3, d)), rng.standard_normal((2, d))
    boxes = [(0, 0, 2, 2), (1, 1, 3, 3), (5, 5, 6, 6)]
    anchor, positive, negative = (rng.standard_normal(3) for _ in range(3))
    w = lambda fn: _weighted(rng, fn)

    return [
        ("soft_attention", w(lambda t: soft_attention(t, attention.W_a, attention.b_a).pooled), visual),
        ("gru_encode", w(lambda t: gru_encode(SequenceBatch(t), gru)), rng.standard_normal((3, 3))),
        ("cross_modal_text", w(lambda t: cross_modal_interact(t, Tensor(visual), crossmodal).text), text),
        ("cross_modal_visual", w(lambda t: cross_modal_interact(Tensor(text), t, crossmodal).visual), visual),
        ("relate_gated", w(lambda t: relate(build_graph(t, Tensor(text), boxes), grn).nodes), visual),
        ("relate_batched", w(lambda t: relate(build_graph(t, Tensor(np.stack([text, -text])), boxes), grn).nodes),
         visual),
        ("contrastive_loss", lambda t: contrastive_loss(
            ProjectedTriplet(t, Tensor(positive), Tensor(negative)), 0.5), anchor),
        ("hinge_loss", lambda t: hinge_loss(ScoreVector(t, 0)), np.array([1.0, 0.7, -2.0, 0.4])),
    ]


def tiny_setup(mode: Mode = Mode.VIDEO_QA) -> Tuple[ModelConfig, SynthSpec]:
    """Minimal configuration for checks over every parameter: two objects, three tokens, two candidates."""
    config = ModelConfig(d_o=4, d_vc=4, d=4, d_ev=3, d_h=4, d_out=4, p=3, d_t=3, d_ev_in=3, d_e=4, d_c=4,
                         mode=mode)
    spec = SynthSpec(n_train=1, n_eval=0, T=2 if mode == Mode.VIDEO_QA else 1, N=2, M_q=2, C=2,
                     signal_dim=(0, 2), d_o=4, d_vc=4, d_t=3, d_ev_in=3, candidate_length=1, noise_scale=1.0)
    return config, spec


def model_check(mode: Mode, h: float, max_coords: int = 4) -> pd.DataFrame:
    """
    Gradient check of the three-branch model for every parameter.

    The scores enter through fixed random weights rather than the hinge, whose
    satisfied margins would zero whole gradients.
    """
    config, spec = tiny_setup(mode)
    (instance,), _ = generate_dataset(spec)
    model = VCHGCLModel(config)
    weights = Tensor(np.random.default_rng(config.seed).standard_normal(instance.num_candidates))

    def loss() -> Tensor:
        result = model.forward(instance)
        return (result.scores.scores * weights).sum() + result.contrastive

    errors = check_parameters(loss, model.store, h=h, max_coords=max_coords, seed=config.seed)
    return pd.DataFrame({"check": [f"model[{mode.value}]:{name}" for name in errors],
                         "max_relative_error": list(errors.values())})


def run_gradient_suite(full: bool = False, h: Optional[float] = None, tolerance: Optional[float] = None) -> pd.DataFrame:
    """
    Run the gradient checks.

    Args:
        full: Also check the full model loss with respect to every parameter
        h: Finite-difference step (settings default when omitted)
        tolerance: Largest accepted relative error (settings default when omitted)

    Returns:
        DataFrame with columns check, max_relative_error, passed
    """
    h = settings.GRADCHECK_STEP if h is None else h
    tolerance = settings.GRADCHECK_TOLERANCE if tolerance is None else tolerance

    rows = [(name, gradient_check(fn, x, h=h)) for name, fn, x in operation_checks()]
    rows += [(name, gradient_check(fn, x, h=h)) for name, fn, x in module_checks()]
    frame = pd.DataFrame(rows, columns=["check", "max_relative_error"])
    if full:
        frame = pd.concat([frame] + [model_check(mode, h) for mode in Mode], ignore_index=True)
    frame["passed"] = frame["max_relative_error"] < tolerance

    failed = frame[~frame["passed"]]
    for row in failed.itertuples(index=False):
        logger.error(f"Gradient check {row.check} failed: relative error {row.max_relative_error:.3e}")
    logger.info(f"{len(frame) - len(failed)}/{len(frame)} gradient checks passed")
    return frame
