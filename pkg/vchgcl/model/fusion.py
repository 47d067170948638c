"""
Anchor, positive and negative commonsense-fused object representations.

All three samples are affine maps of a [N x (d_vc + d_o)] input: the anchor sees
[F_VC : F_O], the positive sees the same concatenation plus Gaussian noise, and the
negative sees [0 : F_O] with the commonsense slots zero-padded.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from vchgcl.core.errors import DegenerateInputError, ShapeError
from vchgcl.core.schemas import ModelConfig
from vchgcl.model.layers import linear
from vchgcl.tensor import ParameterStore, Tensor, as_tensor, concat

SeedLike = Union[int, Sequence[int]]


class Box(NamedTuple):
    """Axis-aligned bounding box in pixels."""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def validate(self) -> "Box":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DegenerateInputError(f"malformed box {tuple(self)}")
        return self

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass
class ObjectFrame:
    """Object features, commonsense features and boxes of the N objects in one frame."""
    f_o: Tensor
    f_vc: Tensor
    bboxes: List[Box]

    def __post_init__(self):
        self.f_o = as_tensor(self.f_o)
        self.f_vc = as_tensor(self.f_vc)
        if self.f_o.ndim != 2 or self.f_vc.ndim != 2:
            raise ShapeError("frame features must be matrices", self.f_o.shape, self.f_vc.shape)
        if self.f_o.shape[0] != self.f_vc.shape[0] or self.f_o.shape[0] < 1:
            raise ShapeError("object and commonsense features need the same N >= 1",
                             self.f_o.shape, self.f_vc.shape)
        if len(self.bboxes) != self.f_o.shape[0]:
            raise ShapeError("one box per object is required", (len(self.bboxes),), self.f_o.shape)
        self.bboxes = [Box(*box).validate() for box in self.bboxes]

    def without_commonsense(self) -> "ObjectFrame":
        return ObjectFrame(self.f_o, Tensor(np.zeros(self.f_vc.shape)), list(self.bboxes))

    def without_objects(self) -> "ObjectFrame":
        return ObjectFrame(Tensor(np.zeros(self.f_o.shape)), self.f_vc, list(self.bboxes))


@dataclass
class ContrastiveTriplet:
    """The anchor, positive and negative representations of one frame."""
    anchor: Tensor
    positive: Tensor
    negative: Tensor

    def __post_init__(self):
        if not (self.anchor.shape == self.positive.shape == self.negative.shape):
            raise ShapeError("triplet members differ in shape",
                             self.anchor.shape, self.positive.shape, self.negative.shape)


@dataclass
class FusionParams:
    weight: Tensor
    bias: Tensor


class AnchorFusion(NamedTuple):
    fused: Tensor
    raw: Tensor


def init_fusion_params(store: ParameterStore, config: ModelConfig, contrastive: bool):
    """
    Register the fusion projections.

    Returns:
        (anchor, positive, negative) FusionParams; the last two are None without the
        contrastive path and alias the anchor when weight sharing is on.
    """
    width = config.d_vc + config.d_o
    anchor = FusionParams(store.create("fusion.W", (width, config.d)),
                          store.create("fusion.b", (config.d,), fan_in=width))
    if not contrastive:
        return anchor, None, None
    if config.share_fusion_weights:
        return anchor, anchor, anchor
    positive = FusionParams(store.create("contrastive.W_plus", (width, config.d)),
                            store.create("contrastive.b_plus", (config.d,), fan_in=width))
    negative = FusionParams(store.create("contrastive.W_minus", (width, config.d)),
                            store.create("contrastive.b_minus", (config.d,), fan_in=width))
    return anchor, positive, negative


def anchor_raw(frame: ObjectFrame) -> Tensor:
    """[F_VC : F_O] per object, before projection."""
    return concat([frame.f_vc, frame.f_o], axis=1)


def fuse_anchor(frame: ObjectFrame, W: Tensor, b: Tensor) -> AnchorFusion:
    raw = anchor_raw(frame)
    return AnchorFusion(fused=linear(raw, W, b), raw=raw)


def noise_sigma(raw: Tensor) -> float:
    """Population standard deviation over every entry of the anchor input."""
    return float(np.std(raw.data))


def perturb(raw: Tensor, rng_seed: SeedLike, sigma: Optional[float] = None) -> Tensor:
    """Add zero-mean Gaussian noise of scale ``sigma`` (anchor std when omitted)."""
    if sigma is None:
        sigma = noise_sigma(raw)
    noise = np.random.default_rng(rng_seed).standard_normal(raw.shape) * sigma
    return raw + Tensor(noise)


def make_positive(f_vco_raw: Tensor, W_plus: Tensor, b_plus: Tensor, rng_seed: SeedLike,
                  sigma: Optional[float] = None) -> Tensor:
    return linear(perturb(f_vco_raw, rng_seed, sigma), W_plus, b_plus)


def negative_raw(frame: ObjectFrame) -> Tensor:
    """[0 : F_O] per object: the commonsense slots are exact zeros."""
    return concat([Tensor(np.zeros(frame.f_vc.shape)), frame.f_o], axis=1)


def make_negative(frame: ObjectFrame, W_minus: Tensor, b_minus: Tensor) -> Tensor:
    return linear(negative_raw(frame), W_minus, b_minus)


def build_triplet(frame: ObjectFrame, anchor: FusionParams, positive: FusionParams,
                  negative: FusionParams, rng_seed: SeedLike,
                  sigma: Optional[float] = None) -> ContrastiveTriplet:
    fusion = fuse_anchor(frame, anchor.weight, anchor.bias)
    return ContrastiveTriplet(
        anchor=fusion.fused,
        positive=make_positive(fusion.raw, positive.weight, positive.bias, rng_seed, sigma),
        negative=make_negative(frame, negative.weight, negative.bias),
    )
