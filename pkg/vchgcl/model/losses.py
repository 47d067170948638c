"""Graph contrastive loss, hinge answer-ranking loss and their weighted sum."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from vchgcl.core.errors import ContractError, ShapeError
from vchgcl.tensor import Tensor, as_tensor, concat, cosine_similarity


@dataclass
class ProjectedTriplet:
    """Projected anchor, positive and negative embeddings."""
    anchor: Tensor
    positive: Tensor
    negative: Tensor

    def __post_init__(self):
        if not (self.anchor.shape == self.positive.shape == self.negative.shape):
            raise ShapeError("projected triplet members differ in shape",
                             self.anchor.shape, self.positive.shape, self.negative.shape)


@dataclass
class ScoreVector:
    """One score per answer candidate and the index of the correct one."""
    scores: Tensor
    correct_index: int

    def __post_init__(self):
        self.scores = as_tensor(self.scores)
        if self.scores.ndim != 1 or self.scores.shape[0] < 2:
            raise ShapeError("scores must be a vector of at least two candidates", self.scores.shape)
        if not 0 <= self.correct_index < self.scores.shape[0]:
            raise ContractError(f"correct_index {self.correct_index} outside [0, {self.scores.shape[0]})")

    @property
    def num_candidates(self) -> int:
        return self.scores.shape[0]


def contrastive_loss(t: ProjectedTriplet, tau: float) -> Tensor:
    """
    Two-term InfoNCE over cosine similarities.

    -log(exp(d(a,p)/tau) / (exp(d(a,p)/tau) + exp(d(a,n)/tau)))
    """
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    positive = cosine_similarity(t.anchor, t.positive)
    negative = cosine_similarity(t.anchor, t.negative)
    logits = concat([positive.reshape(1), negative.reshape(1)], axis=0) * (1.0 / tau)
    # log-sum-exp stays finite when one logit dwarfs the other
    shift = float(logits.data.max())
    return (logits - shift).exp().sum().log() + shift - logits[0]


def hinge_loss(s: ScoreVector) -> Tensor:
    """Sum over incorrect candidates of max(0, 1 + y_neg - y_pos)."""
    incorrect = np.array([i for i in range(s.num_candidates) if i != s.correct_index])
    margins = 1.0 + s.scores[incorrect] - s.scores[s.correct_index]
    return margins.relu().sum()


def total_loss(l_pre: Tensor, l_cl: Union[Tensor, float], lambda_: float) -> Tensor:
    """l_pre + lambda * l_cl."""
    if lambda_ < 0:
        raise ContractError(f"lambda must be non-negative, got {lambda_}")
    return as_tensor(l_pre) + as_tensor(l_cl) * lambda_
