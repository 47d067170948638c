from enum import Enum
from typing import List, Literal, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, Field, model_validator


class Mode(str, Enum):
    """Task layout: videos have a temporal axis, images do not."""
    VIDEO_QA = "video_qa"
    IMAGE_QA = "image_qa"


class SigmaMode(str, Enum):
    """How the positive sample's Gaussian noise scale is chosen."""
    ANCHOR_STD = "anchor_std"
    FIXED = "fixed"


class Ablation(str, Enum):
    """Rows of the ablation table; the last two only run with the extended table."""
    BASELINE = "baseline"
    VCO_ONLY = "vco_only"
    MLP_CONTRASTIVE = "mlp_contrastive"
    GRN_CONTRASTIVE = "grn_contrastive"
    TEXT_ONLY = "text_only"
    COMMONSENSE_ONLY = "commonsense_only"


ABLATION_ORDER = [
    Ablation.BASELINE,
    Ablation.VCO_ONLY,
    Ablation.MLP_CONTRASTIVE,
    Ablation.GRN_CONTRASTIVE,
]

# visual-stream removals, reported after the main four
EXTENDED_ABLATIONS = ABLATION_ORDER + [
    Ablation.TEXT_ONLY,
    Ablation.COMMONSENSE_ONLY,
]


class ModelConfig(BaseModel):
    """Schema for a model configuration."""
    d_o: int = Field(32, gt=0)
    d_vc: int = Field(8, gt=0)
    d: int = Field(16, gt=0)
    d_ev: int = Field(8, gt=0)
    d_h: int = Field(16, gt=0)
    d_out: int = Field(16, gt=0)
    p: int = Field(8, gt=0)
    d_t: int = Field(8, gt=0)
    d_ev_in: int = Field(8, gt=0)
    d_e: int = Field(16, gt=0)
    d_c: int = Field(16, gt=0)
    tau: float = Field(0.5, gt=0.0)
    lambda_: float = Field(1.7, ge=0.0, alias="lambda")
    mode: Mode = Mode.VIDEO_QA
    sigma_mode: SigmaMode = SigmaMode.ANCHOR_STD
    sigma_value: float = Field(0.0, ge=0.0)
    seed: int = 0
    ablation: Ablation = Ablation.GRN_CONTRASTIVE
    attention_activation: Literal["tanh", "sigmoid", "identity"] = "tanh"
    hidden_activation: Literal["tanh", "sigmoid"] = "tanh"
    share_fusion_weights: bool = False
    layer_norm_eps: float = Field(1e-5, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(16, gt=0)
    max_grad_norm: Optional[float] = Field(5.0, gt=0.0)

    model_config = {"populate_by_name": True, "frozen": True}


class SynthSpec(BaseModel):
    """Schema for the synthetic spurious-correlation dataset."""
    n_train: int = Field(2000, ge=0)
    n_eval: int = Field(500, ge=0)
    T: int = Field(4, gt=0)
    N: int = Field(4, gt=0)
    M_q: int = Field(6, gt=0)
    C: int = Field(4, ge=2)
    spurious_strength: float = Field(0.7, ge=0.0, le=1.0)
    signal_dim: Tuple[int, int] = (0, 4)
    seed: int = 0
    d_o: int = Field(32, gt=0)
    d_vc: int = Field(8, gt=0)
    d_t: int = Field(8, gt=0)
    d_ev_in: int = Field(8, gt=0)
    candidate_length: int = Field(2, gt=0)
    cue_scale: float = Field(2.0, gt=0.0)
    noise_scale: float = Field(0.3, ge=0.0)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_signal_range(self) -> "SynthSpec":
        start, stop = self.signal_dim
        if not 0 <= start < stop <= self.d_vc:
            raise ValueError(f"signal_dim {self.signal_dim} outside [0, {self.d_vc})")
        if stop - start < self.C:
            raise ValueError(f"signal_dim {self.signal_dim} narrower than C={self.C}")
        return self


class EpochRecord(BaseModel):
    """Schema for one row of the metrics file."""
    epoch: int
    train_loss: float
    eval_accuracy: float = Field(ge=0.0, le=1.0)
    pos_similarity: float = Field(ge=-1.0, le=1.0)
    neg_similarity: float = Field(ge=-1.0, le=1.0)
    signal_attention: float = Field(ge=0.0, le=1.0)


class RunReport(BaseModel):
    """Schema for a training run report."""
    ablation: Ablation
    seed: int
    epochs: List[EpochRecord] = []

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.epochs[-1] if self.epochs else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([record.model_dump() for record in self.epochs],
                            columns=list(EpochRecord.model_fields))


class AblationRow(BaseModel):
    """Schema for one row of the ablation table."""
    ablation: Ablation
    seed: int
    accuracy: float
    pos_similarity: float
    neg_similarity: float
    signal_attention: float


class ObjectAttention(BaseModel):
    """Object-level attention of one object; one weight per frame."""
    index: int
    box: Tuple[float, float, float, float]
    alpha: List[float] = []


class CandidateAttention(BaseModel):
    """Node-level attention and gated edges for one candidate answer."""
    index: int
    score: float
    node_kinds: List[str]
    node_alpha: List[float]
    gated_edges: Optional[List[List[float]]] = None


class AttentionRecord(BaseModel):
    """Schema for an attention dump."""
    uid: int
    mode: Mode
    ablation: Ablation
    correct_index: int
    prediction: int
    signal_object: Optional[int] = None
    objects: List[ObjectAttention]
    candidates: List[CandidateAttention]
