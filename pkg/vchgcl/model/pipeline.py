"""
The three-branch forward pass, the training step and prediction.

Each candidate answer is scored by running the question+candidate text against the
anchor visual stream through cross-modal attention, the relation module and the
graph head. With the contrastive path enabled the same stack, with the same
parameters, also runs on the positive and negative visual streams, and the three
projected outputs, centered over the branches, feed the contrastive loss.

Branches and equal-length candidates travel together on two leading axes, so one
pass through the stack covers a whole candidate group.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from vchgcl.core.errors import ContractError, NumericError, ShapeError
from vchgcl.core.schemas import Ablation, ModelConfig, Mode, SigmaMode
from vchgcl.model.crossmodal import cross_modal_interact, init_crossmodal_params
from vchgcl.model.encoders import (
    SequenceBatch,
    enhance_visual,
    gru_encode,
    init_attention_params,
    init_gru_params,
    soft_attention,
)
from vchgcl.model.fusion import (
    ObjectFrame,
    anchor_raw,
    fuse_anchor,
    init_fusion_params,
    make_negative,
    make_positive,
)
from vchgcl.model.grn import (
    build_graph,
    graph_head,
    init_grn_params,
    init_head_params,
    init_mlp_relation_params,
    mlp_relation,
    relate,
)
from vchgcl.model.layers import MLPParams, init_mlp, linear, mlp_forward
from vchgcl.model.losses import ProjectedTriplet, ScoreVector, contrastive_loss, hinge_loss, total_loss
from vchgcl.model.optim import OptimizerState, sgd_momentum_update
from vchgcl.tensor import ParameterStore, Tensor, as_tensor, broadcast_to, concat, cosine_similarity, load_snapshot

logger = logging.getLogger(__name__)

BRANCHES = ("anchor", "positive", "negative")


@dataclass
class QAInstance:
    """One multiple-choice question over a video (T frames) or an image (one frame)."""
    frames: List[ObjectFrame]
    appearance: Tensor
    question_tokens: Tensor
    candidates: List[Tensor]
    correct_index: int
    uid: int = 0
    signal_object: Optional[int] = None
    context_object: Optional[int] = None
    spurious: Optional[bool] = None
    answer_concepts: Optional[List[int]] = None

    def __post_init__(self):
        self.appearance = as_tensor(self.appearance)
        self.question_tokens = as_tensor(self.question_tokens)
        self.candidates = [as_tensor(c) for c in self.candidates]
        if not self.frames:
            raise ContractError("an instance needs at least one frame")
        if len(self.candidates) < 2:
            raise ContractError(f"an instance needs at least two candidates, got {len(self.candidates)}")
        if any(c.ndim != 2 or c.shape[0] < 1 for c in self.candidates):
            raise ContractError("every candidate must be a non-empty token matrix")
        if not 0 <= self.correct_index < len(self.candidates):
            raise ContractError(f"correct_index {self.correct_index} outside [0, {len(self.candidates)})")
        if self.appearance.ndim != 2 or self.appearance.shape[0] != len(self.frames):
            raise ShapeError("appearance needs one row per frame", self.appearance.shape, (len(self.frames),))

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    def text_for(self, candidate: int) -> Tensor:
        """Question tokens followed by the candidate's tokens."""
        return concat([self.question_tokens, self.candidates[candidate]], axis=0)


class AblationPlan(NamedTuple):
    use_commonsense: bool
    use_object: bool
    use_contrastive: bool
    relation: str
    lambda_: float


def resolve_ablation(config: ModelConfig) -> AblationPlan:
    """Map the ablation setting to the components it switches on."""
    if config.ablation == Ablation.BASELINE:
        return AblationPlan(False, True, False, "none", 0.0)
    if config.ablation == Ablation.VCO_ONLY:
        return AblationPlan(True, True, False, "none", 0.0)
    if config.ablation == Ablation.MLP_CONTRASTIVE:
        return AblationPlan(True, True, True, "mlp", config.lambda_)
    if config.ablation == Ablation.TEXT_ONLY:
        return AblationPlan(False, False, False, "none", 0.0)
    if config.ablation == Ablation.COMMONSENSE_ONLY:
        return AblationPlan(True, False, True, "grn", config.lambda_)
    return AblationPlan(True, True, True, "grn", config.lambda_)


@dataclass
class Diagnostics:
    object_alpha: Optional[np.ndarray] = None
    node_alpha: List[np.ndarray] = field(default_factory=list)
    gated_edges: List[Optional[np.ndarray]] = field(default_factory=list)
    node_kinds: List[List[str]] = field(default_factory=list)
    f_out: List[np.ndarray] = field(default_factory=list)
    pos_similarity: List[float] = field(default_factory=list)
    neg_similarity: List[float] = field(default_factory=list)
    branches: int = 1


@dataclass
class ForwardResult:
    scores: ScoreVector
    contrastive: Tensor
    diagnostics: Diagnostics


class BranchOutput(NamedTuple):
    f_out: Tensor
    node_alpha: Tensor
    gated_edges: Optional[np.ndarray]
    node_kinds: List[str]


class VCHGCLModel:
    """Parameters and forward computation for one configuration."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.plan = resolve_ablation(config)
        self.store = ParameterStore(config.seed)
        store, c = self.store, config

        self.fusion, self.fusion_positive, self.fusion_negative = init_fusion_params(
            store, c, self.plan.use_contrastive)

        if c.mode == Mode.VIDEO_QA:
            self.object_attention = init_attention_params(store, "encoders.object_attention", c.d)
            self.appearance_gru = init_gru_params(store, "encoders.appearance_gru", c.d_ev_in, c.d_ev)
            self.enhance = init_mlp(store, "encoders.enhance", [c.d + c.d_ev, c.d + c.d_ev, c.d_e])
            self.visual_gru = init_gru_params(store, "encoders.visual_gru", c.d_e, c.d_h)
            visual_width = c.d_h
        else:
            visual_width = c.d
        self.text_gru = init_gru_params(store, "encoders.text_gru", c.d_t, c.d_h)
        self.visual_proj = (store.create("encoders.visual_proj.w", (visual_width, c.d_c)),
                            store.create("encoders.visual_proj.b", (c.d_c,), fan_in=visual_width))
        self.text_proj = (store.create("encoders.text_proj.w", (c.d_h, c.d_c)),
                          store.create("encoders.text_proj.b", (c.d_c,), fan_in=c.d_h))

        self.crossmodal = init_crossmodal_params(store, c.d_c)
        if self.plan.relation == "grn":
            self.grn = init_grn_params(store, c.d_c)
        elif self.plan.relation == "mlp":
            self.relation_mlp = init_mlp_relation_params(store, c.d_c)

        # F_M comes from the built-in baseline head: the mean cross-modal text row
        self.head = init_head_params(store, c.d_c, c.d_c, c.d_out)
        self.classifier = (store.create("head.classifier.w", (c.d_out, 1)),
                           store.create("head.classifier.b", (1,), fan_in=c.d_out))
        if self.plan.use_contrastive:
            hidden = init_mlp(store, "contrastive.projector", [c.d_out, c.d_out])
            out_weight = store.create("contrastive.projector.w1", (c.d_out, c.p))
            # an output bias would cancel in the branch centering
            self.projector = MLPParams(hidden.layers + [(out_weight, Tensor(np.zeros(c.p)))])

    # ------------------------------------------------------------- validation

    def check_instance(self, instance: QAInstance) -> None:
        c = self.config
        if c.mode == Mode.IMAGE_QA and len(instance.frames) != 1:
            raise ContractError(f"image mode expects one frame, got {len(instance.frames)}")
        for frame in instance.frames:
            if frame.f_o.shape[1] != c.d_o or frame.f_vc.shape[1] != c.d_vc:
                raise ShapeError("frame widths do not match the configuration",
                                 (frame.f_vc.shape[1], frame.f_o.shape[1]), (c.d_vc, c.d_o))
        if instance.question_tokens.shape[1] != c.d_t:
            raise ShapeError("token width does not match the configuration",
                             instance.question_tokens.shape, (c.d_t,))
        if c.mode == Mode.VIDEO_QA and instance.appearance.shape[1] != c.d_ev_in:
            raise ShapeError("appearance width does not match the configuration",
                             instance.appearance.shape, (c.d_ev_in,))

    # --------------------------------------------------------------- encoders

    def noise_seed(self, instance: QAInstance, epoch: int, frame_index: int) -> List[int]:
        return [self.config.seed % 2 ** 32, instance.uid, epoch, frame_index]

    def frame_branch(self, instance: QAInstance, frame_index: int, branch: str, epoch: int) -> Tensor:
        """Fused [N x d] representation of one frame for the given branch."""
        frame = instance.frames[frame_index]
        if not self.plan.use_commonsense:
            frame = frame.without_commonsense()
        if not self.plan.use_object:
            frame = frame.without_objects()
        if branch == "anchor":
            return fuse_anchor(frame, self.fusion.weight, self.fusion.bias).fused
        if not self.plan.use_contrastive:
            raise ContractError(f"the {self.config.ablation.value} ablation has no {branch} branch")
        if branch == "positive":
            sigma = None if self.config.sigma_mode == SigmaMode.ANCHOR_STD else self.config.sigma_value
            return make_positive(anchor_raw(frame), self.fusion_positive.weight, self.fusion_positive.bias,
                                 self.noise_seed(instance, epoch, frame_index), sigma)
        if branch == "negative":
            return make_negative(frame, self.fusion_negative.weight, self.fusion_negative.bias)
        raise ContractError(f"unknown branch {branch!r}")

    def encode_appearance(self, instance: QAInstance) -> Optional[Tensor]:
        if self.config.mode != Mode.VIDEO_QA:
            return None
        appearance = instance.appearance
        if not (self.plan.use_object or self.plan.use_commonsense):
            appearance = Tensor(np.zeros(appearance.shape))
        return gru_encode(SequenceBatch(appearance), self.appearance_gru)

    def encode_visual_branches(self, instance: QAInstance, branches: Sequence[str], f_ev: Optional[Tensor],
                               epoch: int = 0) -> Tuple[Tensor, Optional[Tensor]]:
        """
        Visual streams of several branches, stacked on a leading axis.

        Returns:
            ([B x K x d_c] visual rows, [B x T x N] object attention or None in image mode)
        """
        c = self.config
        if c.mode == Mode.IMAGE_QA:
            fused = concat([self.frame_branch(instance, 0, branch, epoch).reshape(1, -1, c.d)
                            for branch in branches], axis=0)
            return linear(fused, *self.visual_proj), None

        num_frames = len(instance.frames)
        # [B x T x N x d]
        fused = concat([
            concat([self.frame_branch(instance, t, branch, epoch).reshape(1, 1, -1, c.d)
                    for t in range(num_frames)], axis=1)
            for branch in branches], axis=0)
        pooled = soft_attention(fused, self.object_attention.W_a, self.object_attention.b_a,
                                c.attention_activation)
        f_ev = broadcast_to(f_ev, (len(branches), *f_ev.shape))
        enhanced = enhance_visual(pooled.pooled, f_ev, self.enhance, c.hidden_activation)
        visual = gru_encode(SequenceBatch(enhanced), self.visual_gru)
        return linear(visual, *self.visual_proj), pooled.weights

    def encode_visual(self, instance: QAInstance, branch: str, f_ev: Optional[Tensor],
                      epoch: int = 0) -> Tuple[Tensor, Optional[Tensor]]:
        """
        Visual stream of one branch projected to the common width.

        Returns:
            ([K x d_c] visual rows, [T x N] object attention or None in image mode)
        """
        visual, alpha = self.encode_visual_branches(instance, [branch], f_ev, epoch)
        return visual[0], None if alpha is None else alpha[0]

    def candidate_groups(self, instance: QAInstance) -> List[List[int]]:
        """Candidate indices grouped by token count, so each group encodes as one batch."""
        groups = {}
        for candidate, tokens in enumerate(instance.candidates):
            groups.setdefault(tokens.shape[0], []).append(candidate)
        return list(groups.values())

    def encode_text_group(self, instance: QAInstance, candidates: Sequence[int]) -> Tensor:
        """[G x M x d_c] text rows for candidates of equal length."""
        texts = [instance.text_for(candidate) for candidate in candidates]
        if len({text.shape for text in texts}) != 1:
            raise ShapeError("a text group needs candidates of equal length", *[text.shape for text in texts])
        steps = concat([text.reshape(1, *text.shape) for text in texts], axis=0)
        return linear(gru_encode(SequenceBatch(steps), self.text_gru), *self.text_proj)

    def encode_text(self, instance: QAInstance, candidate: int) -> Tensor:
        return self.encode_text_group(instance, [candidate])[0]

    # ------------------------------------------------------------ interaction

    def relate_and_pool(self, visual: Tensor, text: Tensor, instance: QAInstance) -> BranchOutput:
        """
        Cross-modal interaction, relation module and graph head.

        ``visual`` [..., K x d_c] and ``text`` [..., M x d_c] may carry leading axes
        that broadcast together, such as branches against candidates.
        """
        c = self.config
        state = cross_modal_interact(text, visual, self.crossmodal, c.layer_norm_eps, c.hidden_activation)
        num_visual = state.visual.shape[-2]
        kinds = ["visual"] * num_visual + ["text"] * state.text.shape[-2]
        edges = None
        if self.plan.relation == "grn":
            bboxes = instance.frames[0].bboxes if c.mode == Mode.IMAGE_QA else None
            related = relate(build_graph(state.visual, state.text, bboxes), self.grn, c.hidden_activation)
            updated, edges = related.nodes, related.edges.data.copy()
        elif self.plan.relation == "mlp":
            updated = mlp_relation(build_graph(state.visual, state.text).nodes,
                                   self.relation_mlp, c.hidden_activation)
        else:
            updated = build_graph(state.visual, state.text).nodes

        f_m = state.text.mean(axis=-2)
        head = graph_head(updated, self.head.attention, f_m, self.head.out_weight, self.head.out_bias,
                          c.attention_activation)
        return BranchOutput(head.output, head.attention.weights, edges, kinds)

    def project(self, f_out: Tensor) -> Tensor:
        return mlp_forward(f_out, self.projector, self.config.hidden_activation)

    def centered_projections(self, f_out: Tensor) -> Tensor:
        """
        Projected outputs minus their mean over the branch axis.

        ``f_out`` is [3 x ... x d_out]. What the three branches share (F_M and the
        biases) cancels, leaving only what tells them apart.
        """
        projected = self.project(f_out)
        return projected - projected.mean(axis=0, keepdims=True)

    def score(self, f_out: Tensor) -> Tensor:
        return linear(f_out, *self.classifier)

    # ---------------------------------------------------------------- forward

    def forward(self, instance: QAInstance, epoch: int = 0) -> ForwardResult:
        self.check_instance(instance)
        branches = BRANCHES if self.plan.use_contrastive else BRANCHES[:1]
        visual, alpha = self.encode_visual_branches(instance, branches, self.encode_appearance(instance), epoch)
        # branches on axis 0, candidates on axis 1
        visual = visual.reshape(len(branches), 1, *visual.shape[-2:])

        diagnostics = Diagnostics(object_alpha=None if alpha is None else alpha.data[0].copy(),
                                  branches=len(branches))
        per_candidate = {}
        group_scores, order, contrastive_terms = [], [], []
        for candidates in self.candidate_groups(instance):
            text = self.encode_text_group(instance, candidates)
            out = self.relate_and_pool(visual, text.reshape(1, *text.shape), instance)
            group_scores.append(self.score(out.f_out[0]).reshape(len(candidates)))
            order.extend(candidates)
            centered = self.centered_projections(out.f_out) if self.plan.use_contrastive else None
            for g, candidate in enumerate(candidates):
                entry = {
                    "node_alpha": out.node_alpha.data[0, g].copy(),
                    "gated_edges": None if out.gated_edges is None else out.gated_edges[0, g].copy(),
                    "f_out": out.f_out.data[0, g].copy(),
                    "node_kinds": out.node_kinds,
                }
                if centered is not None:
                    triplet = ProjectedTriplet(centered[0, g], centered[1, g], centered[2, g])
                    contrastive_terms.append(contrastive_loss(triplet, self.config.tau))
                    entry["pos"] = cosine_similarity(triplet.anchor.detach(), triplet.positive.detach()).item()
                    entry["neg"] = cosine_similarity(triplet.anchor.detach(), triplet.negative.detach()).item()
                per_candidate[candidate] = entry

        for candidate in range(instance.num_candidates):
            entry = per_candidate[candidate]
            diagnostics.node_alpha.append(entry["node_alpha"])
            diagnostics.gated_edges.append(entry["gated_edges"])
            diagnostics.node_kinds.append(entry["node_kinds"])
            diagnostics.f_out.append(entry["f_out"])
            if "pos" in entry:
                diagnostics.pos_similarity.append(entry["pos"])
                diagnostics.neg_similarity.append(entry["neg"])

        if contrastive_terms:
            contrastive = sum(contrastive_terms) * (1.0 / len(contrastive_terms))
        else:
            contrastive = Tensor(0.0)
        scores = concat(group_scores, axis=0)[np.argsort(order, kind="stable")]
        return ForwardResult(scores=ScoreVector(scores, instance.correct_index),
                             contrastive=contrastive, diagnostics=diagnostics)

    def loss(self, result: ForwardResult) -> Tensor:
        return total_loss(hinge_loss(result.scores), result.contrastive, self.plan.lambda_)


def _check_config(config: ModelConfig, model: VCHGCLModel) -> None:
    if config != model.config:
        raise ContractError("configuration does not match the model's parameters")


def forward(instance: QAInstance, config: ModelConfig, model: VCHGCLModel, epoch: int = 0) -> ForwardResult:
    _check_config(config, model)
    return model.forward(instance, epoch)


def train_step(batch: Sequence[QAInstance], config: ModelConfig, model: VCHGCLModel,
               optimizer_state: OptimizerState, epoch: int = 0) -> Tuple[float, OptimizerState]:
    """
    Backpropagate the mean total loss of a batch and apply one optimizer update.

    Returns:
        (mean total loss before the update, updated optimizer state)
    """
    _check_config(config, model)
    if not batch:
        raise ContractError("train_step needs a non-empty batch")
    model.store.zero_grad()
    scale = 1.0 / len(batch)
    total = 0.0
    for index, instance in enumerate(batch):
        loss = model.loss(model.forward(instance, epoch))
        value = loss.item()
        if not np.isfinite(value):
            logger.error(f"Non-finite loss {value} at batch index {index} (uid {instance.uid})")
            raise NumericError("non-finite loss", {"instance_index": index, "uid": instance.uid, "epoch": epoch})
        # per-instance backward; gradients accumulate into the batch mean
        (loss * scale).backward()
        total += value
    return total * scale, sgd_momentum_update(model.store, optimizer_state)


def predict(instance: QAInstance, config: ModelConfig, model: VCHGCLModel) -> int:
    """Index of the highest-scoring candidate; ties go to the lowest index."""
    _check_config(config, model)
    return argmax_first(model.forward(instance).scores.scores.data)


def argmax_first(scores: np.ndarray) -> int:
    return int(np.argmax(scores))


def checkpoint_sidecar(path: str) -> str:
    return f"{path}.json"


def save_checkpoint(model: VCHGCLModel, path: str) -> str:
    """Write the parameter snapshot and a JSON sidecar holding the configuration."""
    model.store.save(path)
    with open(checkpoint_sidecar(path), "w", encoding="utf-8") as f:
        f.write(model.config.model_dump_json(by_alias=True, indent=2))
    return path


def load_checkpoint(path: str) -> VCHGCLModel:
    """Rebuild a model from ``save_checkpoint`` output."""
    try:
        with open(checkpoint_sidecar(path), "r", encoding="utf-8") as f:
            config = ModelConfig.model_validate_json(f.read())
    except FileNotFoundError:
        raise ContractError(f"checkpoint {path} has no configuration sidecar") from None
    model = VCHGCLModel(config)
    model.store.load_state(load_snapshot(path))
    logger.info(f"Loaded {config.ablation.value} checkpoint from {path}")
    return model
