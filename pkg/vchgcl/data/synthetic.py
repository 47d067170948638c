"""
Synthetic multiple-choice QA with a planted spurious correlation.

Every instance has C answer concepts shown as candidates in shuffled order. The
correct concept is written into the commonsense features (F_VC) of one signal
object. A co-occurrence cue is written into the object features (F_O) of a context
object whose box overlaps the signal object's box: with probability
``spurious_strength`` that cue names a wrong concept, otherwise a uniformly random
one. A model that leans on F_O is therefore misled; one that reads F_VC is not.

This generator is this project's own construction, not a published benchmark.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from vchgcl.core.errors import ContractError
from vchgcl.core.schemas import SynthSpec
from vchgcl.model.fusion import ObjectFrame
from vchgcl.model.pipeline import QAInstance

logger = logging.getLogger(__name__)

CANVAS = 100.0


class ConceptBank:
    """Per-concept object-feature cues and token prototypes shared by both splits."""

    def __init__(self, spec: SynthSpec, rng: np.random.Generator):
        self.object_cues = rng.standard_normal((spec.C, spec.d_o))
        self.object_cues /= np.linalg.norm(self.object_cues, axis=1, keepdims=True)
        self.tokens = rng.standard_normal((spec.C, spec.candidate_length, spec.d_t))
        self.question = rng.standard_normal((spec.M_q, spec.d_t))


def _object_boxes(n_objects: int, signal: int, context: int, rng: np.random.Generator) -> np.ndarray:
    """
    Signal and context boxes overlap in the left half of the canvas; distractors
    occupy disjoint column strips on the right.
    """
    boxes = np.zeros((n_objects, 4))
    boxes[signal] = (10.0, 10.0, 40.0, 40.0)
    if context != signal:
        boxes[context] = (25.0, 25.0, 55.0, 55.0)
    distractors = [i for i in range(n_objects) if i not in (signal, context)]
    width = 40.0 / max(len(distractors), 1)
    for k, obj in enumerate(distractors):
        left = 60.0 + k * width
        boxes[obj] = (left + 0.1 * width, 10.0, left + 0.9 * width, 90.0)
    # jitter stays below half the gap between strips
    jitter = rng.uniform(-1.0, 1.0, size=boxes.shape) * min(0.5, 0.05 * width)
    return np.clip(boxes + jitter, 0.0, CANVAS)


def _make_instance(spec: SynthSpec, bank: ConceptBank, uid: int, rng: np.random.Generator) -> QAInstance:
    answer_concepts = rng.permutation(spec.C)
    correct_index = int(rng.integers(spec.C))
    truth = int(answer_concepts[correct_index])

    signal = int(rng.integers(spec.N))
    others = [i for i in range(spec.N) if i != signal]
    context = int(rng.choice(others)) if others else signal

    spurious = bool(rng.random() < spec.spurious_strength)
    if spurious:
        cue = int(rng.choice([k for k in range(spec.C) if k != truth]))
    else:
        cue = int(rng.integers(spec.C))

    boxes = _object_boxes(spec.N, signal, context, rng)
    start = spec.signal_dim[0]
    frames = []
    for _ in range(spec.T):
        f_o = rng.standard_normal((spec.N, spec.d_o)) * spec.noise_scale
        f_vc = rng.standard_normal((spec.N, spec.d_vc)) * spec.noise_scale
        f_vc[signal, start + truth] += spec.cue_scale
        f_o[context] += spec.cue_scale * bank.object_cues[cue]
        frames.append(ObjectFrame(f_o=f_o, f_vc=f_vc, bboxes=[tuple(b) for b in boxes]))

    appearance = rng.standard_normal((spec.T, spec.d_ev_in)) * spec.noise_scale
    question = bank.question + rng.standard_normal(bank.question.shape) * spec.noise_scale
    candidates = [bank.tokens[k] + rng.standard_normal(bank.tokens[k].shape) * spec.noise_scale
                  for k in answer_concepts]

    return QAInstance(frames=frames, appearance=appearance, question_tokens=question,
                      candidates=candidates, correct_index=correct_index, uid=uid,
                      signal_object=signal, context_object=context, spurious=spurious,
                      answer_concepts=[int(k) for k in answer_concepts])


def generate_dataset(spec: SynthSpec) -> Tuple[List[QAInstance], List[QAInstance]]:
    """
    Generate the train and eval splits.

    Identical specs give identical datasets; uids are unique across both splits.
    """
    rng = np.random.default_rng(spec.seed)
    bank = ConceptBank(spec, rng)
    train = [_make_instance(spec, bank, uid, rng) for uid in range(spec.n_train)]
    evaluation = [_make_instance(spec, bank, spec.n_train + uid, rng) for uid in range(spec.n_eval)]
    logger.info(f"Generated {len(train)} train and {len(evaluation)} eval instances "
                f"(C={spec.C}, spurious_strength={spec.spurious_strength}, seed={spec.seed})")
    return train, evaluation


def true_concept(instance: QAInstance) -> int:
    if instance.answer_concepts is None:
        raise ContractError(f"instance {instance.uid} carries no answer concepts")
    return instance.answer_concepts[instance.correct_index]


def _pooled_features(instances: List[QAInstance], feature: str) -> np.ndarray:
    if feature not in ("f_o", "f_vc"):
        raise ContractError(f"unknown feature {feature!r}")
    return np.stack([np.mean([getattr(frame, feature).data.mean(axis=0) for frame in inst.frames], axis=0)
                     for inst in instances])


def centroid_probe_accuracy(train: List[QAInstance], evaluation: List[QAInstance],
                            feature: str = "f_o") -> float:
    """
    Accuracy of a nearest-centroid classifier predicting the true answer concept
    from one feature channel, averaged over frames and objects.
    """
    if not train or not evaluation:
        raise ContractError("the centroid probe needs non-empty train and eval sets")
    x_train, x_eval = _pooled_features(train, feature), _pooled_features(evaluation, feature)
    y_train = np.array([true_concept(inst) for inst in train])
    y_eval = np.array([true_concept(inst) for inst in evaluation])
    classes = np.unique(y_train)
    centroids = np.stack([x_train[y_train == k].mean(axis=0) for k in classes])
    predicted = classes[np.argmin(cdist(x_eval, centroids), axis=1)]
    return float(np.mean(predicted == y_eval))
