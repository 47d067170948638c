"""Training, evaluation and the multi-seed ablation harness."""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from vchgcl.analytics.statistics import ABLATION_COLUMNS, accuracy
from vchgcl.core.config import settings
from vchgcl.core.errors import ContractError, NumericError
from vchgcl.core.schemas import (
    ABLATION_ORDER,
    EXTENDED_ABLATIONS,
    Ablation,
    AblationRow,
    EpochRecord,
    ModelConfig,
    RunReport,
    SynthSpec,
)
from vchgcl.data.synthetic import generate_dataset
from vchgcl.model.optim import OptimizerState
from vchgcl.model.pipeline import ForwardResult, QAInstance, VCHGCLModel, argmax_first, train_step

logger = logging.getLogger(__name__)


class EvaluationSummary(NamedTuple):
    accuracy: float
    loss: float
    pos_similarity: float
    neg_similarity: float
    signal_attention: float


def signal_attention_mass(result: ForwardResult, instance: QAInstance) -> float:
    """
    Attention weight on the signal-bearing object.

    Video instances use the object-level weights averaged over frames; image
    instances use the node-level weight of the signal object's visual node averaged
    over candidates.
    """
    signal = instance.signal_object
    if result.diagnostics.object_alpha is not None:
        return float(result.diagnostics.object_alpha[:, signal].mean())
    return float(np.mean([alpha[signal] for alpha in result.diagnostics.node_alpha]))


def evaluate(instances: Sequence[QAInstance], model: VCHGCLModel) -> EvaluationSummary:
    """Forward every instance once, without updates."""
    if not instances:
        raise ContractError("cannot evaluate an empty instance set")
    predictions, losses, pos, neg, mass = [], [], [], [], []
    for index, instance in enumerate(instances):
        result = model.forward(instance)
        loss = model.loss(result).item()
        if not np.isfinite(loss):
            logger.error(f"Non-finite evaluation loss at index {index} (uid {instance.uid})")
            raise NumericError("non-finite evaluation loss", {"instance_index": index, "uid": instance.uid})
        losses.append(loss)
        predictions.append(argmax_first(result.scores.scores.data))
        pos.extend(result.diagnostics.pos_similarity)
        neg.extend(result.diagnostics.neg_similarity)
        if instance.signal_object is not None:
            mass.append(signal_attention_mass(result, instance))

    return EvaluationSummary(
        accuracy=accuracy(predictions, [inst.correct_index for inst in instances]),
        loss=float(np.mean(losses)),
        # rounding in the cosine can land a hair outside [-1, 1]
        pos_similarity=float(np.clip(np.mean(pos), -1.0, 1.0)) if pos else 0.0,
        neg_similarity=float(np.clip(np.mean(neg), -1.0, 1.0)) if neg else 0.0,
        signal_attention=float(np.clip(np.mean(mass), 0.0, 1.0)) if mass else 0.0,
    )


def _record(epoch: int, train_loss: float, summary: EvaluationSummary) -> EpochRecord:
    return EpochRecord(epoch=epoch, train_loss=train_loss, eval_accuracy=summary.accuracy,
                       pos_similarity=summary.pos_similarity, neg_similarity=summary.neg_similarity,
                       signal_attention=summary.signal_attention)


def train_model(config: ModelConfig, train: Sequence[QAInstance], evaluation: Sequence[QAInstance],
                epochs: int, lr: float) -> Tuple[RunReport, VCHGCLModel]:
    """
    Train a fresh model and evaluate it after every epoch.

    Epoch 0 is the untrained evaluation; its ``train_loss`` is the mean loss over
    the eval split.
    """
    if epochs < 0:
        raise ContractError(f"epochs must be non-negative, got {epochs}")
    if epochs > 0 and not train:
        raise ContractError("cannot train on an empty instance set")

    model = VCHGCLModel(config)
    state = OptimizerState(lr=lr, momentum=config.momentum, max_grad_norm=config.max_grad_norm)
    shuffle = np.random.default_rng([config.seed % 2 ** 32, 1])

    summary = evaluate(evaluation, model)
    report = RunReport(ablation=config.ablation, seed=config.seed, epochs=[_record(0, summary.loss, summary)])
    logger.info(f"[{config.ablation.value} seed={config.seed}] untrained accuracy {summary.accuracy:.4f}")

    for epoch in range(1, epochs + 1):
        order = shuffle.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start:start + config.batch_size]]
            try:
                loss, state = train_step(batch, config, model, state, epoch=epoch)
            except NumericError as exc:
                raise NumericError("training diverged",
                                   {**exc.context, "seed": config.seed, "epoch": epoch}) from exc
            total += loss * len(batch)

        summary = evaluate(evaluation, model)
        record = _record(epoch, total / len(train), summary)
        report.epochs.append(record)
        logger.info(f"[{config.ablation.value} seed={config.seed}] epoch {epoch}: "
                    f"loss {record.train_loss:.4f}, accuracy {record.eval_accuracy:.4f}, "
                    f"pos {record.pos_similarity:.4f}, neg {record.neg_similarity:.4f}")
    return report, model


def run_training(config: ModelConfig, spec: Optional[SynthSpec] = None, epochs: Optional[int] = None,
                 lr: Optional[float] = None, train: Optional[Sequence[QAInstance]] = None,
                 evaluation: Optional[Sequence[QAInstance]] = None) -> RunReport:
    """
    Train on a generated dataset (from ``spec``) or on given splits.

    Args:
        config: Model configuration
        spec: Dataset specification, used when ``train``/``evaluation`` are omitted
        epochs: Number of epochs (settings default when omitted)
        lr: Learning rate (settings default when omitted)

    Returns:
        The per-epoch RunReport
    """
    if train is None or evaluation is None:
        if spec is None:
            raise ContractError("run_training needs either a SynthSpec or explicit splits")
        train, evaluation = generate_dataset(spec)
    epochs = settings.DEFAULT_EPOCHS if epochs is None else epochs
    lr = settings.DEFAULT_LR if lr is None else lr
    report, _ = train_model(config, train, evaluation, epochs, lr)
    return report


def _ablation_job(job: Tuple[Ablation, int, SynthSpec, ModelConfig, int, float]) -> dict:
    ablation, seed, spec, base_config, epochs, lr = job
    config = base_config.model_copy(update={"ablation": ablation, "seed": seed})
    train, evaluation = generate_dataset(spec.model_copy(update={"seed": seed}))
    final = run_training(config, epochs=epochs, lr=lr, train=train, evaluation=evaluation).final
    row = AblationRow(ablation=ablation, seed=seed, accuracy=final.eval_accuracy,
                      pos_similarity=final.pos_similarity, neg_similarity=final.neg_similarity,
                      signal_attention=final.signal_attention)
    return row.model_dump(mode="json")


def run_ablation(spec: SynthSpec, epochs: Optional[int] = None, lr: Optional[float] = None,
                 seeds: Optional[List[int]] = None, base_config: Optional[ModelConfig] = None,
                 workers: int = 1, extended: bool = False) -> pd.DataFrame:
    """
    Train every ablation for every seed.

    Each (ablation, seed) pair regenerates the dataset from ``spec`` with that seed
    and trains a model with the same seed, so ablations of one seed see identical
    data. Runs are independent and may execute in separate processes. With
    ``extended`` the text-only and commonsense-only variants run after the main four.

    Returns:
        One row per (ablation, seed), ordered by ablation then seed
    """
    seeds = [spec.seed] if seeds is None else list(seeds)
    if not seeds:
        raise ContractError("run_ablation needs at least one seed")
    base_config = base_config or ModelConfig()
    epochs = settings.DEFAULT_EPOCHS if epochs is None else epochs
    lr = settings.DEFAULT_LR if lr is None else lr

    ablations = EXTENDED_ABLATIONS if extended else ABLATION_ORDER
    jobs = [(ablation, seed, spec, base_config, epochs, lr) for ablation in ablations for seed in seeds]
    logger.info(f"Running {len(jobs)} ablation jobs on {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ablation_job, jobs))
    else:
        rows = [_ablation_job(job) for job in jobs]
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
