import logging
import os
from typing import Optional

import pandas as pd

from vchgcl.analytics.statistics import ABLATION_COLUMNS
from vchgcl.core.schemas import (
    AttentionRecord,
    CandidateAttention,
    EpochRecord,
    ModelConfig,
    ObjectAttention,
    RunReport,
)
from vchgcl.model.pipeline import ForwardResult, QAInstance, VCHGCLModel, argmax_first, forward

logger = logging.getLogger(__name__)

# fixed precision so identical runs give byte-identical files
FLOAT_FORMAT = "%.10g"


def _ensure_parent(filepath: str) -> None:
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_metrics_csv(report: RunReport, filepath: str) -> str:
    """
    Write one row per epoch.

    Columns: epoch, train_loss, eval_accuracy, pos_similarity, neg_similarity,
    signal_attention.
    """
    _ensure_parent(filepath)
    report.to_frame().to_csv(filepath, index=False, float_format=FLOAT_FORMAT)
    return filepath


def read_metrics_csv(filepath: str) -> pd.DataFrame:
    return pd.read_csv(filepath)[list(EpochRecord.model_fields)]


def write_ablation_csv(rows: pd.DataFrame, filepath: str) -> str:
    """Write one row per (ablation, seed)."""
    _ensure_parent(filepath)
    rows[ABLATION_COLUMNS].to_csv(filepath, index=False, float_format=FLOAT_FORMAT)
    return filepath


def attention_record(instance: QAInstance, result: ForwardResult, config: ModelConfig) -> AttentionRecord:
    """
    Collect the attention weights of one forward pass, keyed by object index and box.

    Object weights are per frame and only exist for video instances; node weights
    and gated edges are reported for every candidate.
    """
    diagnostics = result.diagnostics
    alpha = diagnostics.object_alpha
    objects = [ObjectAttention(index=i, box=tuple(float(v) for v in box),
                               alpha=[] if alpha is None else [float(a) for a in alpha[:, i]])
               for i, box in enumerate(instance.frames[0].bboxes)]
    scores = result.scores.scores.data
    candidates = [CandidateAttention(
        index=c,
        score=float(scores[c]),
        node_kinds=diagnostics.node_kinds[c],
        node_alpha=diagnostics.node_alpha[c].tolist(),
        gated_edges=None if diagnostics.gated_edges[c] is None else diagnostics.gated_edges[c].tolist(),
    ) for c in range(len(scores))]
    return AttentionRecord(uid=instance.uid, mode=config.mode, ablation=config.ablation,
                           correct_index=instance.correct_index, prediction=argmax_first(scores),
                           signal_object=instance.signal_object, objects=objects, candidates=candidates)


def dump_attention(instance: QAInstance, config: ModelConfig, model: VCHGCLModel, filepath: str) -> str:
    """Run one instance through a model and write its attention record as JSON."""
    record = attention_record(instance, forward(instance, config, model), config)
    _ensure_parent(filepath)
    with open(filepath, "w", encoding="utf-8") as f:
        f.write(record.model_dump_json(indent=2))
    logger.info(f"Attention for instance {instance.uid} written to {filepath}")
    return filepath


def load_attention(filepath: str) -> AttentionRecord:
    with open(filepath, "r", encoding="utf-8") as f:
        return AttentionRecord.model_validate_json(f.read())


def format_report(report: RunReport, title: Optional[str] = None) -> str:
    """Plain-text table of a run report for the console."""
    frame = report.to_frame()
    header = title or f"{report.ablation.value} (seed {report.seed})"
    return f"{header}\n{frame.to_string(index=False, float_format=lambda v: f'{v:.4f}')}"
