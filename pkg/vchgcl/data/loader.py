import logging
import os
from typing import List, Tuple

import numpy as np
import pandas as pd

from vchgcl.core.errors import ContractError
from vchgcl.core.schemas import SynthSpec
from vchgcl.model.fusion import ObjectFrame
from vchgcl.model.pipeline import QAInstance

logger = logging.getLogger(__name__)

SPLITS = ("train", "eval")
SPEC_FILE = "spec.json"


def _split_arrays(instances: List[QAInstance]) -> dict:
    return {
        "f_o": np.stack([[frame.f_o.data for frame in inst.frames] for inst in instances]),
        "f_vc": np.stack([[frame.f_vc.data for frame in inst.frames] for inst in instances]),
        "bboxes": np.stack([[np.array(frame.bboxes) for frame in inst.frames] for inst in instances]),
        "appearance": np.stack([inst.appearance.data for inst in instances]),
        "question": np.stack([inst.question_tokens.data for inst in instances]),
        "candidates": np.stack([[c.data for c in inst.candidates] for inst in instances]),
    }


def _split_frame(instances: List[QAInstance]) -> pd.DataFrame:
    return pd.DataFrame({
        "uid": [inst.uid for inst in instances],
        "correct_index": [inst.correct_index for inst in instances],
        "signal_object": [inst.signal_object for inst in instances],
        "context_object": [inst.context_object for inst in instances],
        "spurious": [inst.spurious for inst in instances],
        "answer_concepts": [" ".join(str(k) for k in inst.answer_concepts or []) for inst in instances],
    })


def save_dataset(directory: str, spec: SynthSpec, train: List[QAInstance],
                 evaluation: List[QAInstance]) -> str:
    """
    Write a generated dataset to ``directory``.

    Layout: ``spec.json`` plus ``<split>.npz`` (stacked feature arrays) and
    ``<split>.csv`` (per-instance labels and generator metadata) for each split.
    """
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, SPEC_FILE), "w", encoding="utf-8") as f:
        f.write(spec.model_dump_json(indent=2))
    for split, instances in zip(SPLITS, (train, evaluation)):
        if instances:
            np.savez(os.path.join(directory, f"{split}.npz"), **_split_arrays(instances))
        _split_frame(instances).to_csv(os.path.join(directory, f"{split}.csv"), index=False)
    logger.info(f"Dataset saved to {directory} ({len(train)} train, {len(evaluation)} eval)")
    return directory


def _load_split(directory: str, split: str) -> List[QAInstance]:
    csv_path = os.path.join(directory, f"{split}.csv")
    if not os.path.exists(csv_path):
        raise ContractError(f"dataset split not found at {csv_path}")
    meta = pd.read_csv(csv_path)
    if meta.empty:
        return []
    npz_path = os.path.join(directory, f"{split}.npz")
    if not os.path.exists(npz_path):
        raise ContractError(f"{split} labels have no feature arrays at {npz_path}")
    arrays = np.load(npz_path)
    if len(arrays["f_o"]) != len(meta):
        raise ContractError(f"{split} arrays hold {len(arrays['f_o'])} instances, labels hold {len(meta)}")

    instances = []
    for i, row in enumerate(meta.itertuples(index=False)):
        frames = [ObjectFrame(f_o=f_o, f_vc=f_vc, bboxes=[tuple(b) for b in boxes])
                  for f_o, f_vc, boxes in zip(arrays["f_o"][i], arrays["f_vc"][i], arrays["bboxes"][i])]
        instances.append(QAInstance(
            frames=frames,
            appearance=arrays["appearance"][i],
            question_tokens=arrays["question"][i],
            candidates=list(arrays["candidates"][i]),
            correct_index=int(row.correct_index),
            uid=int(row.uid),
            signal_object=int(row.signal_object),
            context_object=int(row.context_object),
            spurious=bool(row.spurious),
            answer_concepts=[int(k) for k in str(row.answer_concepts).split()],
        ))
    return instances


def load_dataset(directory: str) -> Tuple[SynthSpec, List[QAInstance], List[QAInstance]]:
    """Read a dataset written by ``save_dataset``."""
    spec_path = os.path.join(directory, SPEC_FILE)
    if not os.path.exists(spec_path):
        raise ContractError(f"no dataset found at {directory}")
    with open(spec_path, "r", encoding="utf-8") as f:
        spec = SynthSpec.model_validate_json(f.read())
    train, evaluation = (_load_split(directory, split) for split in SPLITS)
    logger.info(f"Dataset loaded from {directory} ({len(train)} train, {len(evaluation)} eval)")
    return spec, train, evaluation
