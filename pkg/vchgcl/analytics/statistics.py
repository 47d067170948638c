import numpy as np
import pandas as pd
from scipy import stats
from typing import Dict, Sequence, Tuple

from vchgcl.core.errors import ContractError
from vchgcl.core.schemas import ABLATION_ORDER, EXTENDED_ABLATIONS

ABLATION_COLUMNS = ["ablation", "seed", "accuracy", "pos_similarity", "neg_similarity", "signal_attention"]


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """
    Exact-match accuracy of argmax predictions.

    Args:
        predictions: Predicted candidate indices
        labels: Correct candidate indices

    Returns:
        Fraction of matching positions
    """
    if len(predictions) != len(labels):
        raise ContractError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not len(labels):
        raise ContractError("accuracy of an empty set")
    return float(np.mean(np.asarray(predictions) == np.asarray(labels)))


def ablation_order_key(values: pd.Series) -> pd.Series:
    rank = {ablation.value: i for i, ablation in enumerate(EXTENDED_ABLATIONS)}
    return values.map(lambda v: rank[getattr(v, "value", v)])


def summarize_ablation(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Aggregate per-seed ablation rows.

    Args:
        rows: One row per (ablation, seed) with the ablation table columns

    Returns:
        One row per ablation, in table order, with mean and standard error of the
        accuracy, mean similarities and the number of seeds
    """
    missing = set(ABLATION_COLUMNS) - set(rows.columns)
    if missing:
        raise ContractError(f"ablation rows lack columns {sorted(missing)}")

    grouped = rows.groupby("ablation", sort=False)
    summary = pd.DataFrame({
        "mean_accuracy": grouped["accuracy"].mean(),
        # standard error is undefined for a single seed
        "sem_accuracy": grouped["accuracy"].agg(lambda x: stats.sem(x) if len(x) > 1 else 0.0),
        "pos_similarity": grouped["pos_similarity"].mean(),
        "neg_similarity": grouped["neg_similarity"].mean(),
        "signal_attention": grouped["signal_attention"].mean(),
        "n_seeds": grouped["seed"].nunique(),
    }).reset_index()
    return summary.sort_values("ablation", key=ablation_order_key).reset_index(drop=True)


def ordering_by_seed(rows: pd.DataFrame) -> Dict[int, bool]:
    """For every seed, whether accuracy is non-decreasing along the ablation order."""
    table = rows.pivot_table(index="seed", columns="ablation", values="accuracy", aggfunc="mean")
    order = [a.value for a in ABLATION_ORDER]
    table.columns = [getattr(c, "value", c) for c in table.columns]
    if set(order) - set(table.columns):
        raise ContractError(f"ordering needs all of {order}, got {list(table.columns)}")
    values = table[order].to_numpy()
    holds = np.all(np.diff(values, axis=1) >= 0, axis=1)
    return {int(seed): bool(h) for seed, h in zip(table.index, holds)}


def ordering_majority(rows: pd.DataFrame) -> Tuple[int, int]:
    """
    Count the seeds in which Baseline <= VCOOnly <= MLPContrastive <= GRNContrastive.

    Returns:
        (seeds where the ordering holds, total seeds)
    """
    by_seed = ordering_by_seed(rows)
    return sum(by_seed.values()), len(by_seed)


def accuracy_gap(rows: pd.DataFrame, better: str, worse: str) -> float:
    """Mean accuracy of ``better`` minus mean accuracy of ``worse`` over seeds."""
    labels = rows["ablation"].map(lambda v: getattr(v, "value", v))
    means = rows.groupby(labels)["accuracy"].mean()
    if better not in means or worse not in means:
        raise ContractError(f"accuracy_gap needs rows for {better!r} and {worse!r}")
    return float(means[better] - means[worse])
