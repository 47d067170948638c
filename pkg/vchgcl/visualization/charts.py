import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from vchgcl.core.schemas import ABLATION_ORDER, EXTENDED_ABLATIONS, AttentionRecord


def _save(filepath: str) -> str:
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)
    plt.tight_layout()
    plt.savefig(filepath, dpi=150, bbox_inches="tight")
    plt.close()
    return filepath


def plot_training_curves(metrics: pd.DataFrame, filepath: str, title: str = "Training curves") -> str:
    """
    Plot loss, accuracy and branch similarities against the epoch.

    Args:
        metrics: One row per epoch with the metrics file columns
        filepath: The path to save the chart to
        title: The title of the chart

    Returns:
        The path to the saved chart
    """
    sns.set_style("whitegrid")
    fig, (loss_ax, metric_ax) = plt.subplots(1, 2, figsize=(12, 5))

    trained = metrics[metrics["epoch"] > 0]
    sns.lineplot(data=trained, x="epoch", y="train_loss", marker="o", ax=loss_ax)
    loss_ax.set_title("Training loss", fontsize=14)

    long = metrics.melt(id_vars="epoch",
                        value_vars=["eval_accuracy", "pos_similarity", "neg_similarity", "signal_attention"],
                        var_name="metric", value_name="value")
    sns.lineplot(data=long, x="epoch", y="value", hue="metric", marker="o", ax=metric_ax)
    metric_ax.set_title("Evaluation", fontsize=14)

    fig.suptitle(title, fontsize=16)
    return _save(filepath)


def plot_ablation(rows: pd.DataFrame, filepath: str, title: str = "Ablation accuracy") -> str:
    """Bar chart of accuracy per ablation; error bars span seeds."""
    sns.set_style("whitegrid")
    plt.figure(figsize=(10, 6))
    present = {getattr(v, "value", v) for v in rows["ablation"]}
    order = [a.value for a in ABLATION_ORDER]
    order += [a.value for a in EXTENDED_ABLATIONS[len(ABLATION_ORDER):] if a.value in present]
    ax = sns.barplot(data=rows, x="ablation", y="accuracy", order=order, errorbar="se", palette="viridis",
                     hue="ablation", hue_order=order, legend=False)

    means = rows.groupby("ablation")["accuracy"].mean()
    for patch, name in zip(ax.patches, order):
        if name in means:
            ax.annotate(f"{means[name]:.3f}", (patch.get_x() + patch.get_width() / 2., patch.get_height()),
                        ha="center", va="bottom", fontsize=10, xytext=(0, 5), textcoords="offset points")

    plt.title(title, fontsize=16)
    plt.xlabel("Ablation", fontsize=12)
    plt.ylabel("Accuracy", fontsize=12)
    return _save(filepath)


def plot_edge_heatmap(edges: np.ndarray, node_kinds: Sequence[str], filepath: str,
                      title: str = "Gated edge scores") -> str:
    """Heatmap of a gated edge matrix with visual/text node labels."""
    labels = [f"{kind[0].upper()}{i}" for i, kind in enumerate(node_kinds)]
    plt.figure(figsize=(8, 7))
    sns.heatmap(pd.DataFrame(edges, index=labels, columns=labels), cmap="coolwarm", center=0.0,
                square=True, linewidths=0.5)
    plt.title(title, fontsize=16)
    return _save(filepath)


def plot_attention_record(record: AttentionRecord, filepath: str, candidate: Optional[int] = None) -> Optional[str]:
    """
    Edge heatmap of one candidate from an attention dump.

    Defaults to the predicted candidate. Returns None when the record has no
    edges (relation module without a graph).
    """
    index = record.prediction if candidate is None else candidate
    entry = record.candidates[index]
    if entry.gated_edges is None:
        return None
    return plot_edge_heatmap(np.array(entry.gated_edges), entry.node_kinds, filepath,
                             title=f"Gated edges, instance {record.uid}, candidate {index}")
