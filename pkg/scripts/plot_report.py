#!/usr/bin/env python3
"""
Report Plotting Script

This script redraws the charts of finished runs from their CSV files: training
curves from a metrics.csv, the ablation bar chart from an ablation.csv.
"""

import os
import sys
import pandas as pd

# Add the parent directory to the path so we can import from vchgcl
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vchgcl.analytics.statistics import summarize_ablation
from vchgcl.visualization.charts import plot_ablation, plot_training_curves
from vchgcl.visualization.formatters import read_metrics_csv


def main():
    """Main function to redraw the charts of a run directory."""
    run_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(".", "runs")

    metrics_path = os.path.join(run_dir, "metrics.csv")
    ablation_path = os.path.join(run_dir, "ablation.csv")
    if not os.path.exists(metrics_path) and not os.path.exists(ablation_path):
        print(f"Error: no metrics.csv or ablation.csv found in {run_dir}")
        sys.exit(1)

    if os.path.exists(metrics_path):
        print(f"Loading metrics from {metrics_path}...")
        metrics = read_metrics_csv(metrics_path)
        chart = plot_training_curves(metrics, os.path.join(run_dir, "training_curves.png"),
                                     title=os.path.basename(os.path.abspath(run_dir)))
        print(f"Training curves saved to {chart}")

    if os.path.exists(ablation_path):
        print(f"Loading ablation rows from {ablation_path}...")
        rows = pd.read_csv(ablation_path)
        chart = plot_ablation(rows, os.path.join(run_dir, "ablation.png"))
        print(f"Ablation chart saved to {chart}")
        print(summarize_ablation(rows).to_string(index=False, float_format=lambda v: f"{v:.4f}"))

    print("Plotting complete!")


if __name__ == "__main__":
    main()
