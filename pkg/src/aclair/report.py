"""Rendering: training metrics to CSV and loss-curve plots, evaluation
results to a flat accuracy table."""

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_metrics(path):
    lines = [json.loads(s) for s in Path(path).read_text().splitlines() if s.strip()]
    return lines


def metrics_to_csv(records, out_path):
    if not records:
        raise ValueError("no metric records to render")
    fields = list(records[0])
    with open(out_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(records)


def plot_losses(records, out_path):
    epochs = [r["epoch"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("total", "acl_loss"):
        ax1.plot(epochs, [r[key] for r in records], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    for key in ("sir", "air"):
        ax2.plot(epochs, [r[key] for r in records], label=key)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("regularizer")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def results_to_csv(results, out_path):
    """Flatten an evaluation results dict into protocol/metric/value rows."""
    rows = [("protocol", results.get("protocol", "")),
            ("dataset", results.get("dataset", "")),
            ("standard_acc", results.get("standard_acc", "")),
            ("robust_acc", results.get("robust_acc", ""))]
    for kind, sevs in results.get("corruption", {}).get("per_kind", {}).items():
        for sev, acc in sevs.items():
            rows.append((f"corruption/{kind}/severity_{sev}", acc))
    for sev, acc in results.get("corruption", {}).get("mean", {}).items():
        rows.append((f"corruption/mean/severity_{sev}", acc))
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerows(rows)
