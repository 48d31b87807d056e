"""Aggregated run report: schema-validated JSON, a text summary, and plots."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .evaluate import METRICS_SCHEMA_VERSION, MetricsReport

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "fragments"],
    "properties": {
        "schema_version": {"const": METRICS_SCHEMA_VERSION},
        "fragments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": [
                    "schema_version",
                    "config_hash",
                    "ablation_tag",
                    "seed",
                    "unbiased_accuracy",
                    "bias_guiding_accuracy",
                    "vanilla_unbiased_accuracy",
                    "vanilla_guiding_accuracy",
                    "unbiased_delta_over_vanilla",
                ],
                "properties": {
                    "schema_version": {"const": METRICS_SCHEMA_VERSION},
                    "config_hash": {"type": "string"},
                    "ablation_tag": {"type": "string"},
                    "seed": {"type": "integer"},
                    "unbiased_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "bias_guiding_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "bias_contrary_accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "vanilla_unbiased_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "vanilla_guiding_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "partition_precision": {"type": ["number", "null"]},
                    "partition_recall": {"type": ["number", "null"]},
                    "partition_f1": {"type": ["number", "null"]},
                    "partition_threshold": {"type": ["number", "null"]},
                    "unbiased_delta_over_vanilla": {"type": "number"},
                    "loss_curves": {"type": "object"},
                    "bias_ratio": {"type": "number"},
                },
            },
        },
    },
}


def validate_report_payload(payload: dict) -> None:
    jsonschema.validate(payload, REPORT_SCHEMA)


def _summary_lines(fragments: list) -> list:
    lines = ["run summary", "==========="]
    for frag in fragments:
        lines.append(
            f"[{frag['ablation_tag']}] config {frag['config_hash']}"
            + (f" ratio {frag['bias_ratio']}" if "bias_ratio" in frag else "")
        )
        lines.append(
            f"  debiased: unbiased {frag['unbiased_accuracy']:.4f}"
            f"  guiding {frag['bias_guiding_accuracy']:.4f}"
        )
        lines.append(
            f"  vanilla:  unbiased {frag['vanilla_unbiased_accuracy']:.4f}"
            f"  guiding {frag['vanilla_guiding_accuracy']:.4f}"
        )
        lines.append(f"  unbiased delta over vanilla: {frag['unbiased_delta_over_vanilla']:+.4f}")
        if frag.get("partition_f1") is not None:
            lines.append(
                f"  partition P/R/F1: {frag['partition_precision']:.4f}"
                f" / {frag['partition_recall']:.4f} / {frag['partition_f1']:.4f}"
                f"  (threshold {frag['partition_threshold']:.6f})"
            )
    return lines


def plot_accuracy_vs_ratio(fragments: list, path) -> None:
    """Unbiased/guiding accuracy against the bias ratio, one x-tick per ratio."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_ratio = sorted((f["bias_ratio"], f) for f in fragments if "bias_ratio" in f)
    if not by_ratio:
        return
    ratios = [r for r, _ in by_ratio]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ratios, [f["unbiased_accuracy"] for _, f in by_ratio], "o-", label="debiased / unbiased")
    ax.plot(ratios, [f["vanilla_unbiased_accuracy"] for _, f in by_ratio], "s--", label="vanilla / unbiased")
    ax.plot(ratios, [f["bias_guiding_accuracy"] for _, f in by_ratio], "^-", label="debiased / guiding")
    ax.set_xticks(ratios)
    ax.set_xlabel("bias-guiding ratio")
    ax.set_ylabel("top-1 accuracy")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(reports: list, out_dir) -> dict:
    """Write report.json (schema v1), summary.txt and the accuracy plot.

    ``reports`` holds MetricsReport objects or already-serialized fragment
    dicts (so fragments from earlier runs can be aggregated).
    """
    if not reports:
        raise ValueError("need at least one metrics fragment")
    fragments = [r.to_json_dict() if isinstance(r, MetricsReport) else dict(r) for r in reports]
    payload = {"schema_version": METRICS_SCHEMA_VERSION, "fragments": fragments}
    validate_report_payload(payload)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    (out / "summary.txt").write_text("\n".join(_summary_lines(fragments)) + "\n")
    plot_accuracy_vs_ratio(fragments, out / "accuracy_vs_ratio.png")
    return payload
