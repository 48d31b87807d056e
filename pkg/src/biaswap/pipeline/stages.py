"""Stage orchestration: artifacts, dependency checks, idempotent reruns.

Every stage writes into ``<run_root>/<config-hash>/<stage>/`` and drops a
completion marker once done. Rerunning a completed stage with an unchanged
config hash is a no-op unless forced; running a stage whose upstream marker is
missing fails with the name of the stage to run first.
"""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from ..augment import build_pairs, generate_bias_swapped, oracle_recolor_swap, union_dataset
from ..cam import ImportanceMap, compute_cam_batch, to_sampling_distribution
from ..datasets import (
    generate_colored_mnist,
    generate_corrupted_cifar10,
    load_idx_digit_source,
    load_manifest,
    load_pickled_batch_source,
    render_digit_source,
    write_manifest,
)
from ..partition import (
    apply_partition,
    assign_pseudo_labels,
    partition_from_labels,
    partition_metrics,
    load_partition_csv,
    report_thresholds,
    save_partition_csv,
    score_dataset,
)
from ..swapae.trainer import PairBatch, load_swapae_checkpoint, train_swap_autoencoder
from ..training import load_checkpoint, train_classifier
from .config import PipelineConfig
from .evaluate import MetricsReport, METRICS_SCHEMA_VERSION, evaluate_classifier, save_evaluations_json
from .report import emit_report

log = logging.getLogger(__name__)

STAGES = ("data", "biased_train", "partition", "swapae_train", "augment", "debias_train", "evaluate", "report")

MARKER_NAME = ".complete.json"


class MissingUpstreamError(RuntimeError):
    def __init__(self, stage: str, missing: str):
        super().__init__(f"stage {stage!r}: {missing} required")
        self.stage = stage
        self.missing = missing


class StageError(RuntimeError):
    pass


def stage_dependencies(config: PipelineConfig, stage: str) -> tuple:
    deps = {
        "data": (),
        "biased_train": ("data",),
        "partition": ("data", "biased_train"),
        "swapae_train": ("data", "biased_train", "partition"),
        "augment": ("data", "partition", "swapae_train"),
        "debias_train": ("data", "augment"),
        "evaluate": ("data", "partition", "debias_train"),
        "report": ("evaluate",),
    }[stage]
    if stage == "augment" and config["augment.oracle_swap"]:
        deps = tuple(d for d in deps if d != "swapae_train")
    return deps


def _stage_dir(config: PipelineConfig, stage: str) -> Path:
    return config.run_dir() / stage


def stage_complete(config: PipelineConfig, stage: str) -> bool:
    marker = _stage_dir(config, stage) / MARKER_NAME
    if not marker.exists():
        return False
    recorded = json.loads(marker.read_text()).get("config_hash")
    return recorded == config.config_hash()


def _write_marker(config: PipelineConfig, stage: str, elapsed: float) -> None:
    marker = {
        "stage": stage,
        "config_hash": config.config_hash(),
        "elapsed_seconds": round(elapsed, 3),
        "completed_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(_stage_dir(config, stage) / MARKER_NAME, "w") as f:
        json.dump(marker, f, indent=2)


def run_stage(config: PipelineConfig, stage: str, force: bool = False) -> Path:
    """Execute one stage; no-op if already complete under this config hash."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; stages: {STAGES}")
    out = _stage_dir(config, stage)
    if stage_complete(config, stage) and not force:
        log.info("stage %s already complete for %s; skipping", stage, config.config_hash())
        return out
    for dep in stage_dependencies(config, stage):
        if not stage_complete(config, dep):
            raise MissingUpstreamError(stage, dep)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    _STAGE_IMPLS[stage](config, out)
    _write_marker(config, stage, time.time() - started)
    log.info("stage %s done in %.1fs", stage, time.time() - started)
    return out


def run_all(config: PipelineConfig, force: bool = False) -> Path:
    """Run every stage in order (the generator stage is skipped under oracle swap)."""
    for stage in STAGES:
        if stage == "swapae_train" and config["augment.oracle_swap"]:
            continue
        run_stage(config, stage, force=force)
    return config.run_dir()


C1_OVERRIDES = {"augment.pairing_policy": "random_pairs"}
C2_OVERRIDES = {"swapae.crop_mode": "uniform"}


def ablation_config(config: PipelineConfig, which: str) -> PipelineConfig:
    overrides = {"c1": C1_OVERRIDES, "c2": C2_OVERRIDES, "c1+c2": {**C1_OVERRIDES, **C2_OVERRIDES}}.get(which)
    if overrides is None:
        raise ValueError(f"unknown ablation {which!r}; expected c1, c2 or c1+c2")
    return config.with_overrides(overrides)


def run_ablation(config: PipelineConfig, which: str, force: bool = False) -> tuple:
    """Run the full pipeline and its ablated twin (same seeds); returns both reports."""
    full = config
    ablated = ablation_config(config, which)
    run_all(full, force=force)
    run_all(ablated, force=force)
    return read_metrics_report(full), read_metrics_report(ablated)


def read_metrics_report(config: PipelineConfig) -> MetricsReport:
    path = _stage_dir(config, "evaluate") / "metrics_fragment.json"
    with open(path) as f:
        return MetricsReport.from_json_dict(json.load(f))


# --- stage implementations --------------------------------------------------


def _load_source(config: PipelineConfig, total_needed: int):
    source = config["dataset.source"]
    kind = config["dataset.kind"]
    if source == "synthetic_digits":
        if kind != "colored_mnist":
            raise StageError("synthetic_digits source only feeds colored_mnist; provide a file source")
        return render_digit_source(total_needed, seed=config.stage_seed("source"), image_size=config["dataset.image_size"])
    if source.startswith("idx:"):
        images_path, labels_path = source[len("idx:") :].split(",")
        return load_idx_digit_source(images_path, labels_path)
    if source.startswith("pickle:"):
        return load_pickled_batch_source(source[len("pickle:") :].split(","))
    raise StageError(f"unknown dataset.source {source!r}")


def _dataset_dir(config: PipelineConfig) -> Path:
    return _stage_dir(config, "data") / "dataset"


def _stage_data(config: PipelineConfig, out: Path) -> None:
    spec = config.dataset_spec()
    source = _load_source(config, sum(spec.split_sizes.values()))
    if spec.dataset_kind == "colored_mnist":
        dataset = generate_colored_mnist(spec, source)
    else:
        dataset = generate_corrupted_cifar10(spec, source)
    write_manifest(dataset, out / "dataset")


def _stage_biased_train(config: PipelineConfig, out: Path) -> None:
    train_cfg = config.biased_train_config()
    if train_cfg.snapshot_epoch is None or train_cfg.snapshot_epoch > train_cfg.epochs:
        raise StageError(
            f"biased.snapshot_epoch {train_cfg.snapshot_epoch} must be <= biased.epochs {train_cfg.epochs}"
        )
    dataset = load_manifest(_dataset_dir(config))
    train_classifier(dataset.split("train"), config.biased_classifier_spec(), train_cfg, checkpoint_dir=out)


def _snapshot_path(config: PipelineConfig) -> Path:
    return _stage_dir(config, "biased_train") / f"snapshot_epoch{config['biased.snapshot_epoch']}.pt"


def _stage_partition(config: PipelineConfig, out: Path) -> None:
    dataset = load_manifest(_dataset_dir(config))
    train = dataset.split("train")
    scorer = load_checkpoint(_snapshot_path(config))
    scores = score_dataset(scorer, train)
    part = assign_pseudo_labels(scores, targets={ex.example_id: ex.target for ex in train})
    apply_partition(train, part)
    save_partition_csv(out / "partition.csv", scores, part)

    gt_flags = {ex.example_id: ex.gt_bias_flag for ex in train}
    metrics = partition_metrics(part, gt_flags)
    threshold_report = report_thresholds(part)
    payload = metrics.to_json_dict()
    payload["threshold"] = part.threshold
    payload["n_guiding"] = threshold_report["n_guiding"]
    payload["n_contrary"] = threshold_report["n_contrary"]
    with open(out / "metrics.json", "w") as f:
        json.dump(payload, f, indent=2)
    (out / "threshold_report.txt").write_text(threshold_report["summary"] + "\n")


def _load_partition(config: PipelineConfig):
    scores, labels = load_partition_csv(_stage_dir(config, "partition") / "partition.csv")
    with open(_stage_dir(config, "partition") / "metrics.json") as f:
        threshold = json.load(f)["threshold"]
    return partition_from_labels(labels, threshold)


def _make_cam_provider(config: PipelineConfig):
    trained = load_checkpoint(_stage_dir(config, "biased_train") / "final.pt")
    temperature = config["swapae.temperature"]

    def provider(images_nhwc: np.ndarray, targets) -> list:
        maps = compute_cam_batch(trained, images_nhwc, [int(t) for t in targets])
        return [
            to_sampling_distribution(ImportanceMap(values=m, class_index=int(t)), temperature)
            for m, t in zip(maps, targets)
        ]

    return provider


def _make_pair_provider(config: PipelineConfig, dataset, partition):
    """Stochastic per-step pairing for generator training."""
    train = dataset.split("train")
    by_id = {ex.example_id: ex for ex in train}
    images = np.stack([ex.image for ex in train]).astype(np.float32)
    targets = np.array([ex.target for ex in train], dtype=np.int64)
    row_of = {ex.example_id: i for i, ex in enumerate(train)}

    if config["augment.pairing_policy"] == "random_pairs":
        n = len(train)

        def provider(batch_size, rng):
            idx = rng.integers(0, n, size=batch_size)
            jdx = rng.integers(0, n, size=batch_size)
            return PairBatch(images[idx], images[jdx], targets[idx], targets[jdx])

        return provider

    guiding_rows = np.array(sorted(row_of[i] for i in partition.guiding_ids), dtype=np.int64)
    contrary_rows_by_class: dict = {}
    for ex_id in sorted(partition.contrary_ids):
        contrary_rows_by_class.setdefault(by_id[ex_id].target, []).append(row_of[ex_id])
    all_contrary_rows = np.array(sorted(row_of[i] for i in partition.contrary_ids), dtype=np.int64)
    if len(all_contrary_rows) == 0:
        raise StageError("partition has no contrary examples; cannot form style pools")
    class_matching = config["augment.class_matching"]
    pools = {
        c: np.array(rows, dtype=np.int64) for c, rows in contrary_rows_by_class.items()
    }

    def provider(batch_size, rng):
        idx = guiding_rows[rng.integers(0, len(guiding_rows), size=batch_size)]
        jdx = np.empty(batch_size, dtype=np.int64)
        for b, content_row in enumerate(idx):
            pool = pools.get(int(targets[content_row])) if class_matching else None
            if pool is None or len(pool) == 0:
                pool = all_contrary_rows
            jdx[b] = pool[rng.integers(0, len(pool))]
        return PairBatch(images[idx], images[jdx], targets[idx], targets[jdx])

    return provider


def _stage_swapae_train(config: PipelineConfig, out: Path) -> None:
    dataset = load_manifest(_dataset_dir(config))
    partition = _load_partition(config)
    provider = _make_pair_provider(config, dataset, partition)
    swap_cfg = config.swapae_config()
    cam_provider = _make_cam_provider(config) if swap_cfg.crop_mode == "bias_tailored" else None
    train_swap_autoencoder(provider, swap_cfg, cam_provider=cam_provider, out_dir=out)


def _stage_augment(config: PipelineConfig, out: Path) -> None:
    dataset = load_manifest(_dataset_dir(config))
    partition = _load_partition(config)
    apply_partition(dataset.split("train"), partition)
    plan = config.augmentation_plan()
    pairs = build_pairs(partition, dataset.split("train"), plan)
    with open(out / "pairs.csv", "w") as f:
        f.write("content_id,style_id\n")
        for content_id, style_id in pairs:
            f.write(f"{content_id},{style_id}\n")

    if config["augment.oracle_swap"]:
        swapped = oracle_recolor_swap(pairs, dataset)
    else:
        state = load_swapae_checkpoint(_stage_dir(config, "swapae_train") / "final.pt")
        swapped = generate_bias_swapped(state, pairs, dataset)
    augmented = union_dataset(dataset, swapped)
    write_manifest(augmented, out / "dataset")
    with open(out / "augment_summary.json", "w") as f:
        json.dump(
            {
                "plan": plan.to_json_dict(),
                "n_pairs": len(pairs),
                "n_generated": len(swapped),
                "n_train_original": len(dataset.split("train")),
                "n_train_augmented": len(augmented.split("train")),
            },
            f,
            indent=2,
        )


def _stage_debias_train(config: PipelineConfig, out: Path) -> None:
    augmented = load_manifest(_stage_dir(config, "augment") / "dataset")
    original = load_manifest(_dataset_dir(config))
    spec = config.debias_classifier_spec()
    train_cfg = config.debias_train_config()
    # identical TrainConfig and seed; the only difference is the training set
    train_classifier(augmented.split("train"), spec, train_cfg, checkpoint_dir=out / "debiased")
    train_classifier(original.split("train"), spec, train_cfg, checkpoint_dir=out / "vanilla")


def _stage_evaluate(config: PipelineConfig, out: Path) -> None:
    dataset = load_manifest(_dataset_dir(config))
    debiased = load_checkpoint(_stage_dir(config, "debias_train") / "debiased" / "final.pt")
    vanilla = load_checkpoint(_stage_dir(config, "debias_train") / "vanilla" / "final.pt")
    debiased_eval = evaluate_classifier(debiased, dataset)
    vanilla_eval = evaluate_classifier(vanilla, dataset)
    save_evaluations_json(out / "debiased_evaluations.json", debiased_eval)
    save_evaluations_json(out / "vanilla_evaluations.json", vanilla_eval)

    with open(_stage_dir(config, "partition") / "metrics.json") as f:
        part_metrics = json.load(f)
    fragment = MetricsReport(
        schema_version=METRICS_SCHEMA_VERSION,
        config_hash=config.config_hash(),
        ablation_tag=config.ablation_tag(),
        seed=config["seed"],
        unbiased_accuracy=debiased_eval["unbiased"].accuracy,
        bias_guiding_accuracy=debiased_eval["guiding"].accuracy,
        bias_contrary_accuracy=debiased_eval["contrary"].accuracy if "contrary" in debiased_eval else None,
        vanilla_unbiased_accuracy=vanilla_eval["unbiased"].accuracy,
        vanilla_guiding_accuracy=vanilla_eval["guiding"].accuracy,
        partition_precision=part_metrics["precision"],
        partition_recall=part_metrics["recall"],
        partition_f1=part_metrics["f1"],
        partition_threshold=part_metrics["threshold"],
        bias_ratio=config["dataset.bias_ratio"],
        loss_curves={
            "biased": "biased_train/loss_curve.csv",
            "debiased": "debias_train/debiased/loss_curve.csv",
            "vanilla": "debias_train/vanilla/loss_curve.csv",
        },
    )
    with open(out / "metrics_fragment.json", "w") as f:
        json.dump(fragment.to_json_dict(), f, indent=2, sort_keys=True)


def _stage_report(config: PipelineConfig, out: Path) -> None:
    emit_report([read_metrics_report(config)], out)


_STAGE_IMPLS = {
    "data": _stage_data,
    "biased_train": _stage_biased_train,
    "partition": _stage_partition,
    "swapae_train": _stage_swapae_train,
    "augment": _stage_augment,
    "debias_train": _stage_debias_train,
    "evaluate": _stage_evaluate,
    "report": _stage_report,
}
