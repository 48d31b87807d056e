"""On-disk dataset format: tensor blobs + newline-delimited metadata manifest.

Layout of a dataset directory:

    dataset_spec.json   spec echo + format version
    manifest.jsonl      one record per example: example_id, split, target,
                        gt_bias_flag, pseudo_bias_label, bias_attr, blob_index,
                        checksum, provenance
    blob_<split>.npy    float32 image stack for the split, indexed by blob_index

Checksums are sha256 over the raw image bytes; a tampered blob is reported with
the offending example_id at load time.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .types import BiasedDataset, BiasedDatasetSpec, LabeledExample

MANIFEST_FORMAT_VERSION = 1


class ManifestError(ValueError):
    pass


class ChecksumError(ManifestError):
    def __init__(self, example_id: str):
        super().__init__(f"checksum mismatch for example {example_id!r}")
        self.example_id = example_id


def image_checksum(image: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(image).tobytes()).hexdigest()


def write_manifest(dataset: BiasedDataset, out_dir) -> Path:
    """Persist a dataset directory; returns its path. Round-trips exactly."""
    if not any(dataset.splits.values()):
        raise ManifestError("refusing to write an empty dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "dataset_spec.json", "w") as f:
        json.dump(
            {"format_version": MANIFEST_FORMAT_VERSION, "spec": dataset.spec.to_json_dict()},
            f,
            indent=2,
        )

    records = []
    for split_name, examples in sorted(dataset.splits.items()):
        if not examples:
            continue
        blob = np.stack([ex.image for ex in examples]).astype(np.float32)
        np.save(out / f"blob_{split_name}.npy", blob)
        for i, ex in enumerate(examples):
            rec = {
                "example_id": ex.example_id,
                "split": split_name,
                "target": int(ex.target),
                "gt_bias_flag": ex.gt_bias_flag,
                "pseudo_bias_label": ex.pseudo_bias_label,
                "bias_attr": ex.bias_attr,
                "blob_index": i,
                "checksum": image_checksum(ex.image),
            }
            if ex.provenance is not None:
                rec["provenance"] = ex.provenance
            records.append(rec)

    with open(out / "manifest.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return out


def load_manifest(path) -> BiasedDataset:
    """Load a dataset directory, verifying every record's checksum."""
    root = Path(path)
    spec_path = root / "dataset_spec.json"
    if not spec_path.exists():
        raise ManifestError(f"{root}: missing dataset_spec.json")
    with open(spec_path) as f:
        header = json.load(f)
    if header.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format {header.get('format_version')!r}")
    spec = BiasedDatasetSpec.from_json_dict(header["spec"])

    blobs = {}
    splits: dict = {}
    with open(root / "manifest.jsonl") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"manifest line {line_no}: corrupt record ({e})") from None
            split_name = rec["split"]
            if split_name not in blobs:
                blob_path = root / f"blob_{split_name}.npy"
                if not blob_path.exists():
                    raise ManifestError(f"{rec['example_id']}: missing blob file {blob_path.name}")
                blobs[split_name] = np.load(blob_path)
            blob = blobs[split_name]
            idx = rec["blob_index"]
            if idx >= len(blob):
                raise ManifestError(f"{rec['example_id']}: blob_index {idx} out of range")
            image = blob[idx]
            if image_checksum(image) != rec["checksum"]:
                raise ChecksumError(rec["example_id"])
            gt = rec["gt_bias_flag"]
            pseudo = rec["pseudo_bias_label"]
            splits.setdefault(split_name, []).append(
                LabeledExample(
                    example_id=rec["example_id"],
                    image=image,
                    target=int(rec["target"]),
                    gt_bias_flag=None if gt is None else bool(gt),
                    bias_attr=rec.get("bias_attr"),
                    pseudo_bias_label=None if pseudo is None else int(pseudo),
                    provenance=rec.get("provenance"),
                )
            )
    return BiasedDataset(spec=spec, splits=splits)
