from .colored_mnist import (
    DIGIT_IMAGE_SIZE,
    dominant_hue_index,
    generate_colored_mnist,
    grayscale_of,
    hue_palette,
    recolor,
)
from .corrupted_cifar10 import generate_corrupted_cifar10
from .corruptions import (
    CORRUPTIONS,
    DEFAULT_SEVERITY,
    MANDATORY_CORRUPTIONS,
    UnknownCorruptionError,
    apply_corruption,
    register_corruption,
)
from .manifest import ChecksumError, ManifestError, image_checksum, load_manifest, write_manifest
from .sources import ImageSource, load_idx_digit_source, load_pickled_batch_source, render_digit_source
from .types import BiasedDataset, BiasedDatasetSpec, LabeledExample

__all__ = [
    "BiasedDataset",
    "BiasedDatasetSpec",
    "ChecksumError",
    "CORRUPTIONS",
    "DEFAULT_SEVERITY",
    "DIGIT_IMAGE_SIZE",
    "ImageSource",
    "LabeledExample",
    "MANDATORY_CORRUPTIONS",
    "ManifestError",
    "UnknownCorruptionError",
    "apply_corruption",
    "dominant_hue_index",
    "generate_colored_mnist",
    "generate_corrupted_cifar10",
    "grayscale_of",
    "hue_palette",
    "image_checksum",
    "load_idx_digit_source",
    "load_manifest",
    "load_pickled_batch_source",
    "recolor",
    "register_corruption",
    "render_digit_source",
    "write_manifest",
]
