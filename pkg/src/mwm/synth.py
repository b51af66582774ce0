"""Synthetic blob corpus: the provider-free stand-in for gated datasets.

Each sample is a grayscale image with one bright Gaussian-blob "lesion",
a matching saliency map, and a ground-truth disk mask. Geometry is tuned
so that the K-Means foreground core of the saliency map sits inside the
ground-truth disk and the margin-expanded ROI box covers it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import grids
from .planner import derive_seed


@dataclass(frozen=True)
class BlobSample:
    image_id: str
    image: np.ndarray
    saliency: np.ndarray
    gt_mask: np.ndarray
    center: tuple[float, float]
    sigma: float


# Ground-truth disk radius in units of the blob sigma. At 1.6 sigma the
# saliency there is exp(-1.28) ~ 0.28, safely above typical K-Means
# midpoints on these maps, so the foreground core stays inside the disk.
GT_RADIUS_SIGMA = 1.6


def make_blob_sample(image_id: str, size: int, seed: int) -> BlobSample:
    rng = np.random.default_rng(seed)
    cy = rng.uniform(0.35, 0.65) * size
    cx = rng.uniform(0.35, 0.65) * size
    sigma = rng.uniform(0.06, 0.09) * size

    yy, xx = np.mgrid[0:size, 0:size]
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    blob = np.exp(-d2 / (2 * sigma**2))

    saliency = blob.astype(np.float32)
    noise = rng.normal(0.0, 0.015, size=(size, size))
    image = np.clip(0.25 + 0.6 * blob + noise, 0.0, 1.0).astype(np.float32)
    gt_mask = (d2 <= (GT_RADIUS_SIGMA * sigma) ** 2).astype(np.uint8)
    return BlobSample(image_id, image, saliency, gt_mask, (cy, cx), float(sigma))


def generate_dataset(out_dir: str | os.PathLike, n: int, master_seed: int, size: int = 64) -> list[str]:
    """Write n samples; per-sample seeds derive from the master seed so the
    corpus is byte-identical across reruns. Returns the image ids."""
    os.makedirs(out_dir, exist_ok=True)
    ids = []
    for i in range(n):
        image_id = f"blob{i:04d}"
        sample = make_blob_sample(image_id, size, derive_seed(master_seed, image_id))
        grids.save_grid(os.path.join(out_dir, f"{image_id}.image.mwmg"), sample.image)
        grids.save_grid(os.path.join(out_dir, f"{image_id}.saliency.mwmg"), sample.saliency)
        grids.save_mask_pgm(os.path.join(out_dir, f"{image_id}.gt.pgm"), sample.gt_mask)
        ids.append(image_id)
    return ids


def list_image_ids(data_dir: str | os.PathLike) -> list[str]:
    ids = sorted(
        name[: -len(".image.mwmg")]
        for name in os.listdir(data_dir)
        if name.endswith(".image.mwmg")
    )
    return ids
