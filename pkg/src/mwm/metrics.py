"""Occlusion precision/recall for predicted regions against ground truth.

precision = |pred ∩ gt| / |pred|, recall = |pred ∩ gt| / |gt|, computed
with exact pixel-set arithmetic. Boxes rasterize inclusively.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyGroundTruth, EmptyList, EmptyPrediction, ShapeMismatch
from .localization import RoiBox


@dataclass(frozen=True)
class OcclusionScore:
    precision: float
    recall: float
    intersection: int
    pred_area: int
    gt_area: int


def rasterize_box(box: RoiBox, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    if box.row_max >= h or box.col_max >= w:
        raise ShapeMismatch(f"box {box} exceeds image {shape}")
    mask = np.zeros(shape, dtype=np.uint8)
    mask[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] = 1
    return mask


def occlusion_metrics(pred: RoiBox | np.ndarray, gt: np.ndarray) -> OcclusionScore:
    gt = np.asarray(gt)
    pred_mask = rasterize_box(pred, gt.shape) if isinstance(pred, RoiBox) else np.asarray(pred)
    if pred_mask.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred_mask.shape} vs gt {gt.shape}")
    pred_area = int(np.count_nonzero(pred_mask))
    gt_area = int(np.count_nonzero(gt))
    if pred_area == 0:
        raise EmptyPrediction("predicted region has zero area")
    if gt_area == 0:
        raise EmptyGroundTruth("ground-truth mask is empty")
    inter = int(np.count_nonzero((pred_mask > 0) & (gt > 0)))
    return OcclusionScore(
        precision=inter / pred_area,
        recall=inter / gt_area,
        intersection=inter,
        pred_area=pred_area,
        gt_area=gt_area,
    )


def aggregate_scores(scores: Sequence[OcclusionScore]) -> tuple[float, float]:
    """Unweighted arithmetic means of precision and recall."""
    if not scores:
        raise EmptyList("cannot aggregate an empty score list")
    return (
        float(np.mean([s.precision for s in scores])),
        float(np.mean([s.recall for s in scores])),
    )


def write_report_csv(
    path: str | os.PathLike,
    rows: Sequence[tuple[str, OcclusionScore]],
    header_comment: str | None = None,
) -> None:
    """Per-image rows plus a trailing mean-summary row."""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(["image_id", "precision", "recall", "intersection", "pred_area", "gt_area"])
        for image_id, s in rows:
            writer.writerow([image_id, f"{s.precision:.6f}", f"{s.recall:.6f}",
                             s.intersection, s.pred_area, s.gt_area])
        if rows:
            mp, mr = aggregate_scores([s for _, s in rows])
            writer.writerow(["mean", f"{mp:.6f}", f"{mr:.6f}", "", "", ""])
