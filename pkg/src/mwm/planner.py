"""Region-differentiated patch mask planning.

A plan assigns every patch a region label (ROI or background) from the
localization boxes, then masks each region at its own target ratio using
a seeded generator. Visibility bit 1 means the patch stays visible.
"""
from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass

import numpy as np

from .localization import RoiBox

ROI = 1
BG = 0


@dataclass(frozen=True)
class PatchGrid:
    image_h: int
    image_w: int
    patch: int

    def __post_init__(self):
        if self.patch < 1 or self.image_h < 1 or self.image_w < 1:
            raise ValueError(f"invalid patch grid {self}")

    @property
    def rows(self) -> int:
        return -(-self.image_h // self.patch)

    @property
    def cols(self) -> int:
        return -(-self.image_w // self.patch)

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class MaskPlan:
    grid: PatchGrid
    visible: np.ndarray  # uint8 (rows, cols), 1 = visible
    region: np.ndarray  # uint8 (rows, cols), ROI / BG
    roi_ratio: float
    bg_ratio: float
    seed: int
    image_id: str = ""

    def __post_init__(self):
        shape = (self.grid.rows, self.grid.cols)
        if self.visible.shape != shape or self.region.shape != shape:
            raise ValueError("plan arrays must match the patch grid shape")

    @property
    def masked(self) -> np.ndarray:
        return (1 - self.visible).astype(np.uint8)


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


def target_counts(labels: np.ndarray, roi_ratio: float, bg_ratio: float) -> tuple[int, int]:
    """Masked-patch targets per region: round-half-away-from-zero of
    ratio * region size, with at least one ROI patch masked whenever
    roi_ratio > 0 and the ROI is nonempty."""
    n_roi = int(np.count_nonzero(labels == ROI))
    n_bg = int(np.count_nonzero(labels == BG))
    k_roi = _round_half_away(roi_ratio * n_roi)
    if roi_ratio > 0 and n_roi >= 1:
        k_roi = max(k_roi, 1)
    k_bg = _round_half_away(bg_ratio * n_bg)
    return k_roi, k_bg


def classify_patches(
    grid: PatchGrid,
    rois: list[RoiBox],
    overlap_threshold: float = 0.5,
) -> np.ndarray:
    """Label each patch ROI when its overlap fraction with the box union
    reaches the threshold; edge patches use their true clipped area."""
    if not (0 < overlap_threshold <= 1):
        raise ValueError("overlap_threshold must be in (0, 1]")
    union = np.zeros((grid.image_h, grid.image_w), dtype=bool)
    for b in rois:
        if b.row_max >= grid.image_h or b.col_max >= grid.image_w:
            raise ValueError(f"box {b} exceeds image bounds")
        union[b.row_min : b.row_max + 1, b.col_min : b.col_max + 1] = True

    labels = np.full((grid.rows, grid.cols), BG, dtype=np.uint8)
    p = grid.patch
    for r in range(grid.rows):
        for c in range(grid.cols):
            r1 = min((r + 1) * p, grid.image_h)
            c1 = min((c + 1) * p, grid.image_w)
            cell = union[r * p : r1, c * p : c1]
            if cell.sum() / cell.size >= overlap_threshold:
                labels[r, c] = ROI
    return labels


def sample_plan(
    grid: PatchGrid,
    labels: np.ndarray,
    roi_ratio: float,
    bg_ratio: float,
    seed: int,
    image_id: str = "",
) -> MaskPlan:
    """Mask exactly the target count per region, uniformly without
    replacement, deterministically per (labels, ratios, seed)."""
    if not (0 <= roi_ratio <= 1 and 0 <= bg_ratio <= 1):
        raise ValueError("ratios must lie in [0, 1]")
    labels = np.asarray(labels, dtype=np.uint8)
    k_roi, k_bg = target_counts(labels, roi_ratio, bg_ratio)
    flat = labels.ravel()
    rng = np.random.default_rng(seed)
    visible = np.ones(flat.size, dtype=np.uint8)
    for region, k in ((ROI, k_roi), (BG, k_bg)):
        idx = np.flatnonzero(flat == region)
        if k > 0:
            chosen = rng.choice(idx, size=k, replace=False)
            visible[chosen] = 0
    return MaskPlan(
        grid=grid,
        visible=visible.reshape(grid.rows, grid.cols),
        region=labels.copy(),
        roi_ratio=roi_ratio,
        bg_ratio=bg_ratio,
        seed=seed,
        image_id=image_id,
    )


def random_plan(grid: PatchGrid, ratio: float, seed: int, image_id: str = "") -> MaskPlan:
    """Region-agnostic baseline: every patch is background, masked at ratio."""
    labels = np.full((grid.rows, grid.cols), BG, dtype=np.uint8)
    return sample_plan(grid, labels, roi_ratio=0.0, bg_ratio=ratio, seed=seed, image_id=image_id)


def overall_ratio(plan: MaskPlan) -> float:
    return float(np.count_nonzero(plan.visible == 0)) / plan.grid.n_patches


def solve_bg_ratio(labels: np.ndarray, roi_ratio: float, target_overall: float) -> float:
    """Background ratio that makes the realized overall ratio hit the target
    given the fixed ROI ratio; clamped to [0, 1]."""
    labels = np.asarray(labels)
    n = labels.size
    n_roi = int(np.count_nonzero(labels == ROI))
    n_bg = n - n_roi
    k_roi, _ = target_counts(labels, roi_ratio, 0.0)
    if n_bg == 0:
        return 0.0
    return float(np.clip((target_overall * n - k_roi) / n_bg, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Seed derivation
# ---------------------------------------------------------------------------

_U64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return (x ^ (x >> 31)) & _U64


def stable_hash64(text: str) -> int:
    """FNV-1a over UTF-8 bytes; stable across processes and platforms."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _U64
    return h


def derive_seed(master_seed: int, image_id: str) -> int:
    """Per-image seed: master plus the image-id hash, mixed via splitmix64."""
    return splitmix64((master_seed + stable_hash64(image_id)) & _U64)


# ---------------------------------------------------------------------------
# Plan JSON I/O
# ---------------------------------------------------------------------------

def _pack_bits(bits: np.ndarray) -> str:
    return base64.b64encode(np.packbits(bits.ravel().astype(np.uint8)).tobytes()).decode("ascii")


def _unpack_bits(b64: str, n: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(b64), dtype=np.uint8)
    return np.unpackbits(raw)[:n].astype(np.uint8)


def plan_to_json(plan: MaskPlan) -> dict:
    return {
        "image_id": plan.image_id,
        "patch": plan.grid.patch,
        "rows": plan.grid.rows,
        "cols": plan.grid.cols,
        "image_h": plan.grid.image_h,
        "image_w": plan.grid.image_w,
        "roi_ratio": plan.roi_ratio,
        "bg_ratio": plan.bg_ratio,
        "seed": plan.seed,
        "region": _pack_bits(plan.region),
        "visible": _pack_bits(plan.visible),
    }


def plan_from_json(rec: dict) -> MaskPlan:
    grid = PatchGrid(
        image_h=rec.get("image_h", rec["rows"] * rec["patch"]),
        image_w=rec.get("image_w", rec["cols"] * rec["patch"]),
        patch=rec["patch"],
    )
    n = grid.rows * grid.cols
    return MaskPlan(
        grid=grid,
        visible=_unpack_bits(rec["visible"], n).reshape(grid.rows, grid.cols),
        region=_unpack_bits(rec["region"], n).reshape(grid.rows, grid.cols),
        roi_ratio=rec["roi_ratio"],
        bg_ratio=rec["bg_ratio"],
        seed=rec["seed"],
        image_id=rec.get("image_id", ""),
    )


def save_plan(path: str | os.PathLike, plan: MaskPlan, extra: dict | None = None) -> None:
    rec = plan_to_json(plan)
    if extra:
        rec.update(extra)
    with open(path, "w", encoding="ascii") as f:
        json.dump(rec, f, sort_keys=True)
        f.write("\n")


def load_plan(path: str | os.PathLike) -> MaskPlan:
    with open(path, "r", encoding="ascii") as f:
        return plan_from_json(json.load(f))
