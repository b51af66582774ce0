"""Saliency-to-ROI localization.

Pipeline: K-Means binarization of the saliency map, connected-component
selection, minimal enclosing boxes, optional provider-based mask
refinement, and margin-based box expansion.
"""
from __future__ import annotations

import json
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Protocol, Sequence, Union

import numpy as np

from . import grids
from .errors import (
    DegenerateClusters,
    EmptyMask,
    ProviderFailure,
    ShapeMismatch,
)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoiBox:
    """Axis-aligned region of interest, inclusive pixel coordinates."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int
    source_label: int = 0
    margin: float = 0.0

    def __post_init__(self):
        if not (0 <= self.row_min <= self.row_max and 0 <= self.col_min <= self.col_max):
            raise ValueError(f"invalid box {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    def contains(self, other: "RoiBox") -> bool:
        return (
            self.row_min <= other.row_min
            and self.col_min <= other.col_min
            and self.row_max >= other.row_max
            and self.col_max >= other.col_max
        )


@dataclass(frozen=True)
class Component:
    """A connected foreground region of a binary mask."""

    label: int
    area: int
    bbox: tuple[int, int, int, int]  # (row_min, col_min, row_max, col_max) inclusive


@dataclass(frozen=True)
class KMeansResult:
    centers: tuple[float, float]  # canonical order: centers[0] < centers[1]
    assignment: np.ndarray  # uint8, 1 = higher-center cluster
    inertia: float
    iterations: int
    inertia_history: tuple[float, ...] = ()

    @property
    def threshold(self) -> float:
        return 0.5 * (self.centers[0] + self.centers[1])


@dataclass(frozen=True)
class RelativeArea:
    """Keep every component with area >= alpha * largest area."""

    alpha: float = 0.5


@dataclass(frozen=True)
class TopK:
    """Keep the k largest components."""

    k: int = 1


SelectionPolicy = Union[RelativeArea, TopK]


# ---------------------------------------------------------------------------
# K-Means binarization
# ---------------------------------------------------------------------------

def kmeans_binarize(saliency: np.ndarray, max_iters: int = 100, tol: float = 1e-6) -> KMeansResult:
    """Two-cluster Lloyd iterations on the pixel-value multiset.

    Initialization is deterministic: the two centers start at the means of
    the lower and upper halves of the sorted values, so no seed is needed.
    The returned assignment equals thresholding at the midpoint of the two
    final centers (ties go to the upper cluster).
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    values = np.asarray(saliency, dtype=np.float64).ravel()
    order = np.sort(values)
    n = order.size
    if n < 2 or order[0] == order[-1]:
        raise DegenerateClusters("cannot split a constant value multiset")
    c0 = float(order[: n // 2].mean())
    c1 = float(order[n // 2 :].mean())
    if c0 == c1:
        raise DegenerateClusters("half-split initialization produced equal centers")

    iterations = 0
    history: list[float] = []
    for _ in range(max_iters):
        iterations += 1
        t = 0.5 * (c0 + c1)
        upper = values >= t
        if not upper.any() or upper.all():
            raise DegenerateClusters("one cluster emptied during Lloyd iteration")
        history.append(float(np.sum(np.minimum((values - c0) ** 2, (values - c1) ** 2))))
        new_c0 = float(values[~upper].mean())
        new_c1 = float(values[upper].mean())
        moved = max(abs(new_c0 - c0), abs(new_c1 - c1))
        c0, c1 = new_c0, new_c1
        if moved < tol:
            break

    assignment = (np.asarray(saliency, dtype=np.float64) >= 0.5 * (c0 + c1)).astype(np.uint8)
    inertia = float(np.sum(np.minimum((values - c0) ** 2, (values - c1) ** 2)))
    history.append(inertia)
    return KMeansResult(
        centers=(c0, c1),
        assignment=assignment,
        inertia=inertia,
        iterations=iterations,
        inertia_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# Connected components (two-pass union-find)
# ---------------------------------------------------------------------------

def _find(parent: list[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:  # path compression
        parent[x], x = root, parent[x]
    return root


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[Component]:
    """Label foreground regions; returns components sorted by area descending.

    Labels are assigned in raster-scan first-encounter order starting at 1;
    ties in area keep the smaller label first.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = np.asarray(mask)
    if m.size == 0:
        raise ValueError("mask is empty")
    h, w = m.shape
    provisional = np.zeros((h, w), dtype=np.int32)
    parent = [0]  # parent[0] unused
    next_label = 1

    # Pass 1: provisional labels, unions with already-visited neighbors.
    for r in range(h):
        row = m[r]
        for c in range(w):
            if not row[c]:
                continue
            neigh = []
            if c > 0 and m[r, c - 1]:
                neigh.append(provisional[r, c - 1])
            if r > 0:
                if m[r - 1, c]:
                    neigh.append(provisional[r - 1, c])
                if connectivity == 8:
                    if c > 0 and m[r - 1, c - 1]:
                        neigh.append(provisional[r - 1, c - 1])
                    if c + 1 < w and m[r - 1, c + 1]:
                        neigh.append(provisional[r - 1, c + 1])
            if not neigh:
                parent.append(next_label)
                provisional[r, c] = next_label
                next_label += 1
            else:
                lo = min(neigh)
                provisional[r, c] = lo
                for other in neigh:
                    ra, rb = _find(parent, lo), _find(parent, other)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

    # Pass 2: map roots to final labels in raster first-encounter order.
    roots = np.array([_find(parent, i) for i in range(next_label)], dtype=np.int32)
    final_of_root: dict[int, int] = {}
    labels = np.zeros((h, w), dtype=np.int32)
    comps: dict[int, list[int]] = {}  # label -> [area, rmin, cmin, rmax, cmax]
    for r in range(h):
        for c in range(w):
            p = provisional[r, c]
            if p == 0:
                continue
            root = int(roots[p])
            lab = final_of_root.get(root)
            if lab is None:
                lab = len(final_of_root) + 1
                final_of_root[root] = lab
                comps[lab] = [0, r, c, r, c]
            labels[r, c] = lab
            stats = comps[lab]
            stats[0] += 1
            stats[1] = min(stats[1], r)
            stats[2] = min(stats[2], c)
            stats[3] = max(stats[3], r)
            stats[4] = max(stats[4], c)

    out = [
        Component(label=lab, area=s[0], bbox=(s[1], s[2], s[3], s[4]))
        for lab, s in comps.items()
    ]
    out.sort(key=lambda comp: (-comp.area, comp.label))
    return out


def select_components(components: Sequence[Component], policy: SelectionPolicy) -> list[Component]:
    """Filter an area-descending component list by the given policy.

    Never returns empty when the input is nonempty: the largest component
    always survives.
    """
    comps = list(components)
    if not comps:
        return []
    if isinstance(policy, RelativeArea):
        cutoff = policy.alpha * comps[0].area
        kept = [c for c in comps if c.area >= cutoff]
    elif isinstance(policy, TopK):
        kept = comps[: max(policy.k, 1)]
    else:
        raise TypeError(f"unknown selection policy {policy!r}")
    return kept or comps[:1]


def enclosing_box(component: Component) -> RoiBox:
    """Minimal enclosing bounding box of a component (margin 0)."""
    r0, c0, r1, c1 = component.bbox
    return RoiBox(r0, c0, r1, c1, source_label=component.label, margin=0.0)


# ---------------------------------------------------------------------------
# Region refinement providers
# ---------------------------------------------------------------------------

class RefinementProvider(Protocol):
    def refine(self, image: np.ndarray, boxes: Sequence[RoiBox]) -> np.ndarray:
        """Return a {0,1} mask with the image's dimensions."""
        ...


class IdentityProvider:
    """Provider-free fallback: returns the rasterized union of the boxes."""

    def refine(self, image: np.ndarray, boxes: Sequence[RoiBox]) -> np.ndarray:
        mask = np.zeros(image.shape, dtype=np.uint8)
        for b in boxes:
            mask[b.row_min : b.row_max + 1, b.col_min : b.col_max + 1] = 1
        return mask


class CommandProvider:
    """Subprocess provider: ``cmd <image.mwmg> <boxes.jsonl> <out_mask.pgm>``.

    Exit 0 plus a readable PGM of the image's dimensions signals success.
    """

    def __init__(self, command: Sequence[str]):
        if not command:
            raise ValueError("provider command must be nonempty")
        self.command = list(command)

    def refine(self, image: np.ndarray, boxes: Sequence[RoiBox]) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="mwm-provider-") as tmp:
            image_path = os.path.join(tmp, "image.mwmg")
            boxes_path = os.path.join(tmp, "boxes.jsonl")
            mask_path = os.path.join(tmp, "mask.pgm")
            grids.save_grid(image_path, image)
            write_boxes_jsonl(boxes_path, boxes, image_id="provider-input")
            proc = subprocess.run(
                self.command + [image_path, boxes_path, mask_path],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise ProviderFailure(
                    f"provider exited {proc.returncode}: {proc.stderr.strip()}"
                )
            try:
                return grids.load_mask_pgm(mask_path)
            except Exception as exc:
                raise ProviderFailure(f"provider output unreadable: {exc}") from exc


def refine_regions(
    image: np.ndarray,
    boxes: Sequence[RoiBox],
    provider: RefinementProvider,
    margin: float = 0.1,
) -> np.ndarray:
    """Run the provider and clip its mask to the dilated prompt boxes.

    The intersection bounds provider noise: output foreground can never
    escape the prompted neighborhoods.
    """
    if not boxes:
        raise ValueError("boxes must be nonempty")
    mask = np.asarray(provider.refine(image, boxes))
    if mask.shape != image.shape:
        raise ShapeMismatch(
            f"provider mask {mask.shape} vs image {image.shape}"
        )
    bounds = image.shape
    allowed = np.zeros(bounds, dtype=np.uint8)
    for b in boxes:
        d = expand_to_roi(b, margin, bounds)
        allowed[d.row_min : d.row_max + 1, d.col_min : d.col_max + 1] = 1
    return ((mask > 0) & (allowed > 0)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Box expansion
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def tight_box(mask: np.ndarray, source_label: int = 0) -> RoiBox:
    rows, cols = np.nonzero(np.asarray(mask))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    return RoiBox(
        int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max()),
        source_label=source_label,
    )


def expand_to_roi(
    mask_or_box: np.ndarray | RoiBox,
    margin: float,
    bounds: tuple[int, int],
) -> RoiBox:
    """Grow the tight box of the input by ``round(margin * side)`` per side.

    Growth is computed per axis from that axis's side length, then clamped
    to the image bounds; the result always contains the input box.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    box = mask_or_box if isinstance(mask_or_box, RoiBox) else tight_box(mask_or_box)
    h, w = bounds
    grow_r = _round_half_up(margin * box.height)
    grow_c = _round_half_up(margin * box.width)
    return RoiBox(
        row_min=max(box.row_min - grow_r, 0),
        col_min=max(box.col_min - grow_c, 0),
        row_max=min(box.row_max + grow_r, h - 1),
        col_max=min(box.col_max + grow_c, w - 1),
        source_label=box.source_label,
        margin=margin,
    )


# ---------------------------------------------------------------------------
# Full localization
# ---------------------------------------------------------------------------

@dataclass
class LocalizeConfig:
    connectivity: int = 8
    policy: SelectionPolicy = field(default_factory=RelativeArea)
    margin: float = 0.1
    max_iters: int = 100
    tol: float = 1e-6


def localize(
    saliency: np.ndarray,
    image: np.ndarray,
    cfg: LocalizeConfig | None = None,
    provider: RefinementProvider | None = None,
) -> list[RoiBox]:
    """Saliency map -> expanded ROI boxes, one per retained region.

    Deterministic for a fixed config and provider. Each retained region's
    final ROI is the margin-expanded tight box of the refined mask inside
    that region's (dilated) prompt box; if refinement leaves the region
    empty, its prompt box is used unchanged.
    """
    cfg = cfg or LocalizeConfig()
    provider = provider or IdentityProvider()
    if saliency.shape != image.shape:
        raise ShapeMismatch(f"saliency {saliency.shape} vs image {image.shape}")
    bounds = image.shape

    km = kmeans_binarize(saliency, max_iters=cfg.max_iters, tol=cfg.tol)
    comps = connected_components(km.assignment, connectivity=cfg.connectivity)
    kept = select_components(comps, cfg.policy)
    prompt_boxes = [enclosing_box(c) for c in kept]
    refined = refine_regions(image, prompt_boxes, provider, margin=cfg.margin)

    rois = []
    for box in prompt_boxes:
        dilated = expand_to_roi(box, cfg.margin, bounds)
        region = np.zeros(bounds, dtype=np.uint8)
        region[dilated.row_min : dilated.row_max + 1, dilated.col_min : dilated.col_max + 1] = 1
        region &= refined
        if region.any():
            core = tight_box(region, source_label=box.source_label)
        else:
            core = box
        rois.append(expand_to_roi(core, cfg.margin, bounds))
    return rois


# ---------------------------------------------------------------------------
# Box JSONL I/O
# ---------------------------------------------------------------------------

def write_boxes_jsonl(path: str | os.PathLike, boxes: Sequence[RoiBox], image_id: str) -> None:
    with open(path, "w", encoding="ascii") as f:
        for b in boxes:
            f.write(json.dumps(box_record(b, image_id), sort_keys=True) + "\n")


def box_record(b: RoiBox, image_id: str) -> dict:
    return {
        "image_id": image_id,
        "row_min": b.row_min,
        "col_min": b.col_min,
        "row_max": b.row_max,
        "col_max": b.col_max,
        "source_label": b.source_label,
        "margin": b.margin,
    }


def read_boxes_jsonl(path: str | os.PathLike) -> list[tuple[str, RoiBox]]:
    out = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                (
                    rec["image_id"],
                    RoiBox(
                        rec["row_min"], rec["col_min"], rec["row_max"], rec["col_max"],
                        source_label=rec.get("source_label", 0),
                        margin=rec.get("margin", 0.0),
                    ),
                )
            )
    return out
