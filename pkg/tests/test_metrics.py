import csv

import numpy as np
import pytest

from mwm.errors import EmptyGroundTruth, EmptyList, EmptyPrediction
from mwm.localization import RoiBox
from mwm.metrics import (
    OcclusionScore,
    aggregate_scores,
    occlusion_metrics,
    rasterize_box,
    write_report_csv,
)
from oracles import pixel_count_score


def _disk(shape, cy, cx, r):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)


class TestOcclusionMetrics:
    def test_identical_masks(self):
        gt = _disk((20, 20), 10, 10, 4)
        s = occlusion_metrics(gt.copy(), gt)
        assert (s.precision, s.recall) == (1.0, 1.0)

    def test_disjoint(self):
        gt = np.zeros((10, 10), dtype=np.uint8)
        gt[:2, :2] = 1
        pred = np.zeros_like(gt)
        pred[8:, 8:] = 1
        s = occlusion_metrics(pred, gt)
        assert (s.precision, s.recall) == (0.0, 0.0)

    def test_containing_box(self):
        gt = np.zeros((10, 10), dtype=np.uint8)
        gt[4:6, 4:6] = 1  # 2x2
        s = occlusion_metrics(RoiBox(3, 3, 6, 6), gt)  # 4x4 box
        assert s.precision == pytest.approx(0.25)
        assert s.recall == 1.0
        assert (s.intersection, s.pred_area, s.gt_area) == (4, 16, 4)

    def test_empty_prediction(self):
        gt = np.ones((4, 4), dtype=np.uint8)
        with pytest.raises(EmptyPrediction):
            occlusion_metrics(np.zeros_like(gt), gt)

    def test_empty_ground_truth(self):
        pred = np.ones((4, 4), dtype=np.uint8)
        with pytest.raises(EmptyGroundTruth):
            occlusion_metrics(pred, np.zeros_like(pred))

    def test_random_pairs_match_pixel_counting(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            gt = (rng.uniform(size=(16, 16)) < 0.3).astype(np.uint8)
            r0, c0 = rng.integers(0, 8, size=2)
            box = RoiBox(int(r0), int(c0), int(r0 + rng.integers(1, 8)),
                         int(c0 + rng.integers(1, 8)))
            if not gt.any():
                continue
            s = occlusion_metrics(box, gt)
            pred_pixels = {(r, c) for r in range(box.row_min, box.row_max + 1)
                           for c in range(box.col_min, box.col_max + 1)}
            gt_pixels = set(zip(*np.nonzero(gt)))
            p, r = pixel_count_score(pred_pixels, gt_pixels)
            assert s.precision == pytest.approx(p)
            assert s.recall == pytest.approx(r)

    def test_translation_invariance(self):
        gt = _disk((30, 30), 10, 10, 3)
        pred = _disk((30, 30), 11, 9, 4)
        s0 = occlusion_metrics(pred, gt)
        shift = np.roll(np.roll(gt, 5, axis=0), 5, axis=1)
        shifted_pred = np.roll(np.roll(pred, 5, axis=0), 5, axis=1)
        s1 = occlusion_metrics(shifted_pred, shift)
        assert (s0.precision, s0.recall) == (s1.precision, s1.recall)

    def test_growing_pred_never_decreases_recall(self):
        gt = _disk((30, 30), 15, 15, 6)
        last = 0.0
        for half in range(1, 14):
            s = occlusion_metrics(RoiBox(15 - half, 15 - half, 15 + half, 15 + half), gt)
            assert s.recall >= last
            last = s.recall

    def test_box_rasterization_area(self):
        box = RoiBox(2, 3, 5, 9)
        assert rasterize_box(box, (12, 12)).sum() == (5 - 2 + 1) * (9 - 3 + 1)


class TestAggregate:
    def test_singleton(self):
        s = OcclusionScore(0.3, 0.94, 3, 10, 4)
        assert aggregate_scores([s]) == (pytest.approx(0.3), pytest.approx(0.94))

    def test_symmetric_pair(self):
        scores = [OcclusionScore(1, 1, 1, 1, 1), OcclusionScore(0, 0, 0, 1, 1)]
        assert aggregate_scores(scores) == (0.5, 0.5)

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(3)
        scores = [OcclusionScore(float(p), float(r), 0, 1, 1)
                  for p, r in rng.uniform(size=(100, 2))]
        mp, mr = aggregate_scores(scores)
        assert abs(mp - sum(s.precision for s in scores) / 100) < 1e-12
        assert abs(mr - sum(s.recall for s in scores) / 100) < 1e-12

    def test_empty_raises(self):
        with pytest.raises(EmptyList):
            aggregate_scores([])


class TestReport:
    def test_csv_rows_and_summary(self, tmp_path):
        rows = [("a", OcclusionScore(0.5, 1.0, 2, 4, 2)),
                ("b", OcclusionScore(1.0, 0.5, 2, 2, 4))]
        path = tmp_path / "report.csv"
        write_report_csv(path, rows, header_comment="seed=0")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#")
        parsed = list(csv.reader(lines[1:]))
        assert parsed[0][0] == "image_id"
        assert parsed[-1][0] == "mean"
        assert float(parsed[-1][1]) == pytest.approx(0.75)
        assert float(parsed[-1][2]) == pytest.approx(0.75)
