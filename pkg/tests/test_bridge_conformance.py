"""Conformance checks for the optional external provider in bridge/.

These tests exercise the subprocess and file contracts from the Python
side. They are skipped entirely when Node or the compiled bridge is
missing, so the core suite never depends on it.
"""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from mwm import grids, synth
from mwm.localization import (
    CommandProvider,
    LocalizeConfig,
    RoiBox,
    localize,
    refine_regions,
)

BRIDGE_CLI = Path(__file__).resolve().parent.parent / "bridge" / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not BRIDGE_CLI.exists(),
    reason="bridge not built or node unavailable",
)


@pytest.fixture()
def sample():
    return synth.make_blob_sample("blob0000", size=48, seed=5)


def _bridge(*args):
    return subprocess.run(
        ["node", str(BRIDGE_CLI), *[str(a) for a in args]],
        capture_output=True,
        text=True,
    )


class TestSaliencyContract:
    def test_output_loads_unmodified(self, sample, tmp_path):
        img = tmp_path / "img.mwmg"
        out = tmp_path / "sal.mwmg"
        grids.save_grid(img, sample.image)
        proc = _bridge("saliency", img, "a lesion in a MRI image", out)
        assert proc.returncode == 0, proc.stderr
        sal = grids.load_grid(out)
        assert sal.shape == sample.image.shape
        assert sal.min() >= 0.0 and sal.max() <= 1.0
        # normalized output survives the toolkit's own normalization untouched
        np.testing.assert_array_equal(grids.normalize_saliency(sal), sal)


class TestRefineProviderContract:
    def test_command_provider_accepts_bridge(self, sample):
        provider = CommandProvider(["node", str(BRIDGE_CLI), "refine"])
        boxes = [RoiBox(10, 10, 38, 38)]
        mask = provider.refine(sample.image, boxes)
        assert mask.shape == sample.image.shape
        assert mask.any()

    def test_containment_invariant(self, sample):
        provider = CommandProvider(["node", str(BRIDGE_CLI), "refine"])
        boxes = [RoiBox(12, 12, 36, 36)]
        margin = 0.1
        refined = refine_regions(sample.image, boxes, provider, margin=margin)
        from mwm.localization import expand_to_roi

        dilated = expand_to_roi(boxes[0], margin, sample.image.shape)
        rows, cols = np.nonzero(refined)
        assert rows.size > 0
        assert rows.min() >= dilated.row_min and rows.max() <= dilated.row_max
        assert cols.min() >= dilated.col_min and cols.max() <= dilated.col_max

    def test_end_to_end_localize_with_bridge(self, sample):
        provider = CommandProvider(["node", str(BRIDGE_CLI), "refine"])
        boxes = localize(sample.saliency, sample.image, LocalizeConfig(margin=0.2),
                         provider)
        assert boxes
        pred = np.zeros_like(sample.gt_mask)
        for box in boxes:
            pred[box.row_min:box.row_max + 1, box.col_min:box.col_max + 1] = 1
        # the bridge refines inside the prompted region, so the blob stays covered
        assert (pred[sample.gt_mask == 1] == 1).mean() >= 0.95

    def test_provider_failure_surfaces(self, sample, tmp_path):
        proc = _bridge("refine", tmp_path / "missing.mwmg",
                       tmp_path / "b.jsonl", tmp_path / "m.pgm")
        assert proc.returncode != 0
        assert "mwm-bridge" in proc.stderr


class TestEmbedContract:
    def test_records_and_determinism(self, sample, tmp_path):
        img = tmp_path / "img.mwmg"
        grids.save_grid(img, sample.image)
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text(
            "\n".join(json.dumps({"image": str(img), "prompt": p})
                      for p in ("glioma", "glioma", "pneumonia")) + "\n")
        out = tmp_path / "emb.jsonl"
        proc = _bridge("embed", manifest, out)
        assert proc.returncode == 0, proc.stderr
        recs = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(recs) == 3
        dims = {len(r["z_img"]) for r in recs} | {len(r["z_text"]) for r in recs}
        assert len(dims) == 1
        assert recs[0]["z_text"] == recs[1]["z_text"]
        assert recs[0]["z_text"] != recs[2]["z_text"]
