import { execFileSync, spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import { Grid, readGrid, readMaskPgm, writeGrid } from "../src/formats.js";

const here = dirname(fileURLToPath(import.meta.url));
const CLI = join(here, "..", "dist", "cli.js");

function bridge(args: string[]) {
  return spawnSync(process.execPath, [CLI, ...args], { encoding: "utf-8" });
}

function blobGrid(): Grid {
  const h = 24;
  const w = 24;
  const values = new Float32Array(h * w);
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      const d2 = (r - 12) ** 2 + (c - 12) ** 2;
      values[r * w + c] = 0.1 + 0.8 * Math.exp(-d2 / 18);
    }
  }
  return { height: h, width: w, values };
}

beforeAll(() => {
  if (!existsSync(CLI)) {
    execFileSync("npx", ["tsc", "-p", join(here, "..", "tsconfig.json")]);
  }
});

describe("mwm-bridge saliency", () => {
  it("writes a loadable grid with the image's dimensions", () => {
    const dir = mkdtempSync(join(tmpdir(), "bridge-cli-"));
    const img = join(dir, "img.mwmg");
    const out = join(dir, "sal.mwmg");
    writeGrid(img, blobGrid());
    const res = bridge(["saliency", img, "a glioma in a MRI image", out]);
    expect(res.status).toBe(0);
    const sal = readGrid(out);
    expect([sal.height, sal.width]).toEqual([24, 24]);
  });
});

describe("mwm-bridge refine (provider contract)", () => {
  it("exits 0 and writes a PGM of the image's dimensions", () => {
    const dir = mkdtempSync(join(tmpdir(), "bridge-cli-"));
    const img = join(dir, "img.mwmg");
    const boxes = join(dir, "boxes.jsonl");
    const out = join(dir, "mask.pgm");
    writeGrid(img, blobGrid());
    writeFileSync(
      boxes,
      JSON.stringify({ image_id: "x", row_min: 6, col_min: 6, row_max: 18, col_max: 18 }) + "\n",
    );
    const res = bridge(["refine", img, boxes, out]);
    expect(res.status).toBe(0);
    const mask = readMaskPgm(out);
    expect([mask.height, mask.width]).toEqual([24, 24]);
    let fg = 0;
    for (const b of mask.bits) fg += b;
    expect(fg).toBeGreaterThan(0);
  });

  it("exits nonzero with a stderr message on a missing image", () => {
    const dir = mkdtempSync(join(tmpdir(), "bridge-cli-"));
    const res = bridge(["refine", join(dir, "missing.mwmg"), join(dir, "b.jsonl"), join(dir, "m.pgm")]);
    expect(res.status).not.toBe(0);
    expect(res.stderr).toMatch(/mwm-bridge:/);
  });

  it("exits 2 on bad usage", () => {
    expect(bridge(["refine", "only-one-arg"]).status).toBe(2);
    expect(bridge(["frobnicate"]).status).toBe(2);
  });
});

describe("mwm-bridge embed", () => {
  it("emits one record per manifest line with constant dimensionality", () => {
    const dir = mkdtempSync(join(tmpdir(), "bridge-cli-"));
    const img = join(dir, "img.mwmg");
    writeGrid(img, blobGrid());
    const manifest = join(dir, "manifest.jsonl");
    writeFileSync(
      manifest,
      [
        JSON.stringify({ image: img, prompt: "glioma" }),
        JSON.stringify({ image: img, prompt: "pneumonia" }),
      ].join("\n") + "\n",
    );
    const out = join(dir, "emb.jsonl");
    expect(bridge(["embed", manifest, out]).status).toBe(0);
    const recs = readFileSync(out, "utf-8")
      .split("\n")
      .filter((l: string) => l.trim())
      .map((l: string) => JSON.parse(l));
    expect(recs).toHaveLength(2);
    expect(recs[0].z_img).toHaveLength(recs[1].z_img.length);
    // same image twice -> identical image embedding
    expect(recs[0].z_img).toEqual(recs[1].z_img);
    expect(recs[0].z_text).not.toEqual(recs[1].z_text);
  });
});
