import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import {
  Grid,
  readBoxesJsonl,
  readGrid,
  readMaskPgm,
  writeGrid,
  writeMaskPgm,
} from "../src/formats.js";

const tmp = () => mkdtempSync(join(tmpdir(), "bridge-"));

function randomGrid(h: number, w: number, seed: number): Grid {
  const values = new Float32Array(h * w);
  let s = seed >>> 0;
  for (let i = 0; i < values.length; i++) {
    s = (s * 1664525 + 1013904223) >>> 0;
    values[i] = s / 2 ** 32;
  }
  return { height: h, width: w, values };
}

describe("MWMG grids", () => {
  it("round-trips bitwise", () => {
    const dir = tmp();
    for (let seed = 0; seed < 20; seed++) {
      const grid = randomGrid(17, 31, seed + 1);
      const path = join(dir, "g.mwmg");
      writeGrid(path, grid);
      const back = readGrid(path);
      expect(back.height).toBe(17);
      expect(back.width).toBe(31);
      expect(Buffer.from(back.values.buffer).equals(Buffer.from(grid.values.buffer))).toBe(true);
    }
  });

  it("has the documented byte layout", () => {
    const dir = tmp();
    const path = join(dir, "g.mwmg");
    writeGrid(path, { height: 2, width: 3, values: new Float32Array([0, 1, 2, 3, 4, 5]) });
    const raw = readFileSync(path);
    expect(raw.toString("latin1", 0, 4)).toBe("MWMG");
    expect(raw.readUInt32LE(4)).toBe(2);
    expect(raw.readUInt32LE(8)).toBe(3);
    expect(raw.length).toBe(12 + 4 * 6);
  });

  it("rejects wrong magic and truncated payloads", () => {
    const dir = tmp();
    const bad = join(dir, "bad.mwmg");
    writeFileSync(bad, Buffer.from("NOPE00000000"));
    expect(() => readGrid(bad)).toThrow(/not an MWMG/);
    const trunc = join(dir, "trunc.mwmg");
    const buf = Buffer.alloc(12 + 4 * 5);
    buf.write("MWMG", 0, "latin1");
    buf.writeUInt32LE(2, 4);
    buf.writeUInt32LE(3, 8);
    writeFileSync(trunc, buf);
    expect(() => readGrid(trunc)).toThrow(/truncated/);
  });

  it("rejects non-finite values", () => {
    expect(() =>
      writeGrid(join(tmp(), "g.mwmg"), { height: 1, width: 1, values: new Float32Array([NaN]) }),
    ).toThrow(/non-finite/);
  });
});

describe("PGM masks", () => {
  it("round-trips with the >127 threshold", () => {
    const dir = tmp();
    const path = join(dir, "m.pgm");
    const bits = new Uint8Array([1, 0, 0, 1, 1, 0]);
    writeMaskPgm(path, 2, 3, bits);
    const back = readMaskPgm(path);
    expect(back.height).toBe(2);
    expect(back.width).toBe(3);
    expect(Array.from(back.bits)).toEqual(Array.from(bits));
  });

  it("tolerates header comments", () => {
    const dir = tmp();
    const path = join(dir, "m.pgm");
    writeFileSync(path, Buffer.concat([Buffer.from("P5\n# hi\n2 1\n255\n"), Buffer.from([200, 0])]));
    expect(Array.from(readMaskPgm(path).bits)).toEqual([1, 0]);
  });
});

describe("boxes JSONL", () => {
  it("parses inclusive bounds", () => {
    const dir = tmp();
    const path = join(dir, "b.jsonl");
    writeFileSync(
      path,
      JSON.stringify({ image_id: "x", row_min: 1, col_min: 2, row_max: 5, col_max: 7 }) + "\n",
    );
    const boxes = readBoxesJsonl(path);
    expect(boxes).toEqual([{ rowMin: 1, colMin: 2, rowMax: 5, colMax: 7 }]);
  });
});
