/**
 * Readers and writers for the toolkit's on-disk formats:
 *
 * - MWMG float grids: magic "MWMG", u32 height, u32 width (little-endian),
 *   then h*w float32 LE values row-major.
 * - Binary PGM masks: "P5", maxval 255; values > 127 are foreground.
 * - Region boxes: JSON-lines with inclusive row/col bounds.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface Grid {
  height: number;
  width: number;
  /** row-major, length height*width */
  values: Float32Array;
}

export interface RoiBox {
  rowMin: number;
  colMin: number;
  rowMax: number;
  colMax: number;
}

const MAGIC = "MWMG";

export function readGrid(path: string): Grid {
  const raw = readFileSync(path);
  if (raw.length < 12 || raw.toString("latin1", 0, 4) !== MAGIC) {
    throw new Error(`${path}: not an MWMG grid`);
  }
  const height = raw.readUInt32LE(4);
  const width = raw.readUInt32LE(8);
  const n = height * width;
  if (raw.length < 12 + 4 * n) {
    throw new Error(`${path}: truncated payload (want ${n} floats)`);
  }
  // copy so alignment of the source buffer does not matter
  const body = Uint8Array.prototype.slice.call(raw, 12, 12 + 4 * n);
  const values = new Float32Array(body.buffer, 0, n);
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error(`${path}: non-finite value`);
  }
  return { height, width, values };
}

export function writeGrid(path: string, grid: Grid): void {
  const { height, width, values } = grid;
  if (values.length !== height * width) {
    throw new Error("grid values length mismatch");
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error("non-finite grid value");
  }
  const buf = Buffer.alloc(12 + 4 * values.length);
  buf.write(MAGIC, 0, "latin1");
  buf.writeUInt32LE(height, 4);
  buf.writeUInt32LE(width, 8);
  Buffer.from(values.buffer, values.byteOffset, 4 * values.length).copy(buf, 12);
  writeFileSync(path, buf);
}

export function writeMaskPgm(path: string, height: number, width: number, bits: Uint8Array): void {
  if (bits.length !== height * width) throw new Error("mask length mismatch");
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "latin1");
  const body = Buffer.alloc(bits.length);
  for (let i = 0; i < bits.length; i++) body[i] = bits[i] ? 255 : 0;
  writeFileSync(path, Buffer.concat([header, body]));
}

export function readMaskPgm(path: string): { height: number; width: number; bits: Uint8Array } {
  const raw = readFileSync(path);
  // header = three whitespace-separated tokens after "P5", comments allowed
  if (raw.toString("latin1", 0, 2) !== "P5") throw new Error(`${path}: not binary PGM`);
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < raw.length && /\s/.test(String.fromCharCode(raw[pos]))) pos++;
    if (raw[pos] === 0x23) {
      // comment line
      while (pos < raw.length && raw[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < raw.length && !/\s/.test(String.fromCharCode(raw[pos]))) pos++;
    tokens.push(parseInt(raw.toString("latin1", start, pos), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new Error(`${path}: unsupported maxval ${maxval}`);
  const bits = new Uint8Array(height * width);
  for (let i = 0; i < bits.length; i++) bits[i] = raw[pos + i] > 127 ? 1 : 0;
  return { height, width, bits };
}

export function readBoxesJsonl(path: string): RoiBox[] {
  const out: RoiBox[] = [];
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    if (!line.trim()) continue;
    const rec = JSON.parse(line);
    out.push({
      rowMin: rec.row_min,
      colMin: rec.col_min,
      rowMax: rec.row_max,
      colMax: rec.col_max,
    });
  }
  return out;
}
