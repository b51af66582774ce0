/**
 * Deterministic analytic backends.
 *
 * The real deployment would call a vision-language model for saliency, a
 * promptable segmenter for refinement, and a cross-modal encoder for
 * embeddings. This bridge substitutes closed-form stand-ins so the file
 * contracts and the consuming pipeline can be exercised hermetically:
 * every output is a pure function of its file inputs and the prompt text.
 */

import { Grid, RoiBox } from "./formats.js";

/** FNV-1a 64-bit over UTF-8, returned as an unsigned BigInt. */
export function fnv1a64(text: string): bigint {
  let h = 0xcbf29ce484222325n;
  const prime = 0x100000001b3n;
  const mask = 0xffffffffffffffffn;
  for (const byte of Buffer.from(text, "utf-8")) {
    h ^= BigInt(byte);
    h = (h * prime) & mask;
  }
  return h;
}

/** splitmix64 step; deterministic stream of doubles in [0,1). */
export function* splitmixDoubles(seed: bigint): Generator<number> {
  const mask = 0xffffffffffffffffn;
  let state = seed & mask;
  for (;;) {
    state = (state + 0x9e3779b97f4a7c15n) & mask;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & mask;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & mask;
    z = z ^ (z >> 31n);
    yield Number(z >> 11n) / 2 ** 53;
  }
}

function boxBlur3(grid: Grid): Float32Array {
  const { height: h, width: w, values } = grid;
  const out = new Float32Array(h * w);
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      let sum = 0;
      let n = 0;
      for (let dr = -1; dr <= 1; dr++) {
        for (let dc = -1; dc <= 1; dc++) {
          const rr = r + dr;
          const cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w) {
            sum += values[rr * w + cc];
            n++;
          }
        }
      }
      out[r * w + c] = sum / n;
    }
  }
  return out;
}

/**
 * Prompt-conditioned saliency: the prompt hash picks a target intensity
 * level and pixels score by closeness of their (smoothed) intensity to it.
 * Output is normalized to [0,1] with the image's spatial dimensions.
 */
export function promptSaliency(image: Grid, prompt: string): Grid {
  const smooth = boxBlur3(image);
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of smooth) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    throw new Error("image is constant; saliency undefined");
  }
  const theta = splitmixDoubles(fnv1a64(prompt)).next().value as number;
  const target = lo + theta * (hi - lo);
  const span = hi - lo;
  const values = new Float32Array(smooth.length);
  for (let i = 0; i < smooth.length; i++) {
    values[i] = 1 - Math.abs(smooth[i] - target) / span;
  }
  // re-normalize so the full [0,1] range is used
  let mn = Infinity;
  let mx = -Infinity;
  for (const v of values) {
    if (v < mn) mn = v;
    if (v > mx) mx = v;
  }
  for (let i = 0; i < values.length; i++) {
    values[i] = (values[i] - mn) / (mx - mn);
  }
  return { height: image.height, width: image.width, values };
}

/** Otsu's threshold over the given sample of intensities (256 bins). */
export function otsuThreshold(samples: number[], lo: number, hi: number): number {
  const bins = 256;
  const hist = new Array(bins).fill(0);
  const span = hi - lo || 1;
  for (const v of samples) {
    const b = Math.min(bins - 1, Math.max(0, Math.floor(((v - lo) / span) * bins)));
    hist[b]++;
  }
  const total = samples.length;
  let sumAll = 0;
  for (let b = 0; b < bins; b++) sumAll += b * hist[b];
  let wB = 0;
  let sumB = 0;
  let best = 0;
  let bestVar = -1;
  for (let b = 0; b < bins; b++) {
    wB += hist[b];
    if (wB === 0) continue;
    const wF = total - wB;
    if (wF === 0) break;
    sumB += b * hist[b];
    const mB = sumB / wB;
    const mF = (sumAll - sumB) / wF;
    const between = wB * wF * (mB - mF) * (mB - mF);
    if (between > bestVar) {
      bestVar = between;
      best = b;
    }
  }
  return lo + ((best + 1) / bins) * span;
}

/**
 * Box-prompted refinement: inside the union of the prompt boxes, keep the
 * pixels above an Otsu split of the in-box intensities. Everything outside
 * the boxes is background by construction.
 */
export function refineMask(image: Grid, boxes: RoiBox[]): Uint8Array {
  if (boxes.length === 0) throw new Error("no prompt boxes");
  const { height: h, width: w, values } = image;
  const inBox = new Uint8Array(h * w);
  const samples: number[] = [];
  for (const box of boxes) {
    for (let r = Math.max(0, box.rowMin); r <= Math.min(h - 1, box.rowMax); r++) {
      for (let c = Math.max(0, box.colMin); c <= Math.min(w - 1, box.colMax); c++) {
        if (!inBox[r * w + c]) {
          inBox[r * w + c] = 1;
          samples.push(values[r * w + c]);
        }
      }
    }
  }
  if (samples.length === 0) throw new Error("prompt boxes lie outside the image");
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of samples) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const bits = new Uint8Array(h * w);
  if (!(hi > lo)) {
    // constant region: keep the whole box union
    bits.set(inBox);
    return bits;
  }
  const t = otsuThreshold(samples, lo, hi);
  for (let i = 0; i < bits.length; i++) {
    if (inBox[i] && values[i] >= t) bits[i] = 1;
  }
  // a degenerate split can empty the mask; fall back to the box union
  if (!bits.some((b) => b === 1)) bits.set(inBox);
  return bits;
}

export const EMBED_DIM = 64;

/** Unit-norm embedding derived from a byte stream (hashed-feature stand-in). */
export function hashEmbedding(key: string): number[] {
  const stream = splitmixDoubles(fnv1a64(key));
  const z = Array.from({ length: EMBED_DIM }, () => 2 * (stream.next().value as number) - 1);
  const norm = Math.hypot(...z);
  return z.map((v) => v / norm);
}
