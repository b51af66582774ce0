#!/usr/bin/env node
/**
 * mwm-bridge — external provider speaking the toolkit's file contracts.
 *
 *   mwm-bridge saliency <image.mwmg> <prompt> <out.mwmg>
 *   mwm-bridge refine   <image.mwmg> <boxes.jsonl> <out_mask.pgm>
 *   mwm-bridge embed    <manifest.jsonl> <out.jsonl>
 *
 * `refine` implements the subprocess refinement-provider contract: exit 0
 * and a binary PGM of the image's dimensions on success, nonzero exit with
 * a message on stderr otherwise. `embed` reads JSONL records with
 * {image: path, prompt: string} and emits one embedding record per line.
 */

import { readFileSync, writeFileSync } from "node:fs";

import {
  EMBED_DIM,
  hashEmbedding,
  promptSaliency,
  refineMask,
} from "./analytic.js";
import { readBoxesJsonl, readGrid, writeGrid, writeMaskPgm } from "./formats.js";

function usage(): never {
  process.stderr.write(
    "usage: mwm-bridge saliency <image.mwmg> <prompt> <out.mwmg>\n" +
      "       mwm-bridge refine <image.mwmg> <boxes.jsonl> <out_mask.pgm>\n" +
      "       mwm-bridge embed <manifest.jsonl> <out.jsonl>\n",
  );
  process.exit(2);
}

export function main(argv: string[]): void {
  const [command, ...rest] = argv;
  switch (command) {
    case "saliency": {
      if (rest.length !== 3) usage();
      const [imagePath, prompt, outPath] = rest;
      const image = readGrid(imagePath);
      writeGrid(outPath, promptSaliency(image, prompt));
      break;
    }
    case "refine": {
      if (rest.length !== 3) usage();
      const [imagePath, boxesPath, outPath] = rest;
      const image = readGrid(imagePath);
      const boxes = readBoxesJsonl(boxesPath);
      const bits = refineMask(image, boxes);
      writeMaskPgm(outPath, image.height, image.width, bits);
      break;
    }
    case "embed": {
      if (rest.length !== 2) usage();
      const [manifestPath, outPath] = rest;
      const lines: string[] = [];
      for (const line of readFileSync(manifestPath, "utf-8").split("\n")) {
        if (!line.trim()) continue;
        const rec = JSON.parse(line);
        const image = readGrid(rec.image);
        const zImg = hashEmbedding(`img:${Buffer.from(image.values.buffer).toString("base64")}`);
        const zText = hashEmbedding(`text:${rec.prompt}`);
        lines.push(
          JSON.stringify({
            image: rec.image,
            prompt: rec.prompt,
            dim: EMBED_DIM,
            z_img: zImg,
            z_text: zText,
          }),
        );
      }
      writeFileSync(outPath, lines.join("\n") + (lines.length ? "\n" : ""));
      break;
    }
    default:
      usage();
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  try {
    main(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`mwm-bridge: ${err instanceof Error ? err.message : String(err)}\n`);
    process.exit(1);
  }
}
