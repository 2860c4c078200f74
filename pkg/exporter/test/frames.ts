/** Synthetic clip rendering for the exporter tests. */

import { promises as fs } from "fs";
import * as path from "path";

import { encodePgm, GrayImage } from "../src/image.js";

export interface BlobSpec {
  x: number;
  y: number;
  w: number;
  h: number;
  /** per-frame displacement, pixels */
  vx: number;
  vy: number;
  brightness: number;
}

export function renderFrame(width: number, height: number, blobs: BlobSpec[],
                            frameIndex: number): GrayImage {
  const data = new Float32Array(width * height).fill(24); // dark background
  for (const blob of blobs) {
    const x0 = Math.round(blob.x + blob.vx * frameIndex);
    const y0 = Math.round(blob.y + blob.vy * frameIndex);
    for (let y = y0; y < y0 + blob.h; y++) {
      if (y < 0 || y >= height) continue;
      for (let x = x0; x < x0 + blob.w; x++) {
        if (x < 0 || x >= width) continue;
        data[y * width + x] = blob.brightness;
      }
    }
  }
  return { width, height, data };
}

export function grayToPpm(img: GrayImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  const body = Buffer.alloc(3 * img.width * img.height);
  for (let i = 0; i < img.width * img.height; i++) {
    const value = Math.max(0, Math.min(255, Math.round(img.data[i])));
    body[3 * i] = body[3 * i + 1] = body[3 * i + 2] = value;
  }
  return Buffer.concat([header, body]);
}

export async function writeClip(dir: string, frameCount: number,
                                blobs: BlobSpec[], width = 96, height = 72,
                                format: "pgm" | "ppm" = "pgm"): Promise<void> {
  await fs.mkdir(dir, { recursive: true });
  for (let t = 0; t < frameCount; t++) {
    const img = renderFrame(width, height, blobs, t);
    const name = `${String(t + 1).padStart(6, "0")}.${format}`;
    const buf = format === "pgm" ? encodePgm(img) : grayToPpm(img);
    await fs.writeFile(path.join(dir, name), buf);
  }
}
