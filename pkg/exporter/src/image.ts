/**
 * Grayscale frames plus a PPM/PGM codec (binary P6/P5), the only image
 * format the exporter reads natively. Convert other sources with e.g.
 * `ffmpeg -i clip.mp4 frames/%06d.ppm`.
 */

import { promises as fs } from "fs";

export interface GrayImage {
  width: number;
  height: number;
  /** row-major luminance in [0, 255] */
  data: Float32Array;
}

function parseHeader(buf: Buffer): { magic: string; width: number; height: number; maxval: number; offset: number } {
  // magic, whitespace-separated fields, '#' comments allowed
  let pos = 0;
  const tokens: string[] = [];
  while (tokens.length < 4 && pos < buf.length) {
    const ch = String.fromCharCode(buf[pos]);
    if (ch === "#") {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      pos++;
    } else if (/\s/.test(ch)) {
      pos++;
    } else {
      let start = pos;
      while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
      tokens.push(buf.subarray(start, pos).toString("ascii"));
    }
  }
  if (tokens.length < 4) throw new Error("truncated PNM header");
  pos++; // single whitespace after maxval
  const [magic, w, h, maxval] = tokens;
  return { magic, width: parseInt(w, 10), height: parseInt(h, 10), maxval: parseInt(maxval, 10), offset: pos };
}

export function decodePnm(buf: Buffer): GrayImage {
  const { magic, width, height, maxval, offset } = parseHeader(buf);
  if (width <= 0 || height <= 0) throw new Error(`bad PNM dimensions ${width}x${height}`);
  if (maxval <= 0 || maxval > 255) throw new Error(`unsupported PNM maxval ${maxval}`);
  const n = width * height;
  const data = new Float32Array(n);
  const scale = 255 / maxval;
  if (magic === "P5") {
    if (buf.length - offset < n) throw new Error("truncated P5 payload");
    for (let i = 0; i < n; i++) data[i] = buf[offset + i] * scale;
  } else if (magic === "P6") {
    if (buf.length - offset < 3 * n) throw new Error("truncated P6 payload");
    for (let i = 0; i < n; i++) {
      const r = buf[offset + 3 * i];
      const g = buf[offset + 3 * i + 1];
      const b = buf[offset + 3 * i + 2];
      data[i] = (0.299 * r + 0.587 * g + 0.114 * b) * scale;
    }
  } else {
    throw new Error(`unsupported image magic ${magic} (need binary P5/P6)`);
  }
  return { width, height, data };
}

export function encodePgm(img: GrayImage): Buffer {
  const header = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, "ascii");
  const body = Buffer.alloc(img.width * img.height);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(img.data[i])));
  }
  return Buffer.concat([header, body]);
}

export async function loadGray(path: string): Promise<GrayImage> {
  return decodePnm(await fs.readFile(path));
}

/** Bilinear resize with pixel-center alignment and edge clamping. */
export function resizeGray(img: GrayImage, width: number, height: number): GrayImage {
  if (width === img.width && height === img.height) {
    return { width, height, data: img.data.slice() };
  }
  const out = new Float32Array(width * height);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let y = 0; y < height; y++) {
    let srcY = (y + 0.5) * sy - 0.5;
    srcY = Math.min(Math.max(srcY, 0), img.height - 1);
    const y0 = Math.floor(srcY);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const fy = srcY - y0;
    for (let x = 0; x < width; x++) {
      let srcX = (x + 0.5) * sx - 0.5;
      srcX = Math.min(Math.max(srcX, 0), img.width - 1);
      const x0 = Math.floor(srcX);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const fx = srcX - x0;
      const top = img.data[y0 * img.width + x0] * (1 - fx) + img.data[y0 * img.width + x1] * fx;
      const bot = img.data[y1 * img.width + x0] * (1 - fx) + img.data[y1 * img.width + x1] * fx;
      out[y * width + x] = top * (1 - fy) + bot * fy;
    }
  }
  return { width, height, data: out };
}
