/**
 * Built-in object detectors, selectable by identifier.
 *
 * The default "contrast-blob" detector is a classical pipeline: estimate the
 * background level from the luminance histogram, threshold the absolute
 * contrast against it, and turn connected components into scored boxes. It
 * needs no downloaded weights, which keeps the exporter self-contained;
 * heavier models can be registered under new identifiers.
 */

import { GrayImage } from "./image.js";

export interface DetectionBox {
  /** top-left corner, pixels */
  x: number;
  y: number;
  w: number;
  h: number;
  /** confidence in [0, 1] */
  score: number;
  classId: number;
}

export type Detector = (img: GrayImage) => DetectionBox[];

function backgroundLevel(img: GrayImage): number {
  const hist = new Float64Array(256);
  for (let i = 0; i < img.data.length; i++) {
    hist[Math.max(0, Math.min(255, Math.round(img.data[i])))]++;
  }
  let best = 0;
  for (let v = 1; v < 256; v++) if (hist[v] > hist[best]) best = v;
  return best;
}

export function contrastBlobDetector(options: {
  /** contrast threshold as a fraction of the peak contrast (default 0.35) */
  relativeThreshold?: number;
  /** absolute contrast floor in gray levels (default 12) */
  minContrast?: number;
  minArea?: number;
} = {}): Detector {
  const relative = options.relativeThreshold ?? 0.35;
  const minContrast = options.minContrast ?? 12;
  const minArea = options.minArea ?? 6;

  return (img) => {
    const { width, height, data } = img;
    const bg = backgroundLevel(img);
    const n = width * height;
    const contrast = new Float32Array(n);
    let peak = 0;
    for (let i = 0; i < n; i++) {
      contrast[i] = Math.abs(data[i] - bg);
      if (contrast[i] > peak) peak = contrast[i];
    }
    const threshold = Math.max(minContrast, relative * peak);
    const labels = new Int32Array(n).fill(-1);
    const boxes: DetectionBox[] = [];
    const stack: number[] = [];
    let nextLabel = 0;
    for (let start = 0; start < n; start++) {
      if (labels[start] !== -1 || contrast[start] < threshold) continue;
      let minX = width, maxX = -1, minY = height, maxY = -1;
      let area = 0;
      let sum = 0;
      labels[start] = nextLabel;
      stack.push(start);
      while (stack.length) {
        const idx = stack.pop()!;
        const y = Math.floor(idx / width);
        const x = idx - y * width;
        area++;
        sum += contrast[idx];
        if (x < minX) minX = x;
        if (x > maxX) maxX = x;
        if (y < minY) minY = y;
        if (y > maxY) maxY = y;
        for (let dy = -1; dy <= 1; dy++) {
          for (let dx = -1; dx <= 1; dx++) {
            const nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
            const nidx = ny * width + nx;
            if (labels[nidx] === -1 && contrast[nidx] >= threshold) {
              labels[nidx] = nextLabel;
              stack.push(nidx);
            }
          }
        }
      }
      nextLabel++;
      if (area < minArea) continue;
      boxes.push({
        x: minX,
        y: minY,
        w: maxX - minX + 1,
        h: maxY - minY + 1,
        score: Math.min(1, (sum / area) / Math.max(peak, 1)),
        classId: 1,
      });
    }
    boxes.sort((a, b) => b.score - a.score || a.x - b.x || a.y - b.y);
    return boxes;
  };
}

const DETECTORS: Record<string, (opts?: object) => Detector> = {
  "contrast-blob": contrastBlobDetector,
};

export function makeDetector(id: string): Detector {
  const factory = DETECTORS[id];
  if (!factory) {
    throw new Error(`unknown detector '${id}' (available: ${Object.keys(DETECTORS).join(", ")})`);
  }
  return factory();
}

export function registerDetector(id: string, factory: (opts?: object) => Detector): void {
  DETECTORS[id] = factory;
}
