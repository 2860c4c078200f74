/**
 * Built-in optical-flow estimators, selectable by identifier.
 *
 * The default "block-matcher" runs exhaustive block matching on a coarse
 * grid (sum of absolute differences, small-displacement tie-break so
 * identical frames produce exactly zero flow) and interpolates the grid
 * vectors into a dense per-pixel field.
 */

import { FlowField } from "./flo.js";
import { GrayImage } from "./image.js";

export type FlowEstimator = (prev: GrayImage, cur: GrayImage) => FlowField;

function sad(prev: GrayImage, cur: GrayImage, cx: number, cy: number,
             du: number, dv: number, half: number): number {
  const { width, height } = prev;
  let total = 0;
  let count = 0;
  for (let dy = -half; dy <= half; dy++) {
    const y = cy + dy;
    const py = y + dv;
    if (y < 0 || y >= height || py < 0 || py >= height) continue;
    for (let dx = -half; dx <= half; dx++) {
      const x = cx + dx;
      const px = x + du;
      if (x < 0 || x >= width || px < 0 || px >= width) continue;
      total += Math.abs(cur.data[y * width + x] - prev.data[py * width + px]);
      count++;
    }
  }
  return count > 0 ? total / count : Number.POSITIVE_INFINITY;
}

export function blockMatchFlow(options: {
  /** grid spacing in pixels (default 6) */
  gridStep?: number;
  /** half window size for matching (default 5 -> 11x11 blocks) */
  halfWindow?: number;
  /** search radius in pixels (default 10) */
  searchRadius?: number;
} = {}): FlowEstimator {
  const step = options.gridStep ?? 6;
  const half = options.halfWindow ?? 5;
  const radius = options.searchRadius ?? 10;

  return (prev, cur) => {
    if (prev.width !== cur.width || prev.height !== cur.height) {
      throw new Error(
        `frame size changed: ${prev.width}x${prev.height} -> ${cur.width}x${cur.height}`);
    }
    const { width, height } = cur;
    const cols = Math.max(2, Math.floor((width - 1) / step) + 1);
    const rows = Math.max(2, Math.floor((height - 1) / step) + 1);
    const gu = new Float32Array(rows * cols);
    const gv = new Float32Array(rows * cols);
    for (let r = 0; r < rows; r++) {
      const cy = Math.min(r * step, height - 1);
      for (let c = 0; c < cols; c++) {
        const cx = Math.min(c * step, width - 1);
        let bestCost = Number.POSITIVE_INFINITY;
        let bestU = 0;
        let bestV = 0;
        for (let dv = -radius; dv <= radius; dv++) {
          for (let du = -radius; du <= radius; du++) {
            // the block at (cx, cy) in the current frame came from
            // (cx - u, cy - v) in the previous frame; tiny magnitude
            // penalty so identical content resolves to zero motion
            const cost = sad(prev, cur, cx, cy, -du, -dv, half)
              + 1e-4 * (Math.abs(du) + Math.abs(dv));
            if (cost < bestCost - 1e-12) {
              bestCost = cost;
              bestU = du;
              bestV = dv;
            }
          }
        }
        gu[r * cols + c] = bestU;
        gv[r * cols + c] = bestV;
      }
    }

    // dense field by bilinear interpolation of the grid vectors
    const u = new Float32Array(width * height);
    const v = new Float32Array(width * height);
    for (let y = 0; y < height; y++) {
      const gy = Math.min(y / step, rows - 1);
      const r0 = Math.floor(gy);
      const r1 = Math.min(r0 + 1, rows - 1);
      const fy = gy - r0;
      for (let x = 0; x < width; x++) {
        const gx = Math.min(x / step, cols - 1);
        const c0 = Math.floor(gx);
        const c1 = Math.min(c0 + 1, cols - 1);
        const fx = gx - c0;
        const idx = y * width + x;
        u[idx] = (gu[r0 * cols + c0] * (1 - fx) + gu[r0 * cols + c1] * fx) * (1 - fy)
          + (gu[r1 * cols + c0] * (1 - fx) + gu[r1 * cols + c1] * fx) * fy;
        v[idx] = (gv[r0 * cols + c0] * (1 - fx) + gv[r0 * cols + c1] * fx) * (1 - fy)
          + (gv[r1 * cols + c0] * (1 - fx) + gv[r1 * cols + c1] * fx) * fy;
      }
    }
    return { width, height, u, v };
  };
}

const ESTIMATORS: Record<string, (opts?: object) => FlowEstimator> = {
  "block-matcher": blockMatchFlow,
};

export function makeFlowEstimator(id: string): FlowEstimator {
  const factory = ESTIMATORS[id];
  if (!factory) {
    throw new Error(`unknown flow model '${id}' (available: ${Object.keys(ESTIMATORS).join(", ")})`);
  }
  return factory();
}

export function registerFlowEstimator(id: string, factory: (opts?: object) => FlowEstimator): void {
  ESTIMATORS[id] = factory;
}
