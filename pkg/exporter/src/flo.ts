/** Middlebury .flo codec (magic 202021.25, i32 dims, interleaved f32 u/v). */

export interface FlowField {
  width: number;
  height: number;
  /** row-major x-offsets, flow-map pixels */
  u: Float32Array;
  /** row-major y-offsets, flow-map pixels */
  v: Float32Array;
}

export const FLO_MAGIC = 202021.25;

export function encodeFlo(flow: FlowField): Buffer {
  const n = flow.width * flow.height;
  const buf = Buffer.alloc(12 + 8 * n);
  buf.writeFloatLE(FLO_MAGIC, 0);
  buf.writeInt32LE(flow.width, 4);
  buf.writeInt32LE(flow.height, 8);
  for (let i = 0; i < n; i++) {
    buf.writeFloatLE(flow.u[i], 12 + 8 * i);
    buf.writeFloatLE(flow.v[i], 12 + 8 * i + 4);
  }
  return buf;
}

export function decodeFlo(buf: Buffer): FlowField {
  if (buf.length < 12 || Math.abs(buf.readFloatLE(0) - FLO_MAGIC) > 1e-3) {
    throw new Error("not a flo file");
  }
  const width = buf.readInt32LE(4);
  const height = buf.readInt32LE(8);
  if (width <= 0 || height <= 0) throw new Error(`bad flo dimensions ${width}x${height}`);
  const n = width * height;
  if (buf.length < 12 + 8 * n) throw new Error("truncated flo payload");
  const u = new Float32Array(n);
  const v = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    u[i] = buf.readFloatLE(12 + 8 * i);
    v[i] = buf.readFloatLE(12 + 8 * i + 4);
  }
  return { width, height, u, v };
}

export function floFilename(frame: number): string {
  return `${String(frame).padStart(6, "0")}.flo`;
}
