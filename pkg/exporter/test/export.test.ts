import { spawnSync } from "child_process";
import { promises as fs } from "fs";
import * as os from "os";
import * as path from "path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { contrastBlobDetector } from "../src/detector.js";
import { decodeFlo, encodeFlo, floFilename } from "../src/flo.js";
import { blockMatchFlow } from "../src/flow.js";
import { decodePnm, encodePgm, resizeGray } from "../src/image.js";
import { exportSequence } from "../src/export.js";
import { parseArgs } from "../src/cli.js";
import { BlobSpec, renderFrame, writeClip } from "./frames.js";

let workDir: string;

beforeAll(async () => {
  workDir = await fs.mkdtemp(path.join(os.tmpdir(), "flow-export-"));
});

afterAll(async () => {
  await fs.rm(workDir, { recursive: true, force: true });
});

const BLOB: BlobSpec = { x: 20, y: 30, w: 12, h: 10, vx: 4, vy: 2, brightness: 220 };

describe("image codec", () => {
  it("round-trips grayscale through PGM", () => {
    const img = renderFrame(16, 12, [BLOB], 0);
    const back = decodePnm(encodePgm(img));
    expect(back.width).toBe(16);
    expect(back.height).toBe(12);
    for (let i = 0; i < back.data.length; i++) {
      expect(Math.abs(back.data[i] - img.data[i])).toBeLessThanOrEqual(0.5);
    }
  });

  it("reads P6 color as luminance", async () => {
    const { grayToPpm } = await import("./frames.js");
    const img = renderFrame(8, 8, [], 0);
    const back = decodePnm(grayToPpm(img));
    expect(back.data[0]).toBeCloseTo(24, 0);
  });

  it("rejects truncated payloads", () => {
    const buf = encodePgm(renderFrame(8, 8, [], 0));
    expect(() => decodePnm(buf.subarray(0, buf.length - 4))).toThrow(/truncated/);
  });

  it("resize keeps uniform images uniform", () => {
    const img = renderFrame(32, 24, [], 0);
    const small = resizeGray(img, 16, 12);
    for (const v of small.data) expect(v).toBeCloseTo(24, 5);
  });
});

describe("flo codec", () => {
  it("round-trips", () => {
    const flow = {
      width: 3, height: 2,
      u: new Float32Array([1, 2, 3, 4, 5, 6]),
      v: new Float32Array([-1, -2, -3, -4, -5, -6]),
    };
    const back = decodeFlo(encodeFlo(flow));
    expect(Array.from(back.u)).toEqual(Array.from(flow.u));
    expect(Array.from(back.v)).toEqual(Array.from(flow.v));
  });

  it("rejects wrong magic", () => {
    expect(() => decodeFlo(Buffer.alloc(16))).toThrow(/not a flo/);
  });

  it("names files 1-indexed with 6 digits", () => {
    expect(floFilename(2)).toBe("000002.flo");
  });
});

describe("contrast-blob detector", () => {
  it("finds a bright blob with a tight box", () => {
    const detect = contrastBlobDetector();
    const boxes = detect(renderFrame(96, 72, [BLOB], 0));
    expect(boxes.length).toBe(1);
    const box = boxes[0];
    expect(box.x).toBe(BLOB.x);
    expect(box.y).toBe(BLOB.y);
    expect(box.w).toBe(BLOB.w);
    expect(box.h).toBe(BLOB.h);
    expect(box.score).toBeGreaterThan(0.6);
  });

  it("returns nothing on a flat frame", () => {
    const detect = contrastBlobDetector();
    expect(detect(renderFrame(64, 48, [], 0))).toEqual([]);
  });
});

describe("block-matcher flow", () => {
  it("recovers a known displacement", () => {
    const estimate = blockMatchFlow();
    const prev = renderFrame(96, 72, [BLOB], 0);
    const cur = renderFrame(96, 72, [BLOB], 1);
    const flow = estimate(prev, cur);
    // sample at the blob center in the current frame
    const cx = Math.round(BLOB.x + BLOB.vx + BLOB.w / 2);
    const cy = Math.round(BLOB.y + BLOB.vy + BLOB.h / 2);
    const idx = cy * 96 + cx;
    expect(flow.u[idx]).toBeCloseTo(BLOB.vx, 0);
    expect(flow.v[idx]).toBeCloseTo(BLOB.vy, 0);
  });

  it("is exactly zero on identical frames", () => {
    const estimate = blockMatchFlow();
    const img = renderFrame(96, 72, [BLOB], 0);
    const flow = estimate(img, { ...img, data: img.data.slice() });
    for (const value of flow.u) expect(value).toBe(0);
    for (const value of flow.v) expect(value).toBe(0);
  });
});

describe("exportSequence", () => {
  it("two-frame smoke: one flow file, detections, valid seqinfo", async () => {
    const framesDir = path.join(workDir, "clip2");
    const outDir = path.join(workDir, "out2");
    await writeClip(framesDir, 2, [BLOB]);
    const summary = await exportSequence({
      framesDir, outDir, detectorId: "contrast-blob", flowModelId: "block-matcher",
      detScoreFloor: 0.1, detSize: null, flowSize: null, fps: 30,
    });
    expect(summary.frameCount).toBe(2);
    expect(summary.flowFileCount).toBe(1);
    expect(summary.detectionCount).toBeGreaterThan(0);

    const det = await fs.readFile(path.join(outDir, "det.txt"), "utf-8");
    for (const line of det.trim().split("\n")) {
      const parts = line.split(",");
      expect(parts.length).toBe(10);
      expect(parts[1]).toBe("-1");
    }
    const seqinfo = await fs.readFile(path.join(outDir, "seqinfo.txt"), "utf-8");
    for (const key of ["name=", "frames=2", "img_w=96", "img_h=72", "flow_w=", "flow_h=", "fps="]) {
      expect(seqinfo).toContain(key);
    }
    const flo = decodeFlo(await fs.readFile(path.join(outDir, "flow", "000002.flo")));
    expect(flo.width).toBe(summary.flowSize.width);
    await expect(fs.access(path.join(outDir, "flow", "000001.flo"))).rejects.toThrow();
  });

  it("duplicated frames give near-zero flow magnitudes", async () => {
    const framesDir = path.join(workDir, "dup");
    const outDir = path.join(workDir, "out-dup");
    await writeClip(framesDir, 1, [BLOB]);
    await fs.copyFile(path.join(framesDir, "000001.pgm"), path.join(framesDir, "000002.pgm"));
    await exportSequence({
      framesDir, outDir, detectorId: "contrast-blob", flowModelId: "block-matcher",
      detScoreFloor: 0.1, detSize: null, flowSize: null, fps: 30,
    });
    const flo = decodeFlo(await fs.readFile(path.join(outDir, "flow", "000002.flo")));
    const meanAbs = (arr: Float32Array) =>
      arr.reduce((acc, value) => acc + Math.abs(value), 0) / arr.length;
    expect(meanAbs(flo.u)).toBeLessThan(0.5);
    expect(meanAbs(flo.v)).toBeLessThan(0.5);
  });

  it("rejects single-frame clips", async () => {
    const framesDir = path.join(workDir, "single");
    await writeClip(framesDir, 1, [BLOB]);
    await expect(exportSequence({
      framesDir, outDir: path.join(workDir, "out-single"),
      detectorId: "contrast-blob", flowModelId: "block-matcher",
      detScoreFloor: 0.1, detSize: null, flowSize: null, fps: 30,
    })).rejects.toThrow(/at least 2 frames/);
  });

  it("unknown model identifiers fail fast", async () => {
    const framesDir = path.join(workDir, "clip2");
    await expect(exportSequence({
      framesDir, outDir: path.join(workDir, "out-x"), detectorId: "yolo-x",
      flowModelId: "block-matcher", detScoreFloor: 0.1, detSize: null,
      flowSize: null, fps: 30,
    })).rejects.toThrow(/unknown detector/);
  });
});

describe("cli argument parsing", () => {
  it("maps flags onto the job", () => {
    const job = parseArgs(["--frames", "a", "--out", "b", "--score-floor", "0.3",
                           "--det-size", "128x96", "--flow-size", "64x48"]);
    expect(job.framesDir).toBe("a");
    expect(job.detScoreFloor).toBeCloseTo(0.3);
    expect(job.detSize).toEqual({ width: 128, height: 96 });
  });

  it("requires frames and out", () => {
    expect(() => parseArgs(["--frames", "a"])).toThrow(/--out/);
  });

  it("rejects unknown flags", () => {
    expect(() => parseArgs(["--framez", "a"])).toThrow(/unknown flag/);
  });
});

describe("primary-component integration", () => {
  it("exported files track and evaluate with zero parse errors", async () => {
    const framesDir = path.join(workDir, "clip6");
    const outDir = path.join(workDir, "out6");
    const frameCount = 6;
    await writeClip(framesDir, frameCount, [BLOB], 96, 72, "ppm");
    await exportSequence({
      framesDir, outDir, detectorId: "contrast-blob", flowModelId: "block-matcher",
      detScoreFloor: 0.1, detSize: null, flowSize: null, fps: 30,
    });

    // ground truth from the known blob motion
    const gtLines: string[] = [];
    for (let t = 1; t <= frameCount; t++) {
      const x = BLOB.x + BLOB.vx * (t - 1);
      const y = BLOB.y + BLOB.vy * (t - 1);
      gtLines.push(`${t},1,${x.toFixed(2)},${y.toFixed(2)},${BLOB.w.toFixed(2)},${BLOB.h.toFixed(2)},1,1,1.0`);
    }
    const gtPath = path.join(outDir, "gt.txt");
    await fs.writeFile(gtPath, gtLines.join("\n") + "\n");

    const resPath = path.join(outDir, "res.txt");
    const track = spawnSync("python3", [
      "-m", "flowtrack.cli", "track",
      "--dets", path.join(outDir, "det.txt"),
      "--seq", path.join(outDir, "seqinfo.txt"),
      "--flow-dir", path.join(outDir, "flow"),
      "--motion", "meanflow", "--out", resPath,
    ], { encoding: "utf-8" });
    expect(track.stderr).toBe("");
    expect(track.status).toBe(0);

    const evaluate = spawnSync("python3", [
      "-m", "flowtrack.cli", "eval", "--gt", gtPath, "--res", resPath,
      "--out", path.join(outDir, "metrics.txt"),
    ], { encoding: "utf-8" });
    expect(evaluate.stderr).toBe("");
    expect(evaluate.status).toBe(0);

    const metrics = await fs.readFile(path.join(outDir, "metrics.txt"), "utf-8");
    const mota = parseFloat(/MOTA=([-\d.]+)/.exec(metrics)![1]);
    expect(mota).toBeGreaterThan(0.9);
  }, 30000);
});
