/**
 * Export pipeline: frames directory in, tracker-ready files out.
 *
 * Frames are ordered lexicographically and become 1-indexed. Detections are
 * written as MOT CSV lines against the detection input size; flow for frame
 * t is estimated from frames (t-1, t) at the flow input size, so there is no
 * flow file for frame 1.
 */

import { promises as fs } from "fs";
import * as path from "path";

import { DetectionBox, makeDetector } from "./detector.js";
import { encodeFlo, floFilename } from "./flo.js";
import { makeFlowEstimator } from "./flow.js";
import { GrayImage, loadGray, resizeGray } from "./image.js";

export interface ExportJob {
  framesDir: string;
  outDir: string;
  detectorId: string;
  flowModelId: string;
  /** detections below this confidence are dropped */
  detScoreFloor: number;
  /** detection input size; frames are resized to it (null = native size) */
  detSize: { width: number; height: number } | null;
  /** flow input size (null = half the detection size) */
  flowSize: { width: number; height: number } | null;
  fps: number;
}

export const DEFAULT_JOB: Omit<ExportJob, "framesDir" | "outDir"> = {
  detectorId: "contrast-blob",
  flowModelId: "block-matcher",
  detScoreFloor: 0.1,
  detSize: null,
  flowSize: null,
  fps: 30,
};

export interface ExportSummary {
  frameCount: number;
  detectionCount: number;
  flowFileCount: number;
  imgSize: { width: number; height: number };
  flowSize: { width: number; height: number };
}

const FRAME_EXTENSIONS = new Set([".ppm", ".pgm", ".pnm"]);

export async function listFrames(framesDir: string): Promise<string[]> {
  const names = (await fs.readdir(framesDir))
    .filter((n) => FRAME_EXTENSIONS.has(path.extname(n).toLowerCase()))
    .sort();
  return names.map((n) => path.join(framesDir, n));
}

function detLine(frame: number, box: DetectionBox): string {
  const f = (x: number) => x.toFixed(2);
  return `${frame},-1,${f(box.x)},${f(box.y)},${f(box.w)},${f(box.h)},` +
    `${box.score.toFixed(2)},${box.classId},-1,-1`;
}

export async function exportSequence(job: ExportJob): Promise<ExportSummary> {
  const framePaths = await listFrames(job.framesDir);
  if (framePaths.length < 2) {
    throw new Error(`need at least 2 frames, found ${framePaths.length} in ${job.framesDir}`);
  }
  const detector = makeDetector(job.detectorId);
  const flowEstimator = makeFlowEstimator(job.flowModelId);

  const first = await loadGray(framePaths[0]);
  const detSize = job.detSize ?? { width: first.width, height: first.height };
  const flowSize = job.flowSize ?? {
    width: Math.max(2, Math.round(detSize.width / 2)),
    height: Math.max(2, Math.round(detSize.height / 2)),
  };

  await fs.mkdir(job.outDir, { recursive: true });
  const flowDir = path.join(job.outDir, "flow");
  await fs.mkdir(flowDir, { recursive: true });

  const detLines: string[] = [];
  let detectionCount = 0;
  let flowFileCount = 0;
  let prevFlowFrame: GrayImage | null = null;
  for (let t = 1; t <= framePaths.length; t++) {
    let img: GrayImage;
    try {
      img = t === 1 ? first : await loadGray(framePaths[t - 1]);
    } catch (err) {
      throw new Error(`unreadable frame ${framePaths[t - 1]}: ${(err as Error).message}`);
    }
    const detFrame = resizeGray(img, detSize.width, detSize.height);
    for (const box of detector(detFrame)) {
      if (box.score < job.detScoreFloor) continue;
      detLines.push(detLine(t, box));
      detectionCount++;
    }
    const flowFrame = resizeGray(img, flowSize.width, flowSize.height);
    if (prevFlowFrame) {
      const flow = flowEstimator(prevFlowFrame, flowFrame);
      await fs.writeFile(path.join(flowDir, floFilename(t)), encodeFlo(flow));
      flowFileCount++;
    }
    prevFlowFrame = flowFrame;
  }

  await fs.writeFile(path.join(job.outDir, "det.txt"), detLines.join("\n") + (detLines.length ? "\n" : ""));
  const name = path.basename(path.resolve(job.outDir));
  const seqinfo = [
    `name=${name}`,
    `frames=${framePaths.length}`,
    `img_w=${detSize.width}`,
    `img_h=${detSize.height}`,
    `flow_w=${flowSize.width}`,
    `flow_h=${flowSize.height}`,
    `fps=${job.fps}`,
  ].join("\n") + "\n";
  await fs.writeFile(path.join(job.outDir, "seqinfo.txt"), seqinfo);

  return {
    frameCount: framePaths.length,
    detectionCount,
    flowFileCount,
    imgSize: detSize,
    flowSize,
  };
}
