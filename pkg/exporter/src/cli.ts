#!/usr/bin/env node
/**
 * flowtrack-export --frames DIR --out DIR [--detector ID] [--flow-model ID]
 *                  [--score-floor F] [--det-size WxH] [--flow-size WxH] [--fps F]
 */

import { DEFAULT_JOB, ExportJob, exportSequence } from "./export.js";

function parseSize(text: string): { width: number; height: number } {
  const m = /^(\d+)x(\d+)$/i.exec(text);
  if (!m) throw new Error(`expected WxH, got '${text}'`);
  return { width: parseInt(m[1], 10), height: parseInt(m[2], 10) };
}

export function parseArgs(argv: string[]): ExportJob {
  const job: ExportJob = { ...DEFAULT_JOB, framesDir: "", outDir: "" };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${flag}`);
      return argv[++i];
    };
    switch (flag) {
      case "--frames": job.framesDir = next(); break;
      case "--out": job.outDir = next(); break;
      case "--detector": job.detectorId = next(); break;
      case "--flow-model": job.flowModelId = next(); break;
      case "--score-floor": job.detScoreFloor = parseFloat(next()); break;
      case "--det-size": job.detSize = parseSize(next()); break;
      case "--flow-size": job.flowSize = parseSize(next()); break;
      case "--fps": job.fps = parseFloat(next()); break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!job.framesDir || !job.outDir) {
    throw new Error("--frames and --out are required");
  }
  return job;
}

export async function main(argv: string[]): Promise<number> {
  try {
    const job = parseArgs(argv);
    const summary = await exportSequence(job);
    console.log(
      `exported ${summary.frameCount} frames: ${summary.detectionCount} detections, ` +
      `${summary.flowFileCount} flow maps (img ${summary.imgSize.width}x${summary.imgSize.height}, ` +
      `flow ${summary.flowSize.width}x${summary.flowSize.height})`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
