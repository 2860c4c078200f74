export { DetectionBox, Detector, contrastBlobDetector, makeDetector, registerDetector } from "./detector.js";
export { FlowField, decodeFlo, encodeFlo, floFilename } from "./flo.js";
export { FlowEstimator, blockMatchFlow, makeFlowEstimator, registerFlowEstimator } from "./flow.js";
export { GrayImage, decodePnm, encodePgm, loadGray, resizeGray } from "./image.js";
export { DEFAULT_JOB, ExportJob, ExportSummary, exportSequence, listFrames } from "./export.js";
