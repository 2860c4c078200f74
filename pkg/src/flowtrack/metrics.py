"""Tracking evaluation: CLEAR-MOT counting, MOTA, IDF1, and the
motion-complexity statistic (mean relative acceleration).

Matching is class-exact: records are partitioned by class, evaluated
independently, and the counts pooled. MOTA may be negative when false
positives outnumber the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .tracker import hungarian, iou


@dataclass
class EvalReport:
    mota: float
    idf1: float
    motp: float
    fp: int
    fn: int
    id_switches: int
    gt_count: int
    idtp: int
    idfp: int
    idfn: int
    per_class: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_counts(cls, fp, fn, id_switches, gt_count, idtp, idfp, idfn,
                    motp, per_class=None):
        id_denom = 2 * idtp + idfp + idfn
        return cls(
            mota=mota(fp, fn, id_switches, gt_count),
            idf1=(2 * idtp / id_denom) if id_denom else 0.0,
            motp=motp,
            fp=fp, fn=fn, id_switches=id_switches, gt_count=gt_count,
            idtp=idtp, idfp=idfp, idfn=idfn,
            per_class=per_class or {},
        )


def mota(fp: int, fn: int, ids: int, gt_count: int) -> float:
    """1 - (FP + FN + IDs) / GT. Unbounded below."""
    if gt_count <= 0:
        raise ValueError("MOTA is undefined for an empty ground truth")
    return 1.0 - (fp + fn + ids) / gt_count


def _group_by_frame(records) -> dict[int, list]:
    frames: dict[int, list] = {}
    for rec in records:
        frames.setdefault(rec.frame, []).append((rec.track_id, rec.box))
    return frames


def clear_match(gt_frames: dict, pred_frames: dict, iou_threshold: float):
    """Frame-by-frame CLEAR correspondence.

    Inputs map frame -> list of (id, box). Matches from the previous frame
    are carried over while the pair still overlaps at the threshold; the
    remainder is assigned by Hungarian on 1-IoU. Returns
    (per-frame matches, fp, fn, id_switches, motp).
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou threshold must be in (0,1], got {iou_threshold}")
    fp = fn = switches = 0
    iou_sum = 0.0
    match_count = 0
    prev_pairs: dict[int, int] = {}   # gt id -> pred id matched last frame
    last_match: dict[int, int] = {}   # gt id -> most recent matched pred id
    frame_matches: dict[int, list] = {}
    frames = sorted(set(gt_frames) | set(pred_frames))
    for frame in frames:
        gts = gt_frames.get(frame, [])
        preds = pred_frames.get(frame, [])
        gt_boxes = {gid: box for gid, box in gts}
        pred_boxes = {pid: box for pid, box in preds}
        pairs: list[tuple[int, int, float]] = []
        used_gt, used_pred = set(), set()
        for gid, pid in prev_pairs.items():
            if gid in gt_boxes and pid in pred_boxes:
                overlap = iou(gt_boxes[gid], pred_boxes[pid])
                if overlap >= iou_threshold:
                    pairs.append((gid, pid, overlap))
                    used_gt.add(gid)
                    used_pred.add(pid)
        free_gt = [gid for gid, _ in gts if gid not in used_gt]
        free_pred = [pid for pid, _ in preds if pid not in used_pred]
        if free_gt and free_pred:
            cost = [[1.0 - iou(gt_boxes[g], pred_boxes[p]) for p in free_pred]
                    for g in free_gt]
            for r, c in hungarian(cost):
                overlap = 1.0 - cost[r][c]
                if overlap >= iou_threshold:
                    pairs.append((free_gt[r], free_pred[c], overlap))
                    used_gt.add(free_gt[r])
                    used_pred.add(free_pred[c])
        fp += len(preds) - len(pairs)
        fn += len(gts) - len(pairs)
        for gid, pid, overlap in pairs:
            if gid in last_match and last_match[gid] != pid:
                switches += 1
            last_match[gid] = pid
            iou_sum += overlap
            match_count += 1
        prev_pairs = {gid: pid for gid, pid, _ in pairs}
        frame_matches[frame] = [(gid, pid) for gid, pid, _ in pairs]
    motp = iou_sum / match_count if match_count else 0.0
    return frame_matches, fp, fn, switches, motp


def idf1(gt_frames: dict, pred_frames: dict, iou_threshold: float):
    """Identity-aware F1 over a globally optimal gt-to-pred identity mapping.

    Edge weight between two identities is the number of frames where the
    pair overlaps at the threshold; Hungarian maximizes the total matched
    frames (IDTP). Returns (idf1, idtp, idfp, idfn).
    """
    gt_ids = sorted({gid for boxes in gt_frames.values() for gid, _ in boxes})
    pred_ids = sorted({pid for boxes in pred_frames.values() for pid, _ in boxes})
    gt_total = sum(len(v) for v in gt_frames.values())
    pred_total = sum(len(v) for v in pred_frames.values())
    if not gt_ids or not pred_ids:
        return 0.0, 0, pred_total, gt_total
    g_index = {g: i for i, g in enumerate(gt_ids)}
    p_index = {p: j for j, p in enumerate(pred_ids)}
    weight = [[0] * len(pred_ids) for _ in gt_ids]
    for frame in set(gt_frames) & set(pred_frames):
        for gid, gbox in gt_frames[frame]:
            for pid, pbox in pred_frames[frame]:
                if iou(gbox, pbox) >= iou_threshold:
                    weight[g_index[gid]][p_index[pid]] += 1
    cost = [[-w for w in row] for row in weight]
    idtp = sum(weight[r][c] for r, c in hungarian(cost))
    idfp = pred_total - idtp
    idfn = gt_total - idtp
    denom = 2 * idtp + idfp + idfn
    return (2 * idtp / denom) if denom else 0.0, idtp, idfp, idfn


def evaluate(gt_records, pred_records, iou_threshold: float = 0.5) -> EvalReport:
    """Full evaluation with class-exact matching and pooled counts."""
    classes = sorted({r.class_id for r in gt_records} | {r.class_id for r in pred_records})
    totals = dict(fp=0, fn=0, ids=0, gt=0, idtp=0, idfp=0, idfn=0)
    iou_weighted = 0.0
    match_total = 0
    per_class = {}
    for cls in classes:
        gtf = _group_by_frame([r for r in gt_records if r.class_id == cls])
        prf = _group_by_frame([r for r in pred_records if r.class_id == cls])
        matches, fp, fn, ids, motp = clear_match(gtf, prf, iou_threshold)
        n_matched = sum(len(v) for v in matches.values())
        _, idtp, idfp, idfn = idf1(gtf, prf, iou_threshold)
        gt_count = sum(len(v) for v in gtf.values())
        totals["fp"] += fp
        totals["fn"] += fn
        totals["ids"] += ids
        totals["gt"] += gt_count
        totals["idtp"] += idtp
        totals["idfp"] += idfp
        totals["idfn"] += idfn
        iou_weighted += motp * n_matched
        match_total += n_matched
        if gt_count:
            per_class[cls] = EvalReport.from_counts(
                fp, fn, ids, gt_count, idtp, idfp, idfn, motp)
    pooled_motp = iou_weighted / match_total if match_total else 0.0
    return EvalReport.from_counts(
        totals["fp"], totals["fn"], totals["ids"], totals["gt"],
        totals["idtp"], totals["idfp"], totals["idfn"], pooled_motp,
        per_class=per_class)


def merge_reports(reports) -> EvalReport:
    """Pool several sequence reports by summing counts and recomputing."""
    reports = list(reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    ids = sum(r.id_switches for r in reports)
    gt = sum(r.gt_count for r in reports)
    idtp = sum(r.idtp for r in reports)
    idfp = sum(r.idfp for r in reports)
    idfn = sum(r.idfn for r in reports)
    # recover the pooled mean IoU through each report's matched-pair count
    pair_counts = [r.gt_count - r.fn for r in reports]
    total_pairs = sum(pair_counts)
    motp = (sum(r.motp * n for r, n in zip(reports, pair_counts)) / total_pairs
            if total_pairs else 0.0)
    return EvalReport.from_counts(fp, fn, ids, gt, idtp, idfp, idfn, motp)


# ---------------------------------------------------------------------------
# Motion complexity
# ---------------------------------------------------------------------------

def relative_velocity(track_history, t_i: int) -> float:
    """Center displacement into frame t_i divided by the box diagonal at t_i.

    ``track_history`` maps frame -> (x, y, w, h); both t_i and the previous
    history entry must be present.
    """
    frames = sorted(track_history)
    if t_i not in track_history:
        raise ValueError(f"frame {t_i} missing from history")
    pos = frames.index(t_i)
    if pos == 0:
        raise ValueError(f"frame before {t_i} missing from history")
    prev = frames[pos - 1]
    x0, y0, w0, h0 = track_history[prev]
    x1, y1, w1, h1 = track_history[t_i]
    dx = (x1 + w1 / 2) - (x0 + w0 / 2)
    dy = (y1 + h1 / 2) - (y0 + h0 / 2)
    return math.hypot(dx, dy) / math.hypot(w1, h1)


def mra(track_history, mode: str = "absolute") -> float:
    """Mean frame-to-frame change of the size-normalized center velocity.

    Velocity needs a preceding frame, so with n history entries there are
    n-2 usable velocity differences. ``absolute`` mode (the reported
    statistic) averages their magnitudes over n-2; ``literal`` mode keeps the
    signed sum divided by n, which telescopes to the net velocity change.
    """
    if mode not in ("literal", "absolute"):
        raise ValueError(f"unknown mra mode {mode!r}")
    frames = sorted(track_history)
    n = len(frames)
    if n < 3:
        raise ValueError(f"history too short for acceleration: {n} < 3 frames")
    velocities = [relative_velocity(track_history, f) for f in frames[1:]]
    diffs = [b - a for a, b in zip(velocities, velocities[1:])]
    if mode == "literal":
        return sum(diffs) / n
    return sum(abs(d) for d in diffs) / (n - 2)


def sequence_mra(records, mode: str = "absolute"):
    """Per-object MRA plus the sequence mean (objects shorter than 3 frames
    are skipped). Returns (per_object dict, mean or None)."""
    histories: dict[int, dict] = {}
    for rec in records:
        histories.setdefault(rec.track_id, {})[rec.frame] = rec.box
    per_object = {}
    for tid, hist in sorted(histories.items()):
        if len(hist) >= 3:
            per_object[tid] = mra(hist, mode)
    mean = sum(per_object.values()) / len(per_object) if per_object else None
    return per_object, mean


# ---------------------------------------------------------------------------
# Report formatting
# ---------------------------------------------------------------------------

REPORT_KEYS = ("MOTA", "IDF1", "MOTP", "FP", "FN", "IDs", "GT", "IDTP", "IDFP", "IDFN")


def report_values(report: EvalReport) -> dict:
    return {
        "MOTA": report.mota, "IDF1": report.idf1, "MOTP": report.motp,
        "FP": report.fp, "FN": report.fn, "IDs": report.id_switches,
        "GT": report.gt_count, "IDTP": report.idtp, "IDFP": report.idfp,
        "IDFN": report.idfn,
    }


def report_keyvalues(report: EvalReport) -> str:
    values = report_values(report)
    lines = []
    for key in REPORT_KEYS:
        v = values[key]
        lines.append(f"{key}={v:.6f}" if isinstance(v, float) else f"{key}={v}")
    return "\n".join(lines) + "\n"


def report_table(report: EvalReport) -> str:
    rows = [("all", report)] + [(f"class {c}", r) for c, r in sorted(report.per_class.items())]
    header = f"{'':>10} {'MOTA':>8} {'IDF1':>8} {'MOTP':>8} {'FP':>6} {'FN':>6} {'IDs':>5} {'GT':>6}"
    lines = [header]
    for label, r in rows:
        lines.append(
            f"{label:>10} {r.mota:>8.4f} {r.idf1:>8.4f} {r.motp:>8.4f} "
            f"{r.fp:>6d} {r.fn:>6d} {r.id_switches:>5d} {r.gt_count:>6d}"
        )
    return "\n".join(lines)
