"""MOTChallenge-style CSV files and sequence metadata.

Line format: ``frame,id,x,y,w,h,score_or_conf,class,visibility[,-1]``.
Ground truth carries real ids and a flag column of 1; detections carry
id -1 and their confidence; results carry track ids, the confidence of the
matched detection, and -1 fillers. Frames are 1-indexed, coordinates are
pixel floats written with 2 decimal places, lines sorted by (frame, id).

Sequence metadata is a flat key=value file with keys name, frames, img_w,
img_h, flow_w, flow_h, fps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tracker import Detection

KINDS = ("gt", "det", "result")


class MotParseError(ValueError):
    """Raised for malformed MOT CSV or seqinfo content."""


@dataclass
class MotRecord:
    """One ground-truth or result box."""

    frame: int
    track_id: int
    box: tuple[float, float, float, float]
    score: float
    class_id: int
    visibility: float = -1.0


@dataclass
class SeqMeta:
    name: str
    frame_count: int
    img_width: int
    img_height: int
    flow_width: int
    flow_height: int
    fps: float = 30.0

    def __post_init__(self):
        if self.frame_count < 1:
            raise MotParseError(f"frame count must be >= 1, got {self.frame_count}")
        for attr in ("img_width", "img_height", "flow_width", "flow_height"):
            if getattr(self, attr) <= 0:
                raise MotParseError(f"{attr} must be positive, got {getattr(self, attr)}")


def _parse_line(line: str, lineno: int, kind: str):
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < 9 or len(parts) > 10:
        raise MotParseError(f"line {lineno}: expected 9 or 10 fields, got {len(parts)}")
    try:
        frame = int(parts[0])
        track_id = int(parts[1])
        x, y, w, h = (float(p) for p in parts[2:6])
        score = float(parts[6])
        class_id = int(parts[7])
        visibility = float(parts[8])
    except ValueError as exc:
        raise MotParseError(f"line {lineno}: {exc}") from exc
    if frame < 1:
        raise MotParseError(f"line {lineno}: frame must be >= 1, got {frame}")
    if w <= 0 or h <= 0:
        raise MotParseError(f"line {lineno}: box extent must be positive, got w={w}, h={h}")
    if kind == "det":
        if track_id != -1:
            raise MotParseError(f"line {lineno}: detections must carry id -1, got {track_id}")
        return Detection(frame=frame, box=(x, y, w, h), score=score, class_id=class_id)
    if kind == "gt" and track_id < 1:
        raise MotParseError(f"line {lineno}: ground-truth id must be >= 1, got {track_id}")
    return MotRecord(frame=frame, track_id=track_id, box=(x, y, w, h),
                     score=score, class_id=class_id, visibility=visibility)


def read_mot_csv(path, kind: str):
    """Parse a gt/det/result CSV into records sorted by (frame, id)."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(_parse_line(line, lineno, kind))
            except ValueError as exc:
                if isinstance(exc, MotParseError):
                    raise
                raise MotParseError(f"line {lineno}: {exc}") from exc
    key = (lambda r: (r.frame, -1)) if kind == "det" else (lambda r: (r.frame, r.track_id))
    records.sort(key=key)
    return records


def _format_line(rec, kind: str) -> str:
    if kind == "det":
        return (f"{rec.frame},-1,{rec.box[0]:.2f},{rec.box[1]:.2f},"
                f"{rec.box[2]:.2f},{rec.box[3]:.2f},{rec.score:.2f},{rec.class_id},-1,-1")
    if kind == "gt":
        return (f"{rec.frame},{rec.track_id},{rec.box[0]:.2f},{rec.box[1]:.2f},"
                f"{rec.box[2]:.2f},{rec.box[3]:.2f},1,{rec.class_id},{rec.visibility:.2f}")
    return (f"{rec.frame},{rec.track_id},{rec.box[0]:.2f},{rec.box[1]:.2f},"
            f"{rec.box[2]:.2f},{rec.box[3]:.2f},{rec.score:.2f},{rec.class_id},-1,-1")


def write_mot_csv(records, path, kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if kind == "det":
        ordered = sorted(records, key=lambda r: r.frame)
    else:
        ordered = sorted(records, key=lambda r: (r.frame, r.track_id))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ordered:
            fh.write(_format_line(rec, kind) + "\n")


SEQINFO_KEYS = ("name", "frames", "img_w", "img_h", "flow_w", "flow_h", "fps")


def read_seqinfo(path) -> SeqMeta:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MotParseError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    for key in SEQINFO_KEYS:
        if key not in values:
            raise MotParseError(f"missing key: {key}")
    try:
        return SeqMeta(
            name=values["name"],
            frame_count=int(values["frames"]),
            img_width=int(values["img_w"]),
            img_height=int(values["img_h"]),
            flow_width=int(values["flow_w"]),
            flow_height=int(values["flow_h"]),
            fps=float(values["fps"]),
        )
    except ValueError as exc:
        if isinstance(exc, MotParseError):
            raise
        raise MotParseError(str(exc)) from exc


def write_seqinfo(path, meta: SeqMeta) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"name={meta.name}\n")
        fh.write(f"frames={meta.frame_count}\n")
        fh.write(f"img_w={meta.img_width}\n")
        fh.write(f"img_h={meta.img_height}\n")
        fh.write(f"flow_w={meta.flow_width}\n")
        fh.write(f"flow_h={meta.flow_height}\n")
        fh.write(f"fps={meta.fps}\n")
