"""Command-line entry point.

Subcommands:
  track      run the tracker over a detection file + flow directory
  eval       CLEAR-MOT / identity metrics between ground truth and results
  mra        per-object motion-complexity table for a ground-truth file
  synth      generate a synthetic scene directory
  train-mpn  train motion-prediction weights on a crop dataset

Every failure exits nonzero with a message on stderr; all randomness is
controlled by explicit --seed flags.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .fgmp import load_mpn, make_mpn, save_mpn, train_mpn, validate_mpn
from .flow import flow_filename, load_flo
from .metrics import evaluate, report_keyvalues, report_table, sequence_mra
from .mot_io import MotRecord, read_mot_csv, read_seqinfo, write_mot_csv
from .synthetic import (benchmark_spec, generate_mpn_dataset, generate_scene,
                        qualified_seeds, read_mpn_dataset, write_mpn_dataset,
                        write_scene)
from .tracker import Tracker, TrackerConfig

MOTION_MODES = {"kf": "kf", "fgmp": "fgmp", "meanflow": "mean_of_flow"}

CONFIG_KEYS = {
    "score_high": float,
    "score_low": float,
    "iou_min_stage1": float,
    "iou_min_stage2": float,
    "max_lost_frames": int,
    "min_hits_to_activate": int,
}


class CliError(Exception):
    pass


def load_tracker_config(path, motion_mode: str) -> TrackerConfig:
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or key not in CONFIG_KEYS:
                    raise CliError(f"{path}:{lineno}: unknown config line {line!r}")
                values[key] = CONFIG_KEYS[key](value.strip())
    return TrackerConfig(motion_mode=motion_mode, **values)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise CliError(f"expected WxH, got {text!r}") from exc


def cmd_track(args) -> int:
    motion = MOTION_MODES[args.motion]
    if motion == "fgmp" and not args.mpn:
        raise CliError("--motion fgmp requires --mpn weights")
    if motion in ("fgmp", "mean_of_flow") and not args.flow_dir:
        raise CliError(f"--motion {args.motion} requires --flow-dir")
    meta = read_seqinfo(args.seq)
    detections = read_mot_csv(args.dets, "det")
    config = load_tracker_config(args.config, motion)
    mpn = load_mpn(args.mpn) if motion == "fgmp" else None

    flows = {}
    if motion in ("fgmp", "mean_of_flow"):
        for frame in range(2, meta.frame_count + 1):
            path = os.path.join(args.flow_dir, flow_filename(frame))
            if not os.path.exists(path):
                raise CliError(f"missing flow file for frame {frame}: {path}")
            flows[frame] = load_flo(path)

    per_frame: dict[int, list] = {}
    for det in detections:
        per_frame.setdefault(det.frame, []).append(det)

    tracker = Tracker(config, img_size=(meta.img_width, meta.img_height), mpn=mpn)
    records: list[MotRecord] = []
    start = time.perf_counter()
    for frame in range(1, meta.frame_count + 1):
        active = tracker.step(frame, per_frame.get(frame, []), flow=flows.get(frame))
        for t in active:
            records.append(MotRecord(frame=frame, track_id=t.id, box=t.box,
                                     score=t.score, class_id=t.class_id))
    elapsed = time.perf_counter() - start

    write_mot_csv(records, args.out, "result")
    fps = meta.frame_count / elapsed if elapsed > 0 else float("inf")
    print(f"tracked {meta.frame_count} frames in {elapsed:.3f} s "
          f"({fps:.1f} FPS, tracking loop only)")
    print(f"results written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    gt = read_mot_csv(args.gt, "gt")
    res = read_mot_csv(args.res, "result")
    report = evaluate(gt, res, iou_threshold=args.iou)
    print(report_table(report))
    out = args.out or args.res + ".metrics"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(report_keyvalues(report))
    print(f"metrics written to {out}")
    return 0


def cmd_mra(args) -> int:
    gt = read_mot_csv(args.gt, "gt")
    per_object, mean = sequence_mra(gt, mode=args.mode)
    if not per_object:
        print("warning: no trajectory with at least 3 frames; nothing to report",
              file=sys.stderr)
        return 0
    print(f"{'object':>8} {'mra':>10}")
    for tid, value in sorted(per_object.items()):
        print(f"{tid:>8d} {value:>10.6f}")
    print(f"{'mean':>8} {mean:>10.6f}")
    return 0


def cmd_synth(args) -> int:
    sizes = dict(frame_count=args.frames, n_objects=args.objects,
                 img_size=_parse_size(args.img_size),
                 flow_size=_parse_size(args.flow_size))
    seed = args.seed
    if args.mra_level == "high":
        # guarantee the advertised motion-complexity floor: take the first
        # qualifying scene at or after the requested seed (deterministic)
        seed = qualified_seeds("high", 1, start_seed=args.seed, min_mra=0.2,
                               **sizes)[0]
        if seed != args.seed:
            print(f"seed {args.seed} fell below the high-MRA floor; using {seed}")
    spec = benchmark_spec(seed=seed, mra_level=args.mra_level, noisy=args.noise,
                          **sizes)
    scene = generate_scene(spec, name=os.path.basename(os.path.normpath(args.out)))
    write_scene(scene, args.out, feature_channels=args.features or None)
    if args.mpn_samples:
        dataset = generate_mpn_dataset(spec, args.mpn_samples)
        write_mpn_dataset(dataset, os.path.join(args.out, "mpn_data"))
    print(f"scene written to {args.out} "
          f"({len(scene.gt)} gt boxes, {len(scene.det)} detections, "
          f"{len(scene.flows)} flow maps)")
    return 0


def cmd_train_mpn(args) -> int:
    dataset = read_mpn_dataset(args.data)
    net = make_mpn(rng=np.random.default_rng(args.seed))
    net, curve = train_mpn(net, dataset, epochs=args.epochs, lr=args.lr,
                           momentum=args.momentum, batch_size=args.batch,
                           seed=args.seed)
    save_mpn(args.out, net)
    final = validate_mpn(net, dataset)
    print(f"trained on {len(dataset)} samples for {args.epochs} epochs: "
          f"epoch loss {curve[0]:.4f} -> {curve[-1]:.4f}, "
          f"final L1 over the data {final:.4f}")
    print(f"weights written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowtrack",
        description="flow-guided multi-object tracking, evaluation, and synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker over files")
    p.add_argument("--dets", required=True, help="detection CSV")
    p.add_argument("--flow-dir", help="directory of {frame:06d}.flo files")
    p.add_argument("--seq", required=True, help="seqinfo key=value file")
    p.add_argument("--motion", choices=sorted(MOTION_MODES), default="kf")
    p.add_argument("--mpn", help="motion-net weights (required for fgmp)")
    p.add_argument("--config", help="tracker config key=value file")
    p.add_argument("--out", required=True, help="result CSV path")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="evaluate results against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--mode", choices=["clear"], default="clear")
    p.add_argument("--out", help="key=value report path (default: RES.metrics)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mra", help="motion-complexity statistics of a gt file")
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=["literal", "absolute"], default="absolute")
    p.set_defaults(func=cmd_mra)

    p = sub.add_parser("synth", help="generate a synthetic scene directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--objects", type=int, default=10)
    p.add_argument("--img-size", default="480x360")
    p.add_argument("--flow-size", default="240x180")
    p.add_argument("--mra-level", choices=["low", "medium", "high"], default="high")
    p.add_argument("--noise", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--features", type=int, default=0,
                   help="also write feature fixtures with this many channels")
    p.add_argument("--mpn-samples", type=int, default=0,
                   help="also write a motion-net crop dataset of this size")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-mpn", help="train motion-prediction weights")
    p.add_argument("--data", required=True, help="crop dataset directory")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="weights output path")
    p.set_defaults(func=cmd_train_mpn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
