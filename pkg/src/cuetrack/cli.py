"""Command-line entry points: `cuetrack track` and `cuetrack eval`."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .config import TrackerConfig
from .dataio import iter_frames, parse_gt_file, read_results, write_results
from .metrics import (DEFAULT_TP_THRESHOLD, DEFAULT_TSR_THRESHOLD,
                      SequenceRecord, tp_at, tsr_at, write_report)
from .serialize import save_model
from .tracker import Tracker


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cuetrack")
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the tracker over a sequence directory")
    p_track.add_argument("--seq", required=True, help="directory of numbered image files")
    p_track.add_argument("--gt", required=True, help="ground-truth file, one x,y,w,h line per frame")
    p_track.add_argument("--out", required=True, help="results CSV path")
    p_track.add_argument("--seed", type=int, default=0)
    p_track.add_argument("--config", help="JSON config file overriding the defaults")
    p_track.add_argument("--frames", type=int, default=0, help="stop after this many frames (0 = all)")
    p_track.add_argument("--trace", help="write training-trace CSV (frame, step, cue, loss)")
    p_track.add_argument("--save-model", dest="save_model", help="save the final model here")
    p_track.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("eval", help="score a results CSV against ground truth")
    p_eval.add_argument("--pred", required=True, help="results CSV from `cuetrack track`")
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--report", required=True, help="metrics report CSV path")
    p_eval.add_argument("--name", default="sequence")

    args = parser.parse_args(argv)
    if args.command == "track":
        return _run_track(args)
    return _run_eval(args)


def _run_track(args) -> int:
    config = TrackerConfig.from_json(args.config) if args.config else TrackerConfig()
    gt = parse_gt_file(args.gt)
    if gt[0] is None:
        raise SystemExit("first ground-truth box is required for initialization")

    trace_rows: list | None = [] if args.trace else None
    tracker = None
    results = []
    for frame in iter_frames(args.seq):
        if args.frames and frame.frame_index > args.frames:
            break
        if tracker is None:
            tracker = Tracker(frame, gt[0], seed=args.seed, config=config,
                              trace=trace_rows)
            results.append(tracker.first_result)
        else:
            results.append(tracker.step(frame))
        if not args.quiet and frame.frame_index % 25 == 0:
            r = results[-1]
            print(f"frame {r.frame_index}: score={r.score:.3f} "
                  f"q={r.quality:.3f} updated={int(r.updated)}", file=sys.stderr)
    if tracker is None:
        raise SystemExit(f"no frames found in {args.seq}")

    write_results(args.out, results)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["frame", "step", "cue", "loss"])
            writer.writerows(trace_rows)
    if args.save_model:
        save_model(args.save_model, tracker.model,
                   meta={"seed": args.seed, "config": config.to_dict()})
    if not args.quiet:
        n_updates = sum(r.updated for r in results[1:])
        print(f"tracked {len(results)} frames, {n_updates} online updates -> {args.out}",
              file=sys.stderr)
    return 0


def _run_eval(args) -> int:
    rows = read_results(args.pred)
    gt = parse_gt_file(args.gt)
    if len(rows) > len(gt):
        raise SystemExit(f"{len(rows)} predictions but only {len(gt)} ground-truth lines")
    record = SequenceRecord(
        name=args.name,
        predictions=tuple(r["box"] for r in rows),
        ground_truth=tuple(gt[: len(rows)]),
    )
    write_report(args.report, record)
    tp = tp_at(record, DEFAULT_TP_THRESHOLD)
    tsr = tsr_at(record, DEFAULT_TSR_THRESHOLD)
    print(f"TP@{DEFAULT_TP_THRESHOLD:g} = {tp:.4f}")
    print(f"TSR@{DEFAULT_TSR_THRESHOLD:g} = {tsr:.4f}")
    print(f"report -> {args.report}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
