"""Command-line surface: synth, fit, track, eval-pose, eval-track.

Exit codes: 0 success, 2 input/parse error, 3 numerical failure.  Errors
print a one-line diagnostic on standard error.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import jsonutil, records
from .body_model import (BodyModel, PoseParams, ShapeParams, forward, load_model,
                         make_mini_model)
from .camera import Intrinsics, project
from .errors import (BehindCamera, DegenerateConfiguration, DegenerateInput,
                     DimensionMismatch, InsufficientConstraints, InvariantViolation,
                     NoValidKeypoints, NonMonotoneFrame, NumericalFailure, ParseError,
                     UnliftableDetection)
from .fitting import FitConfig, fit
from .metrics import PoseMetrics, bbox_iou, eval_tracking, mpjpe, pa_mpjpe, pck
from .predictor import load_weights
from .synth import SceneConfig, generate
from .tracker import TrackerConfig, run
from scipy.optimize import linear_sum_assignment

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

_INPUT_ERRORS = (ParseError, InvariantViolation, InsufficientConstraints,
                 UnliftableDetection, NoValidKeypoints, NonMonotoneFrame,
                 DimensionMismatch, FileNotFoundError, IsADirectoryError,
                 PermissionError, KeyError, TypeError, ValueError)
_NUMERIC_ERRORS = (NumericalFailure, BehindCamera, DegenerateConfiguration,
                   DegenerateInput, np.linalg.LinAlgError)


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return jsonutil.loads(f.read())
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _load_intrinsics(path) -> Intrinsics:
    return Intrinsics.from_dict(_read_json(path))


def _load_scene_model(config: dict) -> BodyModel:
    if "model_path" in config:
        return load_model(config["model_path"])
    return make_mini_model(int(config.get("model_seed", 0)))


def _cmd_synth(args) -> int:
    config = _read_json(args.config)
    model = _load_scene_model(config)
    cfg = SceneConfig.from_dict(config)
    scene = generate(cfg, model)
    records.write_tracks_jsonl(args.out_gt, scene.gt_frames)
    records.write_detections_jsonl(args.out_det, scene.det_frames)
    return EXIT_OK


def _cmd_fit(args) -> int:
    model = load_model(args.model)
    intr = _load_intrinsics(args.intrinsics)
    frames = records.read_detections_jsonl(args.keypoints)
    cfg = FitConfig(max_iters=args.max_iters)
    out: list[records.FitRecord] = []
    for frame, dets in frames:
        for index, det in enumerate(dets):
            if det.keypoints2d is None or det.keypoint_conf is None:
                raise InsufficientConstraints(
                    f"frame {frame} detection {index} carries no keypoints")
            result = fit(det.keypoints2d, det.keypoint_conf, intr, model, cfg)
            out.append(records.FitRecord(
                frame=frame, index=index, pose=result.pose.rotations,
                betas=result.shape.beta, cam_t=result.cam_t,
                final_cost=result.final_cost, mean_reproj_px=result.mean_reproj_px,
                iterations=result.iterations, converged=result.converged))
    records.write_fits_jsonl(args.out, out)
    return EXIT_OK


def _cmd_track(args) -> int:
    model = load_model(args.model)
    intr = _load_intrinsics(args.intrinsics)
    det_frames = records.read_detections_jsonl(args.detections)
    config = _read_json(args.config) if args.config else {}
    weights = None
    weights_path = config.pop("predictor_weights", None)
    fit_iters = config.pop("fit_max_iters", None)
    cfg = TrackerConfig(**config)
    if cfg.predictor == "masked-transformer":
        if weights_path is None:
            raise ParseError("config selects masked-transformer but has no predictor_weights")
        weights = load_weights(weights_path)
    fit_cfg = FitConfig(max_iters=int(fit_iters)) if fit_iters else None
    tracks = run(det_frames, intr, model, cfg, weights, fit_cfg)
    records.write_tracks_jsonl(args.out, tracks)
    return EXIT_OK


def _sniff_pose_records(path, model: BodyModel):
    """Read eval-pose predictions from either tracks or fit-results JSONL.

    Returns frame -> list of (label, pose, betas, cam_t, bbox-or-None).
    """
    rows = records._read_jsonl(path)
    out: dict[int, list] = {}
    if rows and "tracks" in rows[0]:
        for frame, recs in records.read_tracks_jsonl(path):
            out[frame] = [(r.track_id, r.pose, r.betas, r.cam_t, r.bbox) for r in recs]
    else:
        for rec in records.read_fits_jsonl(path):
            out.setdefault(rec.frame, []).append(
                (rec.index, rec.pose, rec.betas, rec.cam_t, None))
    return out


def _pair_pose_records(preds: list, gts: list):
    """Pair within one frame: by id when the id sets coincide, else by box IoU."""
    pred_ids = {p[0] for p in preds}
    gt_ids = {g[0] for g in gts}
    if pred_ids == gt_ids:
        gt_by_id = {g[0]: g for g in gts}
        return [(p, gt_by_id[p[0]]) for p in preds]
    if len(preds) == 1 and len(gts) == 1:
        return [(preds[0], gts[0])]
    iou = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        if p[4] is None:
            continue
        for j, g in enumerate(gts):
            iou[i, j] = bbox_iou(p[4], g[4])
    rows, cols = linear_sum_assignment(-iou)
    return [(preds[i], gts[j]) for i, j in zip(rows, cols) if iou[i, j] > 0.1]


def _cmd_eval_pose(args) -> int:
    model = load_model(args.model)
    intr = _load_intrinsics(args.intrinsics)
    pred = _sniff_pose_records(args.pred, model)
    gt = _sniff_pose_records(args.gt, model)
    thresholds = [float(t) for t in args.pck_thresholds.split(",")]

    def joints_of(entry):
        _, pose, betas, cam_t, _ = entry
        out = forward(model, PoseParams.from_rotations(pose), ShapeParams(betas))
        return out.joints + np.asarray(cam_t)[:, None]

    def eval_frame(frame):
        rows = []
        for p, g in _pair_pose_records(pred.get(frame, []), gt.get(frame, [])):
            xj = joints_of(p)
            gj = joints_of(g)
            e_mpjpe = mpjpe(xj, gj)
            e_pa = pa_mpjpe(xj, gj)
            xk = project(xj, intr)
            gk = project(gj, intr)
            gbox = g[4]
            norm_len = max(gbox[2], gbox[3]) if gbox is not None else max(
                gk[0].max() - gk[0].min(), gk[1].max() - gk[1].min())
            conf = np.ones(gk.shape[1])
            hits = {tau: pck(xk, gk, conf, tau, norm_len) for tau in thresholds}
            rows.append((frame, p[0], e_mpjpe, e_pa, hits, gk.shape[1]))
        return rows

    frames = sorted(set(pred) | set(gt))
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            all_rows = [row for rows in pool.map(eval_frame, frames) for row in rows]
    else:
        all_rows = [row for frame in frames for row in eval_frame(frame)]
    if not all_rows:
        raise ParseError("no evaluation pairs could be formed from the inputs")

    n_joints = all_rows[0][5]
    report = PoseMetrics(
        mpjpe_mm=float(np.mean([r[2] for r in all_rows])),
        pa_mpjpe_mm=float(np.mean([r[3] for r in all_rows])),
        pck={tau: float(np.mean([r[4][tau] for r in all_rows])) for tau in thresholds},
        n_pairs=len(all_rows),
        n_joints=n_joints,
    )
    records.write_report_json(args.report, report.to_dict())
    if args.dump_csv:
        with open(args.dump_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "label", "mpjpe_mm", "pa_mpjpe_mm"]
                            + [f"pck@{t:g}" for t in thresholds])
            for frame, label, e1, e2, hits, _ in all_rows:
                writer.writerow([frame, label, repr(e1), repr(e2)]
                                + [repr(hits[t]) for t in thresholds])
    return EXIT_OK


def _tracks_to_stream(path):
    return {frame: [(r.track_id, r.bbox) for r in recs]
            for frame, recs in records.read_tracks_jsonl(path)}


def _cmd_eval_track(args) -> int:
    pred = _tracks_to_stream(args.pred)
    gt = _tracks_to_stream(args.gt)
    metrics = eval_tracking(pred, gt, iou_threshold=args.iou_threshold,
                            threads=args.threads)
    records.write_report_json(args.report, metrics.to_dict())
    if args.dump_csv:
        with open(args.dump_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "n_gt", "n_pred"])
            for frame in sorted(set(gt) | set(pred)):
                writer.writerow([frame, len(gt.get(frame, [])), len(pred.get(frame, []))])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smpltrack",
        description="Body-model fitting, tracking and evaluation on detection streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--config", required=True)
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-det", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit body parameters to 2D keypoints")
    p.add_argument("--model", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("track", help="run the tracker over a detection stream")
    p.add_argument("--model", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval-pose", help="pose accuracy report (MPJPE, PA-MPJPE, PCK)")
    p.add_argument("--model", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--pck-thresholds", default="0.05,0.1")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dump-csv", default=None)
    p.set_defaults(func=_cmd_eval_pose)

    p = sub.add_parser("eval-track", help="tracking report (IDs, MOTA, IDF1, HOTA)")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dump-csv", default=None)
    p.set_defaults(func=_cmd_eval_track)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
