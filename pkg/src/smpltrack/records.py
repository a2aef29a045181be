"""JSONL wire formats shared by the generator, tracker, fitter and CLI.

One JSON object per line, frames strictly increasing across lines.  Floats
are written with 17 significant digits so read-back is bit-exact; unknown
fields are ignored on read and writers emit only schema fields.  Rotations
travel as row-major 3x3 blocks: smpl.global_orient (9 floats) and
smpl.body_pose (9 * 23 floats).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jsonutil
from .errors import ParseError
from .tracker import Detection, TrackRecord

N_JOINTS_WIRE = 24
BODY_POSE_FLOATS = 9 * (N_JOINTS_WIRE - 1)


def _smpl_to_dict(pose: np.ndarray, betas: np.ndarray) -> dict:
    return {
        "global_orient": pose[0].reshape(-1),
        "body_pose": pose[1:].reshape(-1),
        "betas": np.asarray(betas, dtype=float).reshape(-1),
    }


def _smpl_from_dict(d: dict) -> tuple[np.ndarray, np.ndarray]:
    try:
        global_orient = np.asarray(d["global_orient"], dtype=float)
        body_pose = np.asarray(d["body_pose"], dtype=float)
        betas = np.asarray(d["betas"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed smpl block: {exc}") from exc
    if global_orient.size != 9:
        raise ParseError(f"smpl.global_orient has {global_orient.size} floats, expected 9")
    if body_pose.size != BODY_POSE_FLOATS:
        raise ParseError(f"smpl.body_pose has {body_pose.size} floats, expected {BODY_POSE_FLOATS}")
    pose = np.concatenate([global_orient.reshape(1, 3, 3),
                           body_pose.reshape(N_JOINTS_WIRE - 1, 3, 3)])
    return pose, betas


def detection_to_dict(det: Detection) -> dict:
    kp = None
    if det.keypoints2d is not None and det.keypoint_conf is not None:
        kp = np.concatenate([det.keypoints2d, det.keypoint_conf[None, :]]).T  # (K, 3)
    return {
        "bbox": det.bbox,
        "kp2d": kp,
        "smpl": (_smpl_to_dict(det.pose, det.betas)
                 if det.pose is not None and det.betas is not None else None),
        "cam_t": det.cam_t,
        "embedding": det.embedding,
        "score": float(det.score),
    }


def detection_from_dict(d: dict) -> Detection:
    try:
        bbox = np.asarray(d["bbox"], dtype=float)
        score = float(d["score"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed detection: {exc}") from exc
    keypoints2d = keypoint_conf = None
    if d.get("kp2d") is not None:
        kp = np.asarray(d["kp2d"], dtype=float)
        if kp.ndim != 2 or kp.shape[1] != 3:
            raise ParseError(f"kp2d must be rows of [u, v, conf], got shape {kp.shape}")
        keypoints2d = kp[:, :2].T
        keypoint_conf = kp[:, 2]
    pose = betas = None
    if d.get("smpl") is not None:
        pose, betas = _smpl_from_dict(d["smpl"])
    cam_t = np.asarray(d["cam_t"], dtype=float) if d.get("cam_t") is not None else None
    emb = np.asarray(d["embedding"], dtype=float) if d.get("embedding") is not None else None
    return Detection(bbox=bbox, score=score, keypoints2d=keypoints2d,
                     keypoint_conf=keypoint_conf, pose=pose, betas=betas,
                     cam_t=cam_t, embedding=emb)


def track_record_to_dict(rec: TrackRecord) -> dict:
    return {
        "id": int(rec.track_id),
        "smpl": _smpl_to_dict(rec.pose, rec.betas),
        "cam_t": rec.cam_t,
        "bbox": rec.bbox,
        "amodal": bool(rec.amodal),
    }


def track_record_from_dict(frame: int, d: dict) -> TrackRecord:
    try:
        pose, betas = _smpl_from_dict(d["smpl"])
        return TrackRecord(
            frame=frame,
            track_id=int(d["id"]),
            pose=pose,
            betas=betas,
            cam_t=np.asarray(d["cam_t"], dtype=float),
            bbox=np.asarray(d["bbox"], dtype=float),
            amodal=bool(d["amodal"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed track record: {exc}") from exc


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(jsonutil.dumps(row))
            f.write("\n")


def _read_jsonl(path) -> list[dict]:
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(jsonutil.loads(line))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return rows


def _check_frames_increasing(frames: list[int], path) -> None:
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ParseError(f"{path}: frames must be strictly increasing")


def write_detections_jsonl(path, frames: list[tuple[int, list[Detection]]]) -> None:
    _write_jsonl(path, ({"frame": int(f), "detections": [detection_to_dict(d) for d in dets]}
                        for f, dets in frames))


def read_detections_jsonl(path) -> list[tuple[int, list[Detection]]]:
    out = []
    for row in _read_jsonl(path):
        try:
            frame = int(row["frame"])
            dets = row["detections"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed detection line: {exc}") from exc
        out.append((frame, [detection_from_dict(d) for d in dets]))
    _check_frames_increasing([f for f, _ in out], path)
    return out


def write_tracks_jsonl(path, frames: list[tuple[int, list[TrackRecord]]]) -> None:
    def rows():
        for f, recs in frames:
            ids = [r.track_id for r in recs]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate track ids within frame {f}")
            yield {"frame": int(f), "tracks": [track_record_to_dict(r) for r in recs]}

    _write_jsonl(path, rows())


def read_tracks_jsonl(path) -> list[tuple[int, list[TrackRecord]]]:
    out = []
    for row in _read_jsonl(path):
        try:
            frame = int(row["frame"])
            tracks = row["tracks"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed track line: {exc}") from exc
        recs = [track_record_from_dict(frame, t) for t in tracks]
        ids = [r.track_id for r in recs]
        if len(set(ids)) != len(ids):
            raise ParseError(f"{path}: duplicate track ids within frame {frame}")
        out.append((frame, recs))
    _check_frames_increasing([f for f, _ in out], path)
    return out


@dataclass(frozen=True)
class FitRecord:
    """Fit output for one detection: frame, index within the frame, recovered
    parameters, and solver diagnostics."""

    frame: int
    index: int
    pose: np.ndarray
    betas: np.ndarray
    cam_t: np.ndarray
    final_cost: float
    mean_reproj_px: float
    iterations: int
    converged: bool


def write_fits_jsonl(path, records: list[FitRecord]) -> None:
    _write_jsonl(path, ({
        "frame": int(r.frame),
        "index": int(r.index),
        "smpl": _smpl_to_dict(r.pose, r.betas),
        "cam_t": r.cam_t,
        "final_cost": float(r.final_cost),
        "mean_reproj_px": float(r.mean_reproj_px),
        "iterations": int(r.iterations),
        "converged": bool(r.converged),
    } for r in records))


def read_fits_jsonl(path) -> list[FitRecord]:
    out = []
    for row in _read_jsonl(path):
        try:
            pose, betas = _smpl_from_dict(row["smpl"])
            out.append(FitRecord(
                frame=int(row["frame"]), index=int(row["index"]), pose=pose, betas=betas,
                cam_t=np.asarray(row["cam_t"], dtype=float),
                final_cost=float(row["final_cost"]),
                mean_reproj_px=float(row["mean_reproj_px"]),
                iterations=int(row["iterations"]), converged=bool(row["converged"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed fit record: {exc}") from exc
    return out


def write_report_json(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(jsonutil.dumps(report))
        f.write("\n")
