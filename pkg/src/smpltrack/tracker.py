"""Tracking-by-detection in body-parameter space.

Per frame: predict each live tracklet forward, lift detections to 3D
(pose, camera-frame location, appearance), build a gated association cost,
solve the assignment, then update / spawn / retire tracklets.  Unmatched
tracklets are amodally completed from their own predictions so gaps carry
flagged records instead of holes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .body_model import BodyModel, PoseParams, ShapeParams, forward
from .camera import Intrinsics, project
from .errors import (BehindCamera, InvariantViolation, NonMonotoneFrame,
                     UnliftableDetection)
from .fitting import FitConfig, fit
from .jacobian import root_position
from .predictor import (MAX_HORIZON, PredictorWeights, TrackHistory, TrackSlot,
                        baseline_predict, predict)
from .rotation import rotmat_to_rot6d_batch

GATE_SENTINEL = np.inf


@dataclass(frozen=True)
class Detection:
    """One per-frame observation."""

    bbox: np.ndarray                      # (4,) x, y, w, h pixels
    score: float = 1.0
    keypoints2d: np.ndarray | None = None  # (2, K) pixels
    keypoint_conf: np.ndarray | None = None  # (K,)
    pose: np.ndarray | None = None        # (24, 3, 3)
    betas: np.ndarray | None = None       # (n_shape,)
    cam_t: np.ndarray | None = None       # (3,) meters
    embedding: np.ndarray | None = None   # (D,), unit norm

    def __post_init__(self):
        bbox = np.asarray(self.bbox, dtype=float)
        if bbox.shape != (4,) or bbox[2] <= 0 or bbox[3] <= 0:
            raise InvariantViolation(f"bbox must be (x, y, w, h) with positive size, got {bbox}")
        object.__setattr__(self, "bbox", bbox)
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=float)
            if abs(np.linalg.norm(emb) - 1.0) > 1e-6:
                raise InvariantViolation("appearance embedding must have unit norm")
            object.__setattr__(self, "embedding", emb)
        for name in ("keypoints2d", "keypoint_conf", "pose", "betas", "cam_t"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=float))


@dataclass(frozen=True)
class Lifted3D:
    """Detection lifted to 3D: pose, camera-frame root location, appearance."""

    pose: np.ndarray                 # (24, 3, 3)
    location: np.ndarray             # (3,)
    appearance: np.ndarray | None    # (D,) unit norm
    betas: np.ndarray                # (n_shape,) carried for record emission
    cam_t: np.ndarray                # (3,)

    def __post_init__(self):
        if not np.all(np.isfinite(self.location)) or self.location[2] <= 0:
            raise InvariantViolation("lifted location must be finite with positive depth")


@dataclass(frozen=True)
class TrackerConfig:
    w_pose: float = 1.0
    w_loc: float = 1.0
    w_app: float = 1.0
    gate: float = 3.0                  # association costs above this are forbidden
    max_age: int = 24                  # frames a tracklet may go unmatched
    birth_confidence: float = 0.5
    appearance_ema: float = 0.9
    predictor: str = "baseline"        # "baseline" or "masked-transformer"
    pose_metric: str = "geodesic"      # "geodesic" or "l2"
    history_length: int = 12

    def __post_init__(self):
        if min(self.w_pose, self.w_loc, self.w_app) < 0:
            raise ValueError("cost weights must be >= 0")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.predictor not in ("baseline", "masked-transformer"):
            raise ValueError(f"unknown predictor '{self.predictor}'")
        if self.pose_metric not in ("geodesic", "l2"):
            raise ValueError(f"unknown pose metric '{self.pose_metric}'")


def _check_rotations(rotations: np.ndarray, tol: float = 1e-5) -> None:
    gram = np.einsum("kab,kcb->kac", rotations, rotations)
    if np.max(np.abs(gram - np.eye(3))) > tol:
        raise InvariantViolation("detection pose contains non-orthonormal rotations")


def lift(det: Detection, intrinsics: Intrinsics, model: BodyModel,
         fit_cfg: FitConfig | None = None) -> Lifted3D:
    """Lift a detection to 3D, fitting to keypoints when parameters are absent."""
    if det.pose is not None and det.betas is not None and det.cam_t is not None:
        rotations = det.pose
        _check_rotations(rotations)
        betas = det.betas
        cam_t = det.cam_t
    elif det.keypoints2d is not None and det.keypoint_conf is not None:
        result = fit(det.keypoints2d, det.keypoint_conf, intrinsics, model, fit_cfg)
        rotations = result.pose.rotations
        betas = result.shape.beta
        cam_t = result.cam_t
    else:
        raise UnliftableDetection("detection has neither body parameters nor keypoints")
    root = root_position(model, rotations, betas)
    appearance = det.embedding
    if appearance is not None:
        appearance = appearance / np.linalg.norm(appearance)
    return Lifted3D(pose=rotations, location=cam_t + root, appearance=appearance,
                    betas=np.asarray(betas, dtype=float), cam_t=np.asarray(cam_t, dtype=float))


def pose_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean geodesic angle (radians) between two sets of 24 joint rotations.

    The angle is evaluated as 2 asin(|Ra - Rb|_F / (2 sqrt 2)), the stable
    form of acos((tr(Ra Rb') - 1) / 2): identical inputs give exactly zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    norms = np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1)
    angles = 2.0 * np.arcsin(np.clip(norms / (2.0 * np.sqrt(2.0)), 0.0, 1.0))
    return float(angles.mean())


def pose_distance_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Mean entrywise L2 distance between rotation matrices (config alternative)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1).mean())


@dataclass
class Tracklet:
    track_id: int
    history: TrackHistory
    appearance: np.ndarray | None
    betas: np.ndarray
    bbox: np.ndarray
    missed_count: int = 0
    status: str = "active"             # active | missed | dead
    predicted_pose: np.ndarray | None = None      # (24, 3, 3) for the current frame
    predicted_location: np.ndarray | None = None  # (3,)
    # Last two observed (frame, pose6d, location) triples; they outlive the
    # rolling history window so the baseline predictor survives long gaps.
    last_observed: list = field(default_factory=list)

    def note_observation(self, frame: int, pose6d: np.ndarray, location: np.ndarray) -> None:
        self.last_observed.append((frame, pose6d, location))
        if len(self.last_observed) > 2:
            del self.last_observed[0]

    def observed_memory(self) -> TrackHistory:
        slots = [TrackSlot(f, p, loc, True) for f, p, loc in self.last_observed]
        return TrackHistory(slots, t_max=max(2, len(slots)))


def association_cost(tracklets: list[Tracklet], lifted: list[Lifted3D],
                     cfg: TrackerConfig) -> np.ndarray:
    """Gated cost matrix (|tracklets| x |detections|); forbidden entries are inf."""
    n_t, n_d = len(tracklets), len(lifted)
    if n_t == 0 or n_d == 0:
        return np.zeros((n_t, n_d))
    for trk in tracklets:
        if trk.predicted_pose is None or trk.predicted_location is None:
            raise InvariantViolation(f"tracklet {trk.track_id} has no current prediction")
    pred_poses = np.stack([t.predicted_pose for t in tracklets])   # (T, 24, 3, 3)
    det_poses = np.stack([d.pose for d in lifted])                 # (D, 24, 3, 3)
    k = det_poses.shape[1]
    diff = pred_poses[:, None] - det_poses[None, :]                # (T, D, k, 3, 3)
    norms = np.linalg.norm(diff.reshape(n_t, n_d, k, 9), axis=3)
    if cfg.pose_metric == "geodesic":
        angles = 2.0 * np.arcsin(np.clip(norms / (2.0 * np.sqrt(2.0)), 0.0, 1.0))
        pose_cost = angles.mean(axis=2)
    else:
        pose_cost = norms.mean(axis=2)

    pred_locs = np.stack([t.predicted_location for t in tracklets])
    det_locs = np.stack([d.location for d in lifted])
    loc_cost = np.linalg.norm(pred_locs[:, None] - det_locs[None, :], axis=2)

    cost = cfg.w_pose * pose_cost + cfg.w_loc * loc_cost
    if cfg.w_app > 0:
        for i, trk in enumerate(tracklets):
            if trk.appearance is None:
                continue
            for j, det in enumerate(lifted):
                if det.appearance is not None:
                    cost[i, j] += cfg.w_app * (1.0 - float(trk.appearance @ det.appearance))

    return np.where(cost <= cfg.gate, cost, GATE_SENTINEL)


def assign(cost: np.ndarray) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Minimum-cost assignment over the non-forbidden entries.

    Among matchings that use only finite entries, this maximizes cardinality
    and minimizes total cost (forbidden edges can never be selected).
    Returns (matches, unmatched_rows, unmatched_cols).
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return [], list(range(cost.shape[0])), list(range(cost.shape[1]))
    finite = np.isfinite(cost)
    # One forbidden edge must outweigh any achievable finite-cost difference,
    # so dropping it always beats keeping it.
    big = float(np.abs(cost[finite]).sum()) + 1.0 if finite.any() else 1.0
    padded = np.where(finite, cost, big)
    rows, cols = linear_sum_assignment(padded)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if finite[r, c]]
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    unmatched_rows = [r for r in range(cost.shape[0]) if r not in matched_rows]
    unmatched_cols = [c for c in range(cost.shape[1]) if c not in matched_cols]
    return matches, unmatched_rows, unmatched_cols


@dataclass(frozen=True)
class TrackRecord:
    """Per-frame output for one live tracklet."""

    frame: int
    track_id: int
    pose: np.ndarray      # (24, 3, 3)
    betas: np.ndarray
    cam_t: np.ndarray
    bbox: np.ndarray
    amodal: bool


@dataclass
class TrackerState:
    tracklets: list[Tracklet] = field(default_factory=list)
    next_id: int = 1
    last_frame: int | None = None
    births: int = 0


def _predict_tracklet(trk: Tracklet, frame: int, cfg: TrackerConfig,
                      weights: PredictorWeights | None) -> None:
    if cfg.predictor == "masked-transformer" and weights is not None:
        history = trk.history
        horizon = frame - history.last_frame
        while horizon > MAX_HORIZON:
            # Long gaps are rolled forward in chunks of the maximum horizon.
            chunk = predict(history, weights, MAX_HORIZON)
            history = TrackHistory(list(history.slots), t_max=history.t_max)
            for i, f in enumerate(chunk.frames):
                history.append(TrackSlot(int(f), rotmat_to_rot6d_batch(chunk.poses[i]),
                                         chunk.locations[i], observed=False))
            horizon = frame - history.last_frame
        pred = predict(history, weights, horizon)
    else:
        memory = trk.observed_memory()
        horizon = frame - memory.last_frame
        pred = baseline_predict(memory, horizon)
    trk.predicted_pose = pred.poses[-1]
    trk.predicted_location = pred.locations[-1]


def _amodal_bbox(trk: Tracklet, model: BodyModel, intrinsics: Intrinsics) -> np.ndarray:
    """Project the predicted body to refresh the box; keep the old box when
    the prediction leaves the view frustum."""
    pose = PoseParams.from_rotations(trk.predicted_pose)
    shape = ShapeParams(trk.betas)
    out = forward(model, pose, shape)
    cam_t = trk.predicted_location - out.root
    try:
        pix = project(out.mesh + cam_t[:, None], intrinsics)
    except BehindCamera:
        return trk.bbox
    x0, y0 = pix.min(axis=1)
    x1, y1 = pix.max(axis=1)
    if x1 <= x0 or y1 <= y0:
        return trk.bbox
    return np.array([x0, y0, x1 - x0, y1 - y0])


def step(state: TrackerState, frame: int, detections: list[Detection],
         intrinsics: Intrinsics, model: BodyModel, cfg: TrackerConfig,
         predictor_weights: PredictorWeights | None = None,
         fit_cfg: FitConfig | None = None) -> list[TrackRecord]:
    """Advance the tracker by one frame; returns records for all live tracklets."""
    if state.last_frame is not None and frame <= state.last_frame:
        raise NonMonotoneFrame(f"frame {frame} after frame {state.last_frame}")
    state.last_frame = frame

    live = [t for t in state.tracklets if t.status != "dead"]
    for trk in live:
        _predict_tracklet(trk, frame, cfg, predictor_weights)

    lifted = [lift(det, intrinsics, model, fit_cfg) for det in detections]

    cost = association_cost(live, lifted, cfg)
    matches, unmatched_tracks, unmatched_dets = assign(cost)

    records: list[TrackRecord] = []
    for ti, dj in matches:
        trk, det3d = live[ti], lifted[dj]
        pose6d = rotmat_to_rot6d_batch(det3d.pose)
        trk.history.append(TrackSlot(frame, pose6d, det3d.location, observed=True))
        trk.note_observation(frame, pose6d, det3d.location)
        trk.missed_count = 0
        trk.status = "active"
        trk.betas = det3d.betas
        trk.bbox = detections[dj].bbox
        if det3d.appearance is not None:
            if trk.appearance is None:
                trk.appearance = det3d.appearance
            else:
                blended = (cfg.appearance_ema * trk.appearance
                           + (1.0 - cfg.appearance_ema) * det3d.appearance)
                trk.appearance = blended / np.linalg.norm(blended)
        records.append(TrackRecord(frame, trk.track_id, det3d.pose, det3d.betas,
                                   det3d.cam_t, detections[dj].bbox, amodal=False))

    for ti in unmatched_tracks:
        trk = live[ti]
        trk.missed_count += 1
        if trk.missed_count > cfg.max_age:
            trk.status = "dead"
            continue
        trk.status = "missed"
        pose6d = rotmat_to_rot6d_batch(trk.predicted_pose)
        trk.history.append(TrackSlot(frame, pose6d, trk.predicted_location, observed=False))
        trk.bbox = _amodal_bbox(trk, model, intrinsics)
        root = root_position(model, trk.predicted_pose, trk.betas)
        records.append(TrackRecord(frame, trk.track_id, trk.predicted_pose, trk.betas,
                                   trk.predicted_location - root, trk.bbox, amodal=True))

    for dj in unmatched_dets:
        det, det3d = detections[dj], lifted[dj]
        if det.score < cfg.birth_confidence:
            continue
        pose6d = rotmat_to_rot6d_batch(det3d.pose)
        history = TrackHistory([TrackSlot(frame, pose6d, det3d.location, observed=True)],
                               t_max=cfg.history_length)
        trk = Tracklet(track_id=state.next_id, history=history, appearance=det3d.appearance,
                       betas=det3d.betas, bbox=det.bbox)
        trk.note_observation(frame, pose6d, det3d.location)
        state.next_id += 1
        state.births += 1
        state.tracklets.append(trk)
        records.append(TrackRecord(frame, trk.track_id, det3d.pose, det3d.betas,
                                   det3d.cam_t, det.bbox, amodal=False))

    state.tracklets = [t for t in state.tracklets if t.status != "dead"]
    records.sort(key=lambda r: r.track_id)
    return records


def run(frames: list[tuple[int, list[Detection]]], intrinsics: Intrinsics,
        model: BodyModel, cfg: TrackerConfig | None = None,
        predictor_weights: PredictorWeights | None = None,
        fit_cfg: FitConfig | None = None) -> list[tuple[int, list[TrackRecord]]]:
    """Fold step() over a sorted detection stream."""
    cfg = cfg or TrackerConfig()
    state = TrackerState()
    out = []
    for frame, detections in frames:
        out.append((frame, step(state, frame, detections, intrinsics, model, cfg,
                                predictor_weights, fit_cfg)))
    return out
