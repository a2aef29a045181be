"""Synthetic multi-person scene generator.

Produces ground-truth tracks (exact parameters, projected boxes and
keypoints) together with a corrupted detection stream: Gaussian keypoint,
location and appearance noise, random dropout, and scripted full-occlusion
windows modeled as detection deletions.  Everything is a pure function of
the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body_model import BodyModel, PoseParams, ShapeParams, forward
from .camera import Intrinsics, project
from .rotation import identity_rot6d, rot6d_to_rotmat_batch
from .tracker import Detection, TrackRecord


@dataclass(frozen=True)
class OcclusionWindow:
    """Delete one person's detections on frames [start, start + length).

    `person` is the ground-truth track id (ids start at 1).
    """

    person: int
    start: int
    length: int

    def covers(self, frame: int) -> bool:
        return self.start <= frame < self.start + self.length


@dataclass(frozen=True)
class SceneConfig:
    n_people: int = 1
    n_frames: int = 30
    seed: int = 0
    motion_amplitude: float = 0.25     # radians of per-joint sinusoidal sway
    trajectory_speed: float = 0.01     # meters per frame along x
    intrinsics: Intrinsics = field(default_factory=lambda: Intrinsics(1000.0, 500.0, 500.0))
    keypoint_noise_px: float = 0.0
    location_noise_m: float = 0.0
    appearance_noise: float = 0.0
    dropout_prob: float = 0.0
    occlusions: tuple[OcclusionWindow, ...] = ()
    embedding_dim: int = 64
    shape_scale: float = 0.3           # per-person |beta| scale
    detection_score: float = 0.9
    person_spacing: float = 1.4        # meters between neighbors at start

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_people": self.n_people,
            "n_frames": self.n_frames,
            "seed": self.seed,
            "motion_amplitude": self.motion_amplitude,
            "trajectory_speed": self.trajectory_speed,
            "intrinsics": self.intrinsics.to_dict(),
            "keypoint_noise_px": self.keypoint_noise_px,
            "location_noise_m": self.location_noise_m,
            "appearance_noise": self.appearance_noise,
            "dropout_prob": self.dropout_prob,
            "occlusions": [{"person": o.person, "start": o.start, "length": o.length}
                           for o in self.occlusions],
            "embedding_dim": self.embedding_dim,
            "shape_scale": self.shape_scale,
            "detection_score": self.detection_score,
            "person_spacing": self.person_spacing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        kwargs = {}
        for name in ("n_people", "n_frames", "seed", "embedding_dim"):
            if name in d:
                kwargs[name] = int(d[name])
        for name in ("motion_amplitude", "trajectory_speed", "keypoint_noise_px",
                     "location_noise_m", "appearance_noise", "dropout_prob",
                     "shape_scale", "detection_score", "person_spacing"):
            if name in d:
                kwargs[name] = float(d[name])
        if "intrinsics" in d:
            kwargs["intrinsics"] = Intrinsics.from_dict(d["intrinsics"])
        if "occlusions" in d:
            kwargs["occlusions"] = tuple(
                OcclusionWindow(int(o["person"]), int(o["start"]), int(o["length"]))
                for o in d["occlusions"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PersonTrajectory:
    betas: np.ndarray
    embedding: np.ndarray
    base_position: np.ndarray
    velocity: np.ndarray
    sway_direction: np.ndarray   # (24, 6) unit perturbation of the 6D blocks
    sway_period: np.ndarray      # (24,) frames
    sway_phase: np.ndarray       # (24,)

    def pose6d(self, frame: int, amplitude: float) -> np.ndarray:
        phase = 2.0 * np.pi * frame / self.sway_period + self.sway_phase
        return identity_rot6d(24) + amplitude * np.sin(phase)[:, None] * self.sway_direction

    def cam_t(self, frame: int) -> np.ndarray:
        return self.base_position + self.velocity * frame


@dataclass(frozen=True)
class SyntheticScene:
    gt_frames: list[tuple[int, list[TrackRecord]]]
    det_frames: list[tuple[int, list[Detection]]]
    config: SceneConfig


def _make_people(cfg: SceneConfig, rng: np.random.Generator) -> list[PersonTrajectory]:
    people = []
    for i in range(cfg.n_people):
        sway = rng.normal(size=(24, 6))
        sway /= np.linalg.norm(sway, axis=1, keepdims=True)
        emb = rng.normal(size=cfg.embedding_dim)
        emb /= np.linalg.norm(emb)
        x0 = (i - (cfg.n_people - 1) / 2.0) * cfg.person_spacing
        people.append(PersonTrajectory(
            betas=rng.normal(size=10) * cfg.shape_scale,
            embedding=emb,
            base_position=np.array([x0, 0.0, 5.0 + 0.5 * i]),
            velocity=np.array([cfg.trajectory_speed, 0.0, 0.0]),
            sway_direction=sway,
            sway_period=rng.uniform(24.0, 60.0, size=24),
            sway_phase=rng.uniform(0.0, 2.0 * np.pi, size=24),
        ))
    return people


def generate(cfg: SceneConfig, model: BodyModel) -> SyntheticScene:
    """Build the ground-truth tracks and the corrupted detection stream."""
    rng = np.random.default_rng(cfg.seed)
    people = _make_people(cfg, rng)
    intr = cfg.intrinsics

    gt_frames: list[tuple[int, list[TrackRecord]]] = []
    det_frames: list[tuple[int, list[Detection]]] = []
    for frame in range(cfg.n_frames):
        gt_records: list[TrackRecord] = []
        detections: list[Detection] = []
        for pid, person in enumerate(people):
            pose6d = person.pose6d(frame, cfg.motion_amplitude)
            pose = rot6d_to_rotmat_batch(pose6d)
            cam_t = person.cam_t(frame)
            out = forward(model, PoseParams.from_rotations(pose), ShapeParams(person.betas))
            pix = project(out.mesh + cam_t[:, None], intr)
            x0, y0 = pix.min(axis=1)
            x1, y1 = pix.max(axis=1)
            bbox = np.array([x0, y0, x1 - x0, y1 - y0])
            keypoints = project(out.joints + cam_t[:, None], intr)

            gt_records.append(TrackRecord(frame=frame, track_id=pid + 1, pose=pose,
                                          betas=person.betas, cam_t=cam_t, bbox=bbox,
                                          amodal=False))

            # Corruption draws happen for every person on every frame so the
            # stream is deterministic regardless of which detections survive.
            kp_noise = rng.normal(size=keypoints.shape) * cfg.keypoint_noise_px
            loc_noise = rng.normal(size=3) * cfg.location_noise_m
            emb_noise = rng.normal(size=cfg.embedding_dim) * cfg.appearance_noise
            dropped = rng.random() < cfg.dropout_prob
            occluded = any(o.person == pid + 1 and o.covers(frame) for o in cfg.occlusions)
            if dropped or occluded:
                continue
            embedding = person.embedding + emb_noise
            embedding /= np.linalg.norm(embedding)
            detections.append(Detection(
                bbox=bbox,
                score=cfg.detection_score,
                keypoints2d=keypoints + kp_noise,
                keypoint_conf=np.ones(keypoints.shape[1]),
                pose=pose,
                betas=person.betas,
                cam_t=cam_t + loc_noise,
                embedding=embedding,
            ))
        gt_frames.append((frame, gt_records))
        det_frames.append((frame, detections))
    return SyntheticScene(gt_frames=gt_frames, det_frames=det_frames, config=cfg)
