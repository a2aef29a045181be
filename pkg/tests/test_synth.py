import numpy as np
import pytest

from smpltrack.body_model import PoseParams, ShapeParams, forward, make_mini_model
from smpltrack.camera import project
from smpltrack.records import write_detections_jsonl, write_tracks_jsonl
from smpltrack.synth import OcclusionWindow, SceneConfig, generate


@pytest.fixture(scope="module")
def model():
    return make_mini_model(0)


def test_deterministic_output(tmp_path, model):
    cfg = SceneConfig(n_people=2, n_frames=15, seed=9, dropout_prob=0.3,
                      keypoint_noise_px=1.0, appearance_noise=0.1)
    paths = []
    for tag in ("a", "b"):
        scene = generate(cfg, model)
        gt_path = tmp_path / f"gt_{tag}.jsonl"
        det_path = tmp_path / f"det_{tag}.jsonl"
        write_tracks_jsonl(gt_path, scene.gt_frames)
        write_detections_jsonl(det_path, scene.det_frames)
        paths.append((gt_path, det_path))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()


def test_clean_config_detections_match_ground_truth(model):
    cfg = SceneConfig(n_people=2, n_frames=10, seed=1)
    scene = generate(cfg, model)
    for (frame, gt_records), (_, detections) in zip(scene.gt_frames, scene.det_frames):
        assert len(detections) == len(gt_records)
        for rec, det in zip(gt_records, detections):
            assert np.array_equal(det.bbox, rec.bbox)
            assert np.array_equal(det.pose, rec.pose)
            assert np.array_equal(det.cam_t, rec.cam_t)
            joints = forward(model, PoseParams.from_rotations(rec.pose),
                             ShapeParams(rec.betas)).joints
            reproj = project(joints + rec.cam_t[:, None], cfg.intrinsics)
            assert np.array_equal(det.keypoints2d, reproj)


def test_occlusion_window_deletes_detections(model):
    cfg = SceneConfig(n_people=2, n_frames=20, seed=2,
                      occlusions=(OcclusionWindow(person=2, start=10, length=5),))
    scene = generate(cfg, model)
    for frame, detections in scene.det_frames:
        gt = dict(scene.gt_frames)[frame]
        if 10 <= frame < 15:
            assert len(detections) == 1
            # The surviving detection belongs to person 1.
            assert np.array_equal(detections[0].bbox, gt[0].bbox)
        else:
            assert len(detections) == 2


def test_emitted_rotations_valid_and_boxes_positive(model):
    cfg = SceneConfig(n_people=3, n_frames=12, seed=3, motion_amplitude=0.4)
    scene = generate(cfg, model)
    for _, records in scene.gt_frames:
        for rec in records:
            gram = np.einsum("kab,kcb->kac", rec.pose, rec.pose)
            assert np.max(np.abs(gram - np.eye(3))) < 1e-9
            assert rec.bbox[2] > 0 and rec.bbox[3] > 0


def test_gt_ids_stable(model):
    cfg = SceneConfig(n_people=3, n_frames=8, seed=4)
    scene = generate(cfg, model)
    for _, records in scene.gt_frames:
        assert [r.track_id for r in records] == [1, 2, 3]


def test_noise_perturbs_only_configured_channels(model):
    clean = generate(SceneConfig(n_people=1, n_frames=5, seed=5), model)
    noisy = generate(SceneConfig(n_people=1, n_frames=5, seed=5, keypoint_noise_px=2.0), model)
    for (_, d_clean), (_, d_noisy) in zip(clean.det_frames, noisy.det_frames):
        assert np.array_equal(d_clean[0].pose, d_noisy[0].pose)
        assert not np.array_equal(d_clean[0].keypoints2d, d_noisy[0].keypoints2d)
