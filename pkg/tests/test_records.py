import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from smpltrack import jsonutil
from smpltrack.errors import ParseError
from smpltrack.records import (FitRecord, read_detections_jsonl, read_fits_jsonl,
                               read_tracks_jsonl, write_detections_jsonl,
                               write_fits_jsonl, write_tracks_jsonl)
from smpltrack.tracker import Detection, TrackRecord


def random_detection(rng, with_optional=True):
    kwargs = dict(bbox=rng.uniform(1, 100, size=4), score=float(rng.uniform(0, 1)))
    if with_optional:
        emb = rng.normal(size=16)
        kwargs.update(
            keypoints2d=rng.uniform(0, 1000, size=(2, 24)),
            keypoint_conf=rng.uniform(0, 1, size=24),
            pose=Rotation.random(24, random_state=int(rng.integers(1e6))).as_matrix(),
            betas=rng.normal(size=10),
            cam_t=rng.normal(size=3) + [0, 0, 5],
            embedding=emb / np.linalg.norm(emb),
        )
    return Detection(**kwargs)


def random_track_record(rng, frame, track_id):
    return TrackRecord(frame=frame, track_id=track_id,
                       pose=Rotation.random(24, random_state=int(rng.integers(1e6))).as_matrix(),
                       betas=rng.normal(size=10), cam_t=rng.normal(size=3),
                       bbox=rng.uniform(1, 100, size=4), amodal=bool(rng.random() < 0.3))


def test_detection_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    frames = [(f, [random_detection(rng), random_detection(rng, with_optional=False)])
              for f in range(5)]
    path = tmp_path / "det.jsonl"
    write_detections_jsonl(path, frames)
    loaded = read_detections_jsonl(path)
    assert [f for f, _ in loaded] == [f for f, _ in frames]
    for (_, dets_in), (_, dets_out) in zip(frames, loaded):
        for a, b in zip(dets_in, dets_out):
            assert np.array_equal(a.bbox, b.bbox)
            assert a.score == b.score
            for name in ("keypoints2d", "keypoint_conf", "pose", "betas", "cam_t", "embedding"):
                va, vb = getattr(a, name), getattr(b, name)
                assert (va is None) == (vb is None)
                if va is not None:
                    assert np.array_equal(va, vb), name


def test_tracks_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    frames = [(f, [random_track_record(rng, f, i + 1) for i in range(3)]) for f in range(4)]
    path = tmp_path / "tracks.jsonl"
    write_tracks_jsonl(path, frames)
    loaded = read_tracks_jsonl(path)
    for (_, recs_in), (_, recs_out) in zip(frames, loaded):
        for a, b in zip(recs_in, recs_out):
            assert a.track_id == b.track_id and a.amodal == b.amodal
            for name in ("pose", "betas", "cam_t", "bbox"):
                assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_fits_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    records = [FitRecord(frame=f, index=0,
                         pose=Rotation.random(24, random_state=f).as_matrix(),
                         betas=rng.normal(size=10), cam_t=rng.normal(size=3),
                         final_cost=float(rng.uniform()), mean_reproj_px=float(rng.uniform()),
                         iterations=int(rng.integers(1, 50)), converged=bool(rng.random() < 0.5))
               for f in range(3)]
    path = tmp_path / "fits.jsonl"
    write_fits_jsonl(path, records)
    loaded = read_fits_jsonl(path)
    for a, b in zip(records, loaded):
        assert np.array_equal(a.pose, b.pose)
        assert a.final_cost == b.final_cost
        assert a.iterations == b.iterations


def test_unknown_fields_ignored_on_read(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "det.jsonl"
    write_detections_jsonl(path, [(0, [random_detection(rng)])])
    row = json.loads(path.read_text())
    row["extra_top_level"] = {"a": 1}
    row["detections"][0]["novel_field"] = [1, 2, 3]
    path.write_text(json.dumps(row) + "\n")
    loaded = read_detections_jsonl(path)
    assert len(loaded) == 1 and len(loaded[0][1]) == 1


def test_writers_emit_only_schema_fields(tmp_path):
    rng = np.random.default_rng(4)
    path = tmp_path / "det.jsonl"
    write_detections_jsonl(path, [(0, [random_detection(rng)])])
    row = json.loads(path.read_text())
    assert set(row) == {"frame", "detections"}
    assert set(row["detections"][0]) == {"bbox", "kp2d", "smpl", "cam_t", "embedding", "score"}
    assert set(row["detections"][0]["smpl"]) == {"global_orient", "body_pose", "betas"}


def test_non_increasing_frames_rejected(tmp_path):
    rng = np.random.default_rng(5)
    path = tmp_path / "det.jsonl"
    lines = []
    for f in (0, 2, 1):
        write_detections_jsonl(path, [(f, [random_detection(rng, with_optional=False)])])
        lines.append(path.read_text())
    path.write_text("".join(lines))
    with pytest.raises(ParseError, match="strictly increasing"):
        read_detections_jsonl(path)


def test_duplicate_track_ids_rejected(tmp_path):
    rng = np.random.default_rng(6)
    rec = random_track_record(rng, 0, 1)
    path = tmp_path / "tracks.jsonl"
    with pytest.raises(ValueError):
        write_tracks_jsonl(path, [(0, [rec, rec])])


def test_float_serialization_is_bit_exact():
    rng = np.random.default_rng(7)
    values = list(rng.normal(size=200) * 10.0**rng.integers(-12, 12, size=200))
    text = jsonutil.dumps(values)
    for original, parsed in zip(values, jsonutil.loads(text)):
        assert float(original) == parsed


def test_jsonutil_rejects_non_finite():
    with pytest.raises(ValueError):
        jsonutil.dumps(float("nan"))
    with pytest.raises(ValueError):
        jsonutil.dumps([float("inf")])
