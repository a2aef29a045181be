import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from smpltrack.errors import DegenerateConfiguration, NoValidKeypoints
from smpltrack.metrics import (bbox_iou, eval_tracking, mpjpe, pa_mpjpe, pck,
                               similarity_align)


def box(x, y=0.0, w=10.0, h=20.0):
    return np.array([x, y, w, h])


class TestMpjpe:
    def test_zero_at_equality(self):
        x = np.random.default_rng(0).normal(size=(3, 24))
        assert mpjpe(x, x) == 0.0

    def test_hand_345_case(self):
        x = np.zeros((3, 2))
        gt = np.zeros((3, 2))
        x[:, 1] = [0.03, 0.04, 0.0]  # 50 mm error on joint 1, 0 on the root
        assert abs(mpjpe(x, gt) - 25.0) < 1e-12

    def test_global_offset_removed(self):
        x = np.random.default_rng(1).normal(size=(3, 10))
        assert mpjpe(x + np.array([[0.4], [0.5], [0.6]]), x) < 1e-12


class TestPaMpjpe:
    def test_similarity_transform_scores_zero(self):
        rng = np.random.default_rng(2)
        for seed in range(50):
            k = rng.integers(3, 24)
            x = rng.normal(size=(3, k))
            rot = Rotation.random(random_state=seed).as_matrix()
            scale = rng.uniform(0.2, 4.0)
            t = rng.normal(size=3)
            transformed = scale * rot @ x + t[:, None]
            assert pa_mpjpe(transformed, x) < 1e-8

    def test_bounded_by_mpjpe_on_misaligned_pairs(self):
        # Pairs differ by a similarity transform plus noise, the regime the
        # aligned metric is made for.
        rng = np.random.default_rng(3)
        for seed in range(200):
            x = rng.normal(size=(3, 24)) * 0.3
            rot = Rotation.random(random_state=seed).as_matrix()
            pred = rng.uniform(0.5, 2.0) * rot @ x + rng.normal(size=(3, 1))
            pred += rng.normal(size=(3, 24)) * 0.02
            assert pa_mpjpe(pred, x) <= mpjpe(pred, x)

    def test_three_point_case_matches_independent_oracle(self):
        # Umeyama's closed form, transcribed independently over (k, 3) rows.
        def oracle(src, dst):
            x, y = src.T, dst.T
            n = x.shape[0]
            mx, my = x.mean(axis=0), y.mean(axis=0)
            xc, yc = x - mx, y - my
            sigma = yc.T @ xc / n
            u, d, vt = np.linalg.svd(sigma)
            s = np.eye(3)
            if np.linalg.det(u) * np.linalg.det(vt.T) < 0:
                s[2, 2] = -1
            rot = u @ s @ vt
            c = (d * s.diagonal()).sum() * n / (xc**2).sum()
            t = my - c * rot @ mx
            aligned = (c * rot @ x.T + t[:, None])
            return float(np.linalg.norm(aligned - y.T, axis=0).mean() * 1000.0)

        rng = np.random.default_rng(4)
        for _ in range(20):
            src = rng.normal(size=(3, 3))
            dst = rng.normal(size=(3, 3))
            assert abs(pa_mpjpe(src, dst) - oracle(src, dst)) < 1e-9

    def test_collinear_raises(self):
        src = np.array([[0.0, 1, 2], [0, 1, 2], [0, 1, 2]])
        with pytest.raises(DegenerateConfiguration):
            pa_mpjpe(src, np.random.default_rng(5).normal(size=(3, 3)))

    def test_alignment_beats_root_alignment_in_squared_error(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            x = rng.normal(size=(3, 15))
            pred = x + rng.normal(size=(3, 15)) * 0.1
            scale, rot, trans = similarity_align(pred, x)
            aligned = scale * rot @ pred + trans[:, None]
            ss_pa = np.sum((aligned - x) ** 2)
            ss_root = np.sum(((pred - pred[:, :1]) - (x - x[:, :1])) ** 2)
            assert ss_pa <= ss_root + 1e-12


class TestPck:
    def test_exact_prediction(self):
        gt = np.random.default_rng(7).normal(size=(2, 12))
        assert pck(gt, gt, np.ones(12), 0.05, 100.0) == 1.0

    def test_hand_count(self):
        x = np.zeros((2, 2))
        gt = np.array([[1.0, 100.0], [0.0, 0.0]])  # errors 1 px and 100 px
        assert pck(x, gt, np.ones(2), 0.1, 100.0) == 0.5

    def test_zero_conf_raises(self):
        x = np.zeros((2, 3))
        with pytest.raises(NoValidKeypoints):
            pck(x, x, np.zeros(3), 0.1, 100.0)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 30)) * 20
        gt = x + rng.normal(size=(2, 30)) * 5
        conf = np.ones(30)
        values = [pck(x, gt, conf, tau, 100.0) for tau in (0.01, 0.05, 0.1, 0.5, 1.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestTracking:
    def perfect_scene(self, frames=10):
        return {f: [(1, box(0)), (2, box(50))] for f in range(frames)}

    def test_perfect_tracker(self):
        gt = self.perfect_scene()
        m = eval_tracking(gt, gt)
        assert m.id_switches == 0 and m.mota == 1.0 and m.idf1 == 1.0
        assert abs(m.hota - 1.0) < 1e-12
        assert m.false_positives == 0 and m.false_negatives == 0

    def test_single_id_switch_hand_case(self):
        gt = {f: [(1, box(0)), (2, box(50))] for f in range(1, 11)}
        pred = {f: [(1 if f <= 5 else 3, box(0)), (2, box(50))] for f in range(1, 11)}
        m = eval_tracking(pred, gt)
        assert m.id_switches == 1
        assert abs(m.mota - 0.95) < 1e-12
        assert abs(m.idf1 - 0.75) < 1e-12

    def test_empty_predictions(self):
        gt = self.perfect_scene()
        m = eval_tracking({}, gt)
        assert m.false_negatives == 20
        assert m.mota == 0.0 and m.idf1 == 0.0 and m.hota == 0.0

    def test_relabeling_invariance(self):
        gt = {f: [(1, box(0)), (2, box(50))] for f in range(1, 11)}
        pred = {f: [(1 if f <= 5 else 3, box(0)), (2, box(50))] for f in range(1, 11)}
        relabeled = {f: [(tid * 7 + 100, b) for tid, b in items] for f, items in pred.items()}
        a, b = eval_tracking(pred, gt), eval_tracking(relabeled, gt)
        assert (a.id_switches, a.mota, a.idf1, a.hota) == (b.id_switches, b.mota, b.idf1, b.hota)

    def test_fp_injection_decreases_mota(self):
        gt = self.perfect_scene()
        clean = eval_tracking(gt, gt)
        noisy = {f: items + [(99, box(300))] for f, items in gt.items()}
        m = eval_tracking(noisy, gt)
        assert m.false_positives == 10
        assert m.mota < clean.mota

    def test_idsw_injection_decreases_mota(self):
        gt = self.perfect_scene()
        switched = {f: [((1 if f < 5 else 11) if tid == 1 else tid, b) for tid, b in items]
                    for f, items in gt.items()}
        m = eval_tracking(switched, gt)
        assert m.id_switches == 1
        assert m.mota < 1.0

    def test_mota_never_exceeds_one(self):
        rng = np.random.default_rng(9)
        gt = self.perfect_scene()
        for _ in range(20):
            pred = {f: [(tid, b + rng.normal(size=4)) for tid, b in items]
                    for f, items in gt.items()}
            assert eval_tracking(pred, gt).mota <= 1.0

    def test_threads_do_not_change_result(self):
        gt = {f: [(1, box(0)), (2, box(50))] for f in range(1, 11)}
        pred = {f: [(1 if f <= 5 else 3, box(0)), (2, box(50))] for f in range(1, 11)}
        a = eval_tracking(pred, gt, threads=1)
        b = eval_tracking(pred, gt, threads=4)
        assert a == b


class TestBoxIou:
    def test_identical(self):
        assert bbox_iou(box(0), box(0)) == 1.0

    def test_disjoint(self):
        assert bbox_iou(box(0), box(100)) == 0.0

    def test_half_overlap(self):
        a = np.array([0.0, 0, 10, 10])
        b = np.array([5.0, 0, 10, 10])
        assert abs(bbox_iou(a, b) - 50.0 / 150.0) < 1e-12
