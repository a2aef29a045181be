import numpy as np
import pytest
from helpers import (eval_projected, finite_difference_gradient, flatten_gradient,
                     relative_error)
from scipy.spatial.transform import Rotation

from smpltrack.body_model import PoseParams, ShapeParams, forward, make_mini_model
from smpltrack.camera import Intrinsics, project
from smpltrack.objectives import (ConstantFactorScorer, GaussianFactorScorer,
                                  gradient, loss_adv_generator, loss_adv_gradient,
                                  loss_kp2d, loss_kp2d_gradient, loss_kp3d,
                                  loss_kp3d_gradient, loss_smpl, loss_smpl_gradient)
from smpltrack.rotation import identity_rot6d

K = Intrinsics(1000.0, 500.0, 500.0)


@pytest.fixture(scope="module")
def model():
    return make_mini_model(0)


def random_pose6d(rng, scale=0.3):
    return identity_rot6d(24) + rng.normal(size=(24, 6)) * scale


class TestLossValues:
    def test_smpl_zero_at_annotation(self):
        pose = PoseParams.identity()
        beta = np.zeros(10)
        assert loss_smpl(pose, beta, pose, beta) == 0.0

    def test_smpl_unit_beta_offset(self):
        pose = PoseParams.identity()
        assert loss_smpl(pose, np.eye(10)[0], pose, np.zeros(10)) == 1.0

    def test_smpl_global_flip_gives_eight(self):
        # |I - diag(-1,-1,1)|^2 = 4 + 4 + 0
        pose = PoseParams.identity()
        flipped = PoseParams(np.diag([-1.0, -1.0, 1.0]), pose.body_pose.copy())
        assert loss_smpl(pose, np.zeros(10), flipped, np.zeros(10)) == 8.0

    def test_smpl_symmetric(self):
        rng = np.random.default_rng(0)
        a = PoseParams.from_rot6d(random_pose6d(rng))
        b = PoseParams.from_rot6d(random_pose6d(rng))
        ba, bb = rng.normal(size=10), rng.normal(size=10)
        assert loss_smpl(a, ba, b, bb) == loss_smpl(b, bb, a, ba)

    def test_kp3d_zero_and_offset_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 24))
        assert loss_kp3d(x, x) == 0.0
        assert loss_kp3d(x + np.array([[1.0], [2.0], [3.0]]), x) < 1e-12

    def test_kp3d_hand_case(self):
        x = np.zeros((3, 2))
        x_gt = np.zeros((3, 2))
        x[:, 1] = [0.1, 0.2, 0.0]
        assert abs(loss_kp3d(x, x_gt) - 0.15) < 1e-15

    def test_kp2d_hand_cases(self):
        x = np.zeros((2, 2))
        gt = np.array([[2.0, 0.0], [0.0, 4.0]])  # L1 gaps 2px and 4px
        assert loss_kp2d(x, gt, np.array([1.0, 0.5])) == 2.0
        assert loss_kp2d(x, x, np.ones(2)) == 0.0
        assert loss_kp2d(x, gt, np.zeros(2)) == 0.0

    def test_adv_constant_scorers(self):
        body = PoseParams.identity().body_pose
        beta = np.zeros(10)
        assert loss_adv_generator(body, beta, ConstantFactorScorer(1.0)) == 0.0
        assert loss_adv_generator(body, beta, ConstantFactorScorer(0.0)) == 25.0
        values = np.ones(25)
        values[7] = 0.5
        assert abs(loss_adv_generator(body, beta, ConstantFactorScorer(values)) - 0.25) < 1e-15

    def test_losses_nonnegative(self, model):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = random_pose6d(rng), random_pose6d(rng)
            pa, pb = PoseParams.from_rot6d(a), PoseParams.from_rot6d(b)
            assert loss_smpl(pa, rng.normal(size=10), pb, rng.normal(size=10)) >= 0
            assert loss_kp3d(rng.normal(size=(3, 24)), rng.normal(size=(3, 24))) >= 0


class TestScorers:
    def test_gaussian_scores_in_unit_interval(self):
        rng = np.random.default_rng(3)
        corpus = Rotation.from_rotvec(rng.normal(size=(40 * 23, 3)) * 0.3).as_matrix()
        scorer = GaussianFactorScorer.fit(corpus.reshape(40, 23, 3, 3), rng.normal(size=(40, 10)))
        for _ in range(20):
            body = Rotation.from_rotvec(rng.normal(size=(23, 3))).as_matrix()
            scores = scorer.scores(body, rng.normal(size=10))
            assert np.all(scores >= 0.0) and np.all(scores <= 1.0)

    def test_beta_only_enters_shape_factor(self):
        rng = np.random.default_rng(4)
        corpus = Rotation.from_rotvec(rng.normal(size=(30 * 23, 3)) * 0.3).as_matrix()
        scorer = GaussianFactorScorer.fit(corpus.reshape(30, 23, 3, 3), rng.normal(size=(30, 10)))
        body = Rotation.from_rotvec(rng.normal(size=(23, 3)) * 0.2).as_matrix()
        s1 = scorer.scores(body, np.zeros(10))
        s2 = scorer.scores(body, np.ones(10))
        assert np.array_equal(s1[:24], s2[:24])
        assert s1[24] != s2[24]


class TestGradients:
    def test_smpl_gradient_zero_at_minimum(self):
        rng = np.random.default_rng(5)
        pose6d = random_pose6d(rng)
        beta = rng.normal(size=10)
        grad = loss_smpl_gradient(pose6d, beta, PoseParams.from_rot6d(pose6d), beta)
        assert np.max(np.abs(flatten_gradient(grad))) < 1e-12

    def test_smpl_gradient_finite_differences(self):
        rng = np.random.default_rng(6)
        pose_gt = PoseParams.from_rot6d(random_pose6d(rng))
        beta_gt = rng.normal(size=10)
        for _ in range(10):
            pose6d, beta = random_pose6d(rng), rng.normal(size=10)
            cam_t = rng.normal(size=3)

            def f(x):
                return loss_smpl(PoseParams.from_rot6d(x[:144].reshape(24, 6)),
                                 x[144:154], pose_gt, beta_gt)

            grad = loss_smpl_gradient(pose6d, beta, pose_gt, beta_gt)
            fd = finite_difference_gradient(f, pose6d, beta, cam_t)
            assert relative_error(flatten_gradient(grad), fd) <= 1e-4

    def test_kp3d_gradient_finite_differences(self, model):
        rng = np.random.default_rng(7)
        for _ in range(5):
            pose6d, beta = random_pose6d(rng), rng.normal(size=10) * 0.5
            cam_t = rng.normal(size=3)
            joints = forward(model, PoseParams.from_rot6d(pose6d), ShapeParams(beta)).joints
            offsets = rng.uniform(0.02, 0.2, size=joints.shape) * np.sign(rng.normal(size=joints.shape))
            joints_gt = joints + offsets

            def f(x):
                pose = PoseParams.from_rot6d(x[:144].reshape(24, 6))
                j = forward(model, pose, ShapeParams(x[144:154])).joints
                return loss_kp3d(j, joints_gt)

            grad = loss_kp3d_gradient(model, pose6d, beta, joints_gt)
            fd = finite_difference_gradient(f, pose6d, beta, cam_t)
            assert relative_error(flatten_gradient(grad), fd) <= 1e-4

    def test_kp2d_gradient_finite_differences(self, model):
        rng = np.random.default_rng(8)
        for _ in range(5):
            pose6d, beta = random_pose6d(rng), rng.normal(size=10) * 0.5
            cam_t = np.array([0.2, -0.1, 5.0])
            projected = eval_projected(
                model, np.concatenate([pose6d.reshape(-1), beta, cam_t]), K)
            kp_gt = projected + rng.uniform(2, 40, size=projected.shape) * np.sign(
                rng.normal(size=projected.shape))
            conf = rng.uniform(0.1, 1.0, size=24)
            conf[rng.integers(24)] = 0.0

            def f(x):
                return loss_kp2d(eval_projected(model, x, K), kp_gt, conf)

            grad = loss_kp2d_gradient(model, pose6d, beta, cam_t, K, kp_gt, conf)
            fd = finite_difference_gradient(f, pose6d, beta, cam_t)
            assert relative_error(flatten_gradient(grad), fd) <= 1e-4

    def test_kp2d_gradient_ignores_zero_conf_entries(self, model):
        rng = np.random.default_rng(9)
        pose6d, beta = random_pose6d(rng), rng.normal(size=10) * 0.5
        cam_t = np.array([0.0, 0.0, 5.0])
        joints = forward(model, PoseParams.from_rot6d(pose6d), ShapeParams(beta)).joints
        kp_gt = project(joints + cam_t[:, None], K) + 10.0
        conf = np.ones(24)
        conf[5] = 0.0
        g1 = loss_kp2d_gradient(model, pose6d, beta, cam_t, K, kp_gt, conf)
        kp_gt2 = kp_gt.copy()
        kp_gt2[:, 5] += 1e6
        g2 = loss_kp2d_gradient(model, pose6d, beta, cam_t, K, kp_gt2, conf)
        assert np.array_equal(flatten_gradient(g1), flatten_gradient(g2))

    def test_adv_gradient_finite_differences(self):
        rng = np.random.default_rng(10)
        corpus = Rotation.from_rotvec(rng.normal(size=(30 * 23, 3)) * 0.3).as_matrix()
        scorer = GaussianFactorScorer.fit(corpus.reshape(30, 23, 3, 3), rng.normal(size=(30, 10)))
        for _ in range(5):
            pose6d, beta = random_pose6d(rng), rng.normal(size=10)
            cam_t = rng.normal(size=3)

            def f(x):
                body = PoseParams.from_rot6d(x[:144].reshape(24, 6)).body_pose
                return loss_adv_generator(body, x[144:154], scorer)

            grad = loss_adv_gradient(pose6d, beta, scorer)
            fd = finite_difference_gradient(f, pose6d, beta, cam_t)
            assert relative_error(flatten_gradient(grad), fd) <= 1e-4

    def test_gradient_dispatcher(self):
        rng = np.random.default_rng(11)
        pose6d, beta = random_pose6d(rng), rng.normal(size=10)
        grad = gradient("smpl", pose6d=pose6d, beta=beta,
                        pose_gt=PoseParams.from_rot6d(pose6d), shape_gt=beta)
        assert np.max(np.abs(flatten_gradient(grad))) < 1e-12
        with pytest.raises(KeyError):
            gradient("nope")
