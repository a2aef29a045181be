"""Body kinematics, keypoint fitting, 3D tracking and evaluation.

The package covers the non-neural core of a reconstruct-and-track
pipeline: a blend-skinned parametric body model with the continuous 6D
rotation encoding, perspective projection, a verified loss suite,
nonlinear least-squares fitting of body parameters to 2D keypoints, a
tracking-by-detection recursion in body-parameter space with masked-token
prediction and amodal completion, pose and multi-object tracking metrics,
and a synthetic scene generator that makes the whole stack testable
end to end.
"""

from .body_model import (BodyModel, MeshAndJoints, PoseParams, ShapeParams,
                         forward, load_model, make_mini_model, save_model)
from .camera import CameraPose, Intrinsics, estimate_translation, project
from .fitting import FitConfig, FitInit, FitResult, fit, init_params
from .metrics import (PoseMetrics, TrackingMetrics, bbox_iou, eval_tracking,
                      mpjpe, pa_mpjpe, pck, similarity_align)
from .objectives import (ConstantFactorScorer, FactorScorer, GaussianFactorScorer,
                         LossGradient, gradient, loss_adv_generator, loss_kp2d,
                         loss_kp3d, loss_smpl)
from .predictor import (PredictorWeights, Prediction, TrackHistory, TrackSlot,
                        baseline_predict, impute, load_weights, predict,
                        save_weights)
from .rotation import rot6d_to_rotmat, rotmat_to_rot6d
from .synth import OcclusionWindow, SceneConfig, SyntheticScene, generate
from .tracker import (Detection, Lifted3D, TrackRecord, Tracklet, TrackerConfig,
                      assign, association_cost, lift, pose_distance,
                      pose_distance_l2, run, step)

__version__ = "0.1.0"

__all__ = [
    "BodyModel", "MeshAndJoints", "PoseParams", "ShapeParams", "forward",
    "load_model", "make_mini_model", "save_model",
    "CameraPose", "Intrinsics", "estimate_translation", "project",
    "FitConfig", "FitInit", "FitResult", "fit", "init_params",
    "PoseMetrics", "TrackingMetrics", "bbox_iou", "eval_tracking", "mpjpe",
    "pa_mpjpe", "pck", "similarity_align",
    "ConstantFactorScorer", "FactorScorer", "GaussianFactorScorer",
    "LossGradient", "gradient", "loss_adv_generator", "loss_kp2d", "loss_kp3d",
    "loss_smpl",
    "PredictorWeights", "Prediction", "TrackHistory", "TrackSlot",
    "baseline_predict", "impute", "load_weights", "predict", "save_weights",
    "rot6d_to_rotmat", "rotmat_to_rot6d",
    "OcclusionWindow", "SceneConfig", "SyntheticScene", "generate",
    "Detection", "Lifted3D", "TrackRecord", "Tracklet", "TrackerConfig",
    "assign", "association_cost", "lift", "pose_distance", "pose_distance_l2",
    "run", "step",
]
