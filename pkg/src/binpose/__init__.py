"""Symmetry-aware 6D pose estimation core for bin picking.

Point-cloud-only building blocks: rotation/symmetry math, normalized
workpiece space, symmetry-aware training losses, two-stage clustering
with pose voting, ICP refinement, evaluation metrics, and a synthetic
scene generator with a noisy oracle predictor standing in for a network.
"""

from .cluster import (ClusterParams, ClusterResult, PerPointPrediction,
                      cluster_predictions, mean_shift, pose_vote,
                      single_stage_pipeline, stage1_features,
                      two_stage_pipeline)
from .icp import IcpResult, best_fit_transform, icp_refine
from .losses import (LossInstance, LossWeights, TieAtMinimumError,
                     center_weights, gradcheck, gradcheck_trials,
                     rotation_loss, total_loss, translation_loss)
from .metrics import (EvalConfig, EvalReport, count_visible_gt, evaluate,
                      f1_inst, match_predictions, pointwise_recall)
from .so3 import (Pose, SymmetryDescriptor, SymmetryGroup,
                  UnsupportedSymmetryError, build_axis_mask,
                  build_symmetry_group, classify_axes, matrix_to_quat,
                  quat_normalize, quat_to_matrix, symmetric_pose_distance)
from .synth import (ObjectModel, OracleParams, Scene, SceneGenParams,
                    SceneGenerationError, apply_occlusion, box_cloud,
                    cylinder_cloud, generate_scene, make_crossing_rods_scene,
                    oracle_predict, rod_model, sphere_cloud)
from .workspace import (NormalizationTransform, denormalize_pose,
                        fit_normalization, normalize_pose, normalize_scene)

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
