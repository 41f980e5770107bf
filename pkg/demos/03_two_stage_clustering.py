"""Two-stage clustering on a multi-symmetric object.

With per-point symmetric ambiguity the first stage splits every
instance into one cluster per equivalent rotation; the second stage
merges them back by position, and the medoid vote picks a clean
rotation. Single-stage clustering with averaged rotations produces
blends unlike any equivalent, which the recall metric exposes.
"""

from binpose import (ClusterParams, EvalConfig, OracleParams, SceneGenParams,
                     SymmetryDescriptor, evaluate)
from binpose.cluster import PerPointPrediction, cluster_predictions
from binpose.synth import ObjectModel, box_cloud, generate_scene, oracle_predict
from binpose.workspace import denormalize_pose, fit_normalization, normalize_scene

model = ObjectModel("twofold-box", box_cloud((40, 120, 160), 10),
                    SymmetryDescriptor(0, 0, 180, 15))
scene = generate_scene(model, SceneGenParams((4, 4), (700, 700, 500)), seed=5)
print(f"scene: {len(scene.instances)} instances, {scene.points.shape[0]} points, "
      f"|S| = {len(model.group)}")

pred = oracle_predict(scene, model, OracleParams(1.0, 2.0, symmetric_ambiguity=True),
                      seed=5)
t0 = fit_normalization(model.points)
pos_n, t = normalize_scene(pred.positions, t0)
pred_n = PerPointPrediction(pos_n, t.forward_points(pred.centroids), pred.quats)

for single in (False, True):
    res = cluster_predictions(pred_n, ClusterParams(), model.group, model.mask,
                              model.points, single_stage=single)
    poses = [denormalize_pose(i.pose, t) for i in res.instances]
    rep = evaluate(poses, scene.gt_poses(), scene.visible_counts(), model.points,
                   model.group, model.mask, EvalConfig())
    name = "single-stage (averaged rotations)" if single else "two-stage + pose voting"
    print(f"\n{name}")
    if not single:
        print(f"  stage-1 clusters: {len(res.stage1)} "
              f"(= instances x |S| = {len(scene.instances)} x {len(model.group)})")
    print(f"  final instances:  {len(res.instances)}")
    print(f"  f1_inst = {rep.f1_inst:.3f}   point-wise recall = {rep.recall:.3f}")
    for m in rep.matches:
        print(f"    pred {m.pred_index} -> gt {m.gt_index}: "
              f"mean distance {m.mean_distance:8.3f} mm  tp={m.is_tp}")
