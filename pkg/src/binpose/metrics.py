"""Symmetry-aware evaluation: instance-level F1 and point-wise recall.

Ground-truth instances are filtered by relative visibility first, so
heavily buried objects (which a picking system should not target) do
not drag the scores. Predictions are matched one-to-one to visible
ground truths greedily by ascending symmetry-aware mean distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .so3 import Pose, SymmetryGroup, symmetric_pose_distance


@dataclass(frozen=True)
class EvalConfig:
    tolerance_mm: float = 5.0          # per-instance / per-point distance threshold
    visibility_threshold: float = 0.4  # fraction of the best-visible instance

    def __post_init__(self):
        if self.tolerance_mm <= 0.0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.visibility_threshold < 1.0:
            raise ValueError("visibility threshold must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        return cls(tolerance_mm=float(d.get("tolerance_mm", 5.0)),
                   visibility_threshold=float(d.get("visibility_threshold", 0.4)))


@dataclass
class MatchRow:
    pred_index: int
    gt_index: int
    mean_distance: float
    is_tp: bool


@dataclass
class EvalReport:
    n_gt: int
    n_pred: int
    tp: int
    f1_inst: float
    recall: float
    matched_points: int
    total_points: int
    matches: list[MatchRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "tp": self.tp,
            "f1_inst": self.f1_inst,
            "recall": self.recall,
            "matched_points": self.matched_points,
            "total_points": self.total_points,
            "per_instance": [
                {"pred": m.pred_index, "gt": m.gt_index,
                 "mean_distance": m.mean_distance, "tp": m.is_tp}
                for m in self.matches
            ],
        }


def count_visible_gt(visible_counts, threshold: float) -> tuple[int, list[int]]:
    """Instances whose visible-point count clears the relative threshold.

    Instance i counts when n_i / max_k n_k > threshold. Returns the
    count and the qualifying indices; empty input gives (0, []).
    """
    counts = np.asarray(visible_counts, dtype=float)
    if counts.size == 0:
        return 0, []
    top = counts.max()
    if top <= 0.0:
        return 0, []
    keep = [i for i, c in enumerate(counts) if c / top > threshold]
    return len(keep), keep


def match_predictions(pred_poses: list[Pose], gt_poses: list[Pose], model,
                      group: SymmetryGroup, mask, tolerance_mm: float
                      ) -> tuple[list[MatchRow], int]:
    """Greedy one-to-one matching by ascending symmetry-aware mean distance.

    Every possible pair is ranked; pairs claim a prediction and a ground
    truth at most once. A matched pair is a true positive when its mean
    distance is below the tolerance. Ties in distance break toward lower
    (pred, gt) indices, keeping the result order independent.
    """
    rows: list[MatchRow] = []
    if not pred_poses or not gt_poses:
        return rows, 0
    n_p, n_g = len(pred_poses), len(gt_poses)
    dist = np.empty((n_p, n_g))
    for i, p in enumerate(pred_poses):
        for j, g in enumerate(gt_poses):
            _, dist[i, j] = symmetric_pose_distance(model, g, p, group, mask)
    order = sorted(((dist[i, j], i, j) for i in range(n_p) for j in range(n_g)))
    used_p = set()
    used_g = set()
    for d, i, j in order:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        rows.append(MatchRow(pred_index=i, gt_index=j, mean_distance=float(d),
                             is_tp=bool(d < tolerance_mm)))
        if len(used_p) == n_p or len(used_g) == n_g:
            break
    tp = sum(1 for r in rows if r.is_tp)
    return rows, tp


def f1_inst(tp: int, n_pred: int, n_gt: int) -> float:
    """Instance-level F1 = 2 TP / (N_pred + N_gt); zero on an empty scene."""
    denom = n_pred + n_gt
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom


def pointwise_recall(matches: list[MatchRow], pred_poses: list[Pose],
                     gt_poses: list[Pose], model, group: SymmetryGroup, mask,
                     tolerance_mm: float) -> tuple[float, int, int]:
    """Fraction of visible ground-truth model points placed within tolerance.

    Each visible ground truth contributes its full model point count to
    the denominator; matched ones contribute the number of model points
    whose per-point symmetry-corrected distance (under the matched
    prediction) is below tolerance, unmatched ones contribute zero.
    """
    model = np.asarray(model, dtype=float).reshape(-1, 3)
    k = model.shape[0]
    total = k * len(gt_poses)
    if total == 0:
        return 0.0, 0, 0
    matched = 0
    by_gt = {m.gt_index: m.pred_index for m in matches}
    for j, g in enumerate(gt_poses):
        i = by_gt.get(j)
        if i is None:
            continue
        per_point, _ = symmetric_pose_distance(model, g, pred_poses[i], group, mask)
        matched += int((per_point < tolerance_mm).sum())
    return matched / total, matched, total


def evaluate(pred_poses: list[Pose], gt_poses: list[Pose], visible_counts,
             model, group: SymmetryGroup, mask, config: EvalConfig) -> EvalReport:
    """Full scene evaluation: visibility filter, matching, F1 and recall."""
    n_gt, keep = count_visible_gt(visible_counts, config.visibility_threshold)
    visible = [gt_poses[i] for i in keep]
    matches, tp = match_predictions(pred_poses, visible, model, group, mask,
                                    config.tolerance_mm)
    recall, matched_pts, total_pts = pointwise_recall(
        matches, pred_poses, visible, model, group, mask, config.tolerance_mm)
    # report gt indices in the original scene numbering
    for m in matches:
        m.gt_index = keep[m.gt_index]
    return EvalReport(
        n_gt=n_gt,
        n_pred=len(pred_poses),
        tp=tp,
        f1_inst=f1_inst(tp, len(pred_poses), n_gt),
        recall=recall,
        matched_points=matched_pts,
        total_points=total_pts,
        matches=matches,
    )
