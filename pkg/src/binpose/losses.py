"""Training losses: symmetry-aware rotation loss and center-distance
sensitive translation loss, with analytic gradients and a finite
difference checker.

Both losses act on per-point network-style predictions grouped by
instance. Norms over point sets are means of per-point Euclidean norms,
so values are size independent and comparable across instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .so3 import SymmetryGroup, quats_to_matrices

TIE_TOL = 1e-6       # gap below which the min over symmetry rotations is ambiguous
DEGENERATE_MM = 1e-9


class TieAtMinimumError(RuntimeError):
    """The two best symmetry rotations are indistinguishable; the rotation
    loss is not differentiable here. Resample and retry."""


@dataclass(frozen=True)
class LossWeights:
    w_r: float = 1.0
    w_t: float = 1.0

    def __post_init__(self):
        if self.w_r < 0.0 or self.w_t < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.w_r == 0.0 and self.w_t == 0.0:
            raise ValueError("loss weights must not both be zero")


@dataclass
class LossInstance:
    """Targets and predictions for one instance.

    rotation_gt: (3,3); centroid_gt: (3,) mm; model: (K,3) object-frame
    cloud; group/mask: the object's symmetry; points: (m,3) scene points
    of the instance (drive the center weights); pred_centroids: (m,3);
    pred_quats: (m,4), re-normalized inside the losses.
    """

    rotation_gt: np.ndarray
    centroid_gt: np.ndarray
    model: np.ndarray
    group: SymmetryGroup
    mask: np.ndarray
    points: np.ndarray
    pred_centroids: np.ndarray
    pred_quats: np.ndarray

    def __post_init__(self):
        self.rotation_gt = np.asarray(self.rotation_gt, dtype=float).reshape(3, 3)
        self.centroid_gt = np.asarray(self.centroid_gt, dtype=float).reshape(3)
        self.model = np.asarray(self.model, dtype=float).reshape(-1, 3)
        self.mask = np.asarray(self.mask, dtype=float).reshape(3)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.pred_centroids = np.asarray(self.pred_centroids, dtype=float).reshape(-1, 3)
        self.pred_quats = np.asarray(self.pred_quats, dtype=float).reshape(-1, 4)
        m = self.points.shape[0]
        if m == 0:
            raise ValueError("instance has no points")
        if self.pred_centroids.shape[0] != m or self.pred_quats.shape[0] != m:
            raise ValueError("per-point prediction arrays must match the point count")
        if self.model.shape[0] == 0:
            raise ValueError("instance model cloud is empty")


def center_weights(points, centroid) -> np.ndarray:
    """Per-point weights in [0.5, 1.5], increasing with distance from the centroid.

    d_j = ||p_j - centroid||, mapped linearly so the closest point gets
    0.5 and the farthest 1.5. All weights are 1 when the distances are
    equal to within 1e-9 mm.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("cannot weight an empty point set")
    d = np.linalg.norm(pts - np.asarray(centroid, dtype=float).reshape(3), axis=1)
    span = d.max() - d.min()
    if span < DEGENERATE_MM:
        return np.ones_like(d)
    return 0.5 + (d - d.min()) / span


def _rotation_values(inst: LossInstance) -> np.ndarray:
    """Mean point-cloud distance for each symmetry rotation, shape (n_s,).

    Entry s is the mean over predicted points j and model points k of
    ||R_gt s m_k - R(q_j) m_k|| with the axis mask applied to m.
    """
    masked = inst.model * inst.mask                                    # (K,3)
    RgS = np.einsum("ij,sjk->sik", inst.rotation_gt, inst.group.matrices)
    gt_pts = np.einsum("sij,kj->ski", RgS, masked)                     # (ns,K,3)
    Rp = quats_to_matrices(inst.pred_quats)                            # (m,3,3)
    pred_pts = np.einsum("mij,kj->mki", Rp, masked)                    # (m,K,3)
    diff = gt_pts[:, None] - pred_pts[None]                            # (ns,m,K,3)
    return np.linalg.norm(diff, axis=3).mean(axis=(1, 2))


def rotation_loss(instances: Sequence[LossInstance]) -> float:
    """Symmetry-aware rotation loss in mm.

    Per instance, the symmetry rotation minimizing the mean masked model
    point distance between ground truth and predictions is selected (one
    s for all the instance's points); per-point losses are averaged
    within the instance, then across instances. Zero exactly when every
    prediction is a symmetric equivalent of its ground truth.
    """
    if len(instances) == 0:
        raise ValueError("rotation loss needs at least one instance")
    total = 0.0
    for inst in instances:
        total += float(_rotation_values(inst).min())
    return total / len(instances)


def translation_loss(instances: Sequence[LossInstance]) -> float:
    """Center-distance sensitive translation loss in mm.

    Per point: ||T_gt - T_pred_j|| weighted by the point's center
    weight; averaged within each instance and then across instances.
    """
    if len(instances) == 0:
        raise ValueError("translation loss needs at least one instance")
    total = 0.0
    for inst in instances:
        w = center_weights(inst.points, inst.centroid_gt)
        err = np.linalg.norm(inst.centroid_gt - inst.pred_centroids, axis=1)
        total += float((err * w).mean())
    return total / len(instances)


def total_loss(instances: Sequence[LossInstance], weights: LossWeights) -> float:
    """Weighted sum w_r * L_r + w_t * L_t."""
    return weights.w_r * rotation_loss(instances) + weights.w_t * translation_loss(instances)


# ---------------------------------------------------------------------------
# analytic gradients


def _quat_matrix_partials(q: np.ndarray) -> np.ndarray:
    """d(rotation matrix)/d(quaternion component), shape (4,3,3).

    Partials of the unit-quaternion rotation formula treating the four
    components as free; combine with the normalization Jacobian to get
    the gradient with respect to a raw quaternion.
    """
    w, x, y, z = q
    dw = 2.0 * np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    dx = 2.0 * np.array([[0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]])
    dy = 2.0 * np.array([[-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]])
    dz = 2.0 * np.array([[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]])
    return np.stack([dw, dx, dy, dz])


def translation_loss_grad(instances: Sequence[LossInstance]) -> list[np.ndarray]:
    """Gradient of translation_loss w.r.t. each instance's pred_centroids,
    list of (m,3) arrays. Zero-length errors contribute zero gradient."""
    n = len(instances)
    grads = []
    for inst in instances:
        w = center_weights(inst.points, inst.centroid_gt)
        delta = inst.pred_centroids - inst.centroid_gt           # (m,3)
        norms = np.linalg.norm(delta, axis=1)
        safe = np.where(norms > 1e-12, norms, 1.0)
        unit = delta / safe[:, None]
        unit[norms <= 1e-12] = 0.0
        m = delta.shape[0]
        grads.append(unit * (w / (n * m))[:, None])
    return grads


def rotation_loss_grad(instances: Sequence[LossInstance],
                       tie_tol: float = TIE_TOL) -> list[np.ndarray]:
    """Gradient of rotation_loss w.r.t. each instance's raw pred_quats,
    list of (m,4) arrays.

    The winning symmetry rotation is held fixed; raises
    TieAtMinimumError when the two best rotations are within tie_tol, as
    the loss is not differentiable there.
    """
    n = len(instances)
    grads = []
    for inst in instances:
        vals = _rotation_values(inst)
        order = np.argsort(vals)
        if vals.shape[0] > 1 and vals[order[1]] - vals[order[0]] < tie_tol:
            raise TieAtMinimumError(
                f"symmetry-rotation gap {vals[order[1]] - vals[order[0]]:.2e} below {tie_tol}")
        s_best = inst.group.matrices[int(order[0])]
        masked = inst.model * inst.mask                        # (K,3)
        gt_pts = masked @ (inst.rotation_gt @ s_best).T        # (K,3)
        q = inst.pred_quats
        q_norm = np.linalg.norm(q, axis=1)
        q_hat = q / q_norm[:, None]
        Rp = quats_to_matrices(q)                               # (m,3,3)
        pred_pts = np.einsum("mij,kj->mki", Rp, masked)         # (m,K,3)
        err = pred_pts - gt_pts[None]                           # (m,K,3)
        norms = np.linalg.norm(err, axis=2)                     # (m,K)
        safe = np.where(norms > 1e-12, norms, 1.0)
        unit = err / safe[..., None]
        unit[norms <= 1e-12] = 0.0
        m, K = norms.shape
        # dL/dR_j = (1/(n m K)) sum_k u_jk (x) masked_k
        dL_dR = np.einsum("mki,kj->mij", unit, masked) / (n * m * K)  # (m,3,3)
        grad = np.empty((m, 4))
        for j in range(m):
            partials = _quat_matrix_partials(q_hat[j])          # (4,3,3)
            g_hat = np.einsum("cij,ij->c", partials, dL_dR[j])  # (4,)
            # chain through q_hat = q / ||q||
            grad[j] = (g_hat - np.dot(g_hat, q_hat[j]) * q_hat[j]) / q_norm[j]
        grads.append(grad)
    return grads


# ---------------------------------------------------------------------------
# finite-difference verification


def _clone_instances(instances: Sequence[LossInstance]) -> list[LossInstance]:
    return [LossInstance(i.rotation_gt, i.centroid_gt, i.model, i.group, i.mask,
                         i.points, i.pred_centroids.copy(), i.pred_quats.copy())
            for i in instances]


def gradcheck(loss: str, instances: Sequence[LossInstance],
              epsilon: float = 1e-5) -> float:
    """Compare analytic and central finite-difference gradients.

    ``loss`` is 'rotation', 'translation' or 'total' (unit weights). The
    parameter vector is every predicted centroid component and every raw
    quaternion component. Returns the max-norm relative error
    ||g_a - g_n||_inf / max(||g_a||_inf, ||g_n||_inf, 1e-12).

    Raises TieAtMinimumError when the rotation loss sits at a symmetry
    tie; callers should resample the configuration and retry.
    """
    if loss == "rotation":
        fn = rotation_loss
        g_cent = [np.zeros_like(i.pred_centroids) for i in instances]
        g_quat = rotation_loss_grad(instances)
    elif loss == "translation":
        fn = translation_loss
        g_cent = translation_loss_grad(instances)
        g_quat = [np.zeros_like(i.pred_quats) for i in instances]
    elif loss == "total":
        fn = lambda ins: total_loss(ins, LossWeights(1.0, 1.0))
        g_cent = translation_loss_grad(instances)
        g_quat = rotation_loss_grad(instances)
    else:
        raise ValueError(f"unknown loss selector {loss!r}")

    analytic = np.concatenate([np.concatenate([c.ravel(), q.ravel()])
                               for c, q in zip(g_cent, g_quat)])
    numeric = np.empty_like(analytic)
    work = _clone_instances(instances)
    pos = 0
    for inst in work:
        for arr in (inst.pred_centroids, inst.pred_quats):
            flat = arr.reshape(-1)
            for idx in range(flat.shape[0]):
                orig = flat[idx]
                flat[idx] = orig + epsilon
                hi = fn(work)
                flat[idx] = orig - epsilon
                lo = fn(work)
                flat[idx] = orig
                numeric[pos] = (hi - lo) / (2.0 * epsilon)
                pos += 1
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def random_instances(model, group: SymmetryGroup, mask,
                     rng: np.random.Generator, n_instances: int = 2,
                     n_points: int = 3) -> list[LossInstance]:
    """Random loss configuration away from the ground-truth minimum,
    suitable for finite-difference verification."""
    from .so3 import quat_to_matrix, random_quat  # local import avoids a cycle at import time

    instances = []
    for _ in range(n_instances):
        R_gt = quat_to_matrix(random_quat(rng))
        t_gt = rng.uniform(-50.0, 50.0, size=3)
        pts = t_gt + rng.uniform(-30.0, 30.0, size=(n_points, 3))
        instances.append(LossInstance(
            rotation_gt=R_gt,
            centroid_gt=t_gt,
            model=model,
            group=group,
            mask=mask,
            points=pts,
            pred_centroids=t_gt + rng.uniform(-8.0, 8.0, size=(n_points, 3)),
            pred_quats=np.stack([random_quat(rng) for _ in range(n_points)]),
        ))
    return instances


def gradcheck_trials(loss: str, model, group: SymmetryGroup, mask,
                     trials: int = 50, epsilon: float = 1e-5,
                     seed: int = 0, max_resamples: int = 50) -> float:
    """Worst relative gradient error over random configurations.

    Configurations landing on a symmetry tie are resampled (the loss is
    not differentiable there); more than ``max_resamples`` consecutive
    ties raises the underlying TieAtMinimumError.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        for attempt in range(max_resamples):
            instances = random_instances(model, group, mask, rng)
            try:
                worst = max(worst, gradcheck(loss, instances, epsilon))
                break
            except TieAtMinimumError:
                if attempt == max_resamples - 1:
                    raise
    return worst


def numeric_gradient_norm(loss: str, instances: Sequence[LossInstance],
                          epsilon: float = 1e-5) -> float:
    """Max-norm of the central-difference gradient alone (no analytic
    side); useful at non-differentiable stationary points."""
    if loss == "rotation":
        fn = rotation_loss
    elif loss == "translation":
        fn = translation_loss
    else:
        fn = lambda ins: total_loss(ins, LossWeights(1.0, 1.0))
    work = _clone_instances(instances)
    worst = 0.0
    for inst in work:
        for arr in (inst.pred_centroids, inst.pred_quats):
            flat = arr.reshape(-1)
            for idx in range(flat.shape[0]):
                orig = flat[idx]
                flat[idx] = orig + epsilon
                hi = fn(work)
                flat[idx] = orig - epsilon
                lo = fn(work)
                flat[idx] = orig
                worst = max(worst, abs((hi - lo) / (2.0 * epsilon)))
    return worst
