"""Training losses and their weighted totals.

The tactile-guided constraint (TGC) is the only geometric loss: for every
touching (object point, finger) pair in an SCM it pulls that finger's touch
centroid onto the object point.  Each per-pair distance is unsquared; the
reconstruction, vertex, and contact-consistency terms use squared or absolute
forms.  Default weights: alpha 2.0, beta 0.5, theta 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAMBDA_ALPHA = 2.0
LAMBDA_BETA = 0.5
LAMBDA_THETA = 1.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = LAMBDA_ALPHA
    beta: float = LAMBDA_BETA
    theta: float = LAMBDA_THETA

    def __post_init__(self):
        if min(self.alpha, self.beta, self.theta) < 0:
            raise ValueError("loss weights must be nonnegative")


def pairs_from_scm(scm: np.ndarray) -> np.ndarray:
    """(K, 2) array of (point_index, finger_index) touching pairs.

    Row-major (point, then finger) order; deterministic for a given SCM.
    """
    rows, cols = np.nonzero(scm)
    return np.stack([rows, cols], axis=1).astype(np.int64)


def tgc_loss(pairs: np.ndarray, points: np.ndarray, centroids: np.ndarray) -> float:
    """Sum over pairs of ||object point - finger touch centroid||.

    ``centroids`` is the (5, 3) array of per-finger weighted touch centroids
    of the posed hand.  Empty pair list yields 0.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return 0.0
    diff = points[pairs[:, 0]] - centroids[pairs[:, 1]]
    return float(np.linalg.norm(diff, axis=1).sum())


def tgc_loss_grad_centroids(pairs: np.ndarray, points: np.ndarray,
                            centroids: np.ndarray) -> tuple[float, np.ndarray]:
    """TGC value plus its gradient w.r.t. the (5, 3) centroids."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    grad = np.zeros_like(centroids)
    if pairs.shape[0] == 0:
        return 0.0, grad
    diff = points[pairs[:, 0]] - centroids[pairs[:, 1]]
    norms = np.linalg.norm(diff, axis=1)
    for k in range(pairs.shape[0]):
        if norms[k] > 1e-12:
            grad[pairs[k, 1]] -= diff[k] / norms[k]
    return float(norms.sum()), grad


def tgc_grad_params(asset, params: np.ndarray, pairs: np.ndarray,
                    points: np.ndarray) -> tuple[float, np.ndarray]:
    """TGC value and gradient w.r.t. the 61 hand params, chained through the
    touch centroids and forward kinematics."""
    verts, _ = asset.fk(params)
    cents = asset.finger_centroids(verts)
    val, d_cents = tgc_loss_grad_centroids(pairs, points, cents)
    d_verts = np.zeros_like(verts)
    for f in range(cents.shape[0]):
        d_verts[asset.pad_idx[f]] += asset.pad_w[f][:, None] * d_cents[f]
    grad = asset.fk_vjp(params, d_verts, np.zeros((asset.n_joints, 3)))
    return val, grad


def recon_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared L2 norm of the difference; used for contact maps (N values)
    and grasp vectors (61 values) alike."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.dot(d.ravel(), d.ravel()))


def contact_consistency_loss(c_pred: np.ndarray, binary_map: np.ndarray) -> float:
    """Sum of |predicted contact value| over entries where the binary map is
    0 (ground-truth contact); pushes predictions toward 0 = touching there."""
    c_pred = np.asarray(c_pred, dtype=np.float64)
    binary_map = np.asarray(binary_map)
    if c_pred.shape != binary_map.shape:
        raise ValueError(f"shape mismatch: {c_pred.shape} vs {binary_map.shape}")
    return float(np.abs((1 - binary_map) * c_pred).sum())


def contact_consistency_grad(c_pred: np.ndarray, binary_map: np.ndarray) -> np.ndarray:
    mask = (1 - np.asarray(binary_map)).astype(np.float64)
    return mask * np.sign(c_pred)


def vertex_loss(v_pred: np.ndarray, v_gt: np.ndarray) -> float:
    """Squared L2 over all vertex coordinates."""
    return recon_loss(v_pred, v_gt)


def semantic_total(l_r: float, l_c: float, w: LossWeights = LossWeights()) -> float:
    return w.alpha * l_r + w.beta * l_c


def contact_total(l_r: float, l_v: float, l_tgc: float,
                  w: LossWeights = LossWeights()) -> float:
    return w.alpha * l_r + w.beta * l_v + w.theta * l_tgc
