"""Contact representations linking object clouds to hand surfaces.

Three related encodings are used throughout:

* contact map: per-point clamped distance to the nearest hand vertex,
  normalized by ``d_max`` so 0 means touching and 1 means at-or-beyond d_max;
* binary map: thresholded contact map where 0 marks contact;
* semantic contact map (SCM): N x 5 binary matrix marking which finger
  touches which object point; relationships are many-to-many.  SCMs come
  either from geometry (``fingertouch_analysis``) or from user clicks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .hand import N_FINGERS

D_MAX = 0.010
TAU_CONTACT = 0.003
TAU_THRESHOLD = 0.3
BRUSH_RADIUS = 0.008
SIGMA_GAUSSIAN = 0.008

SCM_FORMAT_VERSION = 1


class ContactValidationError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    source_id: str = ""

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ContactValidationError(f"expected nonempty (N, 3) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContactValidationError("cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ContactValidationError("normals shape must match points")
            object.__setattr__(self, "normals", nrm)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


def compute_contact_map(cloud: ObjectCloud, hand_verts: np.ndarray,
                        d_max: float = D_MAX) -> np.ndarray:
    """Per-point distance to the nearest hand vertex, clamped to [0, 1].

    0 means in contact; 1 means at least d_max away.
    """
    if d_max <= 0:
        raise ContactValidationError("d_max must be positive")
    hand_verts = np.asarray(hand_verts, dtype=np.float64)
    if hand_verts.ndim != 2 or hand_verts.shape[0] == 0:
        raise ContactValidationError("hand mesh is empty")
    return kernels.min_dist_capped(cloud.points, hand_verts, d_max) / d_max


def fingertouch_analysis(cloud: ObjectCloud, hand_verts: np.ndarray,
                         finger_labels: np.ndarray,
                         tau_contact: float = TAU_CONTACT) -> np.ndarray:
    """Semantic contact map from posed geometry.

    Entry (o, f) is 1 iff some vertex labeled finger f lies strictly within
    tau_contact of object point o.
    """
    if tau_contact <= 0:
        raise ContactValidationError("tau_contact must be positive")
    hand_verts = np.asarray(hand_verts, dtype=np.float64)
    finger_labels = np.asarray(finger_labels)
    if finger_labels.shape[0] != hand_verts.shape[0]:
        raise ContactValidationError("mesh without per-vertex finger labels")
    d = kernels.label_min_dist(cloud.points, hand_verts, finger_labels,
                               N_FINGERS, tau_contact)
    return (d < tau_contact).astype(np.uint8)


def scm_from_clicks(cloud: ObjectCloud, clicks, n_fingers: int = N_FINGERS) -> np.ndarray:
    """SCM from user clicks: each click marks every point within its brush
    radius in the clicked finger's column.  Union semantics over clicks."""
    scm = np.zeros((cloud.n, n_fingers), dtype=np.uint8)
    for click in clicks:
        idx, finger, radius = _parse_click(click)
        if not 0 <= idx < cloud.n:
            raise ContactValidationError(f"point index {idx} out of range for N={cloud.n}")
        if not 0 <= finger < n_fingers:
            raise ContactValidationError(f"finger index {finger} out of range")
        if radius <= 0:
            raise ContactValidationError("brush radius must be positive")
        d2 = np.sum((cloud.points - cloud.points[idx]) ** 2, axis=1)
        scm[d2 <= radius * radius, finger] = 1
    return scm


def _parse_click(click):
    if isinstance(click, dict):
        return int(click["point_index"]), int(click["finger"]), float(click.get("radius", BRUSH_RADIUS))
    if len(click) == 2:
        return int(click[0]), int(click[1]), BRUSH_RADIUS
    return int(click[0]), int(click[1]), float(click[2])


def binarize(contact_map: np.ndarray, tau_threshold: float = TAU_THRESHOLD) -> np.ndarray:
    """Binary map: 0 where the contact map is below tau_threshold (contact),
    1 otherwise."""
    if not 0 < tau_threshold < 1:
        raise ContactValidationError("tau_threshold must lie in (0, 1)")
    return (np.asarray(contact_map) >= tau_threshold).astype(np.uint8)


def gaussian_condition_map(binary_map: np.ndarray, sigma: float,
                           cloud: ObjectCloud) -> np.ndarray:
    """Smooth the contact indicator (1 - B) over the cloud with a Gaussian
    kernel on point distances, renormalized to [0, 1]."""
    if sigma <= 0:
        raise ContactValidationError("sigma must be positive")
    indicator = 1.0 - np.asarray(binary_map, dtype=np.float64)
    if not indicator.any():
        return np.zeros(cloud.n)
    out = kernels.gaussian_smooth(cloud.points, indicator, sigma)
    return out / out.max()


# ---------------------------------------------------------------------------
# sparse SCM interchange
# ---------------------------------------------------------------------------

def scm_to_json_obj(scm: np.ndarray, object_id: str) -> dict:
    rows, cols = np.nonzero(scm)
    return {
        "version": SCM_FORMAT_VERSION,
        "object_id": object_id,
        "n_points": int(scm.shape[0]),
        "contacts": [
            {"point_index": int(o), "finger": int(f)} for o, f in zip(rows, cols)
        ],
    }


def scm_from_json_obj(obj: dict, n_fingers: int = N_FINGERS) -> tuple[np.ndarray, str]:
    try:
        n = int(obj["n_points"])
        object_id = str(obj.get("object_id", ""))
        contacts = obj["contacts"]
    except (KeyError, TypeError) as exc:
        raise ContactValidationError(f"malformed SCM object: {exc}") from exc
    if n <= 0:
        raise ContactValidationError("n_points must be positive")
    scm = np.zeros((n, n_fingers), dtype=np.uint8)
    for c in contacts:
        o, f = int(c["point_index"]), int(c["finger"])
        if not 0 <= o < n:
            raise ContactValidationError(f"point index {o} out of range for N={n}")
        if not 0 <= f < n_fingers:
            raise ContactValidationError(f"finger index {f} out of range")
        scm[o, f] = 1
    return scm, object_id
