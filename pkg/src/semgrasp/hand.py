"""Procedural articulated hand model.

The hand is a fixed-topology point surface: 778 surface vertices, 21 joints,
and a 61-dim parameter vector [global orientation (3), 15 joint axis-angles
(45), shape coefficients (10), translation (3)].  Geometry is generated
procedurally by :func:`build_hand_asset` and shipped as a deterministic
binary asset; loading the packaged asset and rebuilding from source produce
bitwise-identical bytes.

Frame conventions: wrist at the origin, fingers extend along +x (thumb
diagonally), palm faces +z.  Units are meters.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import container, kernels

N_VERTS = 778
N_JOINTS = 21
N_PARAMS = 61
N_FINGERS = 5
N_ROT = kernels.N_ROT
PALM_LABEL = 5

FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")

PALM_NORMAL = np.array([0.0, 0.0, 1.0])
PALM_CENTER = np.array([0.035, 0.0, 0.012])  # apex of the palm dome at rest

# rest skeleton: knuckle position and (proximal, middle, distal) segment
# lengths per finger, meters
_FINGER_BASE = np.array([
    [0.025, 0.045, -0.005],   # thumb
    [0.088, 0.030, 0.0],      # index
    [0.088, 0.010, 0.0],      # middle
    [0.088, -0.010, 0.0],     # ring
    [0.088, -0.030, 0.0],     # pinky
])
_FINGER_SEGS = np.array([
    [0.035, 0.028, 0.022],
    [0.032, 0.022, 0.018],
    [0.036, 0.025, 0.020],
    [0.033, 0.023, 0.019],
    [0.026, 0.018, 0.015],
])
_FINGER_DIRS = np.array([
    [0.7593, 0.6508, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
])
_FINGER_RADII = np.array([
    [0.0105, 0.0070],         # base radius, tip radius
    [0.0090, 0.0058],
    [0.0092, 0.0060],
    [0.0088, 0.0057],
    [0.0078, 0.0050],
])

_RINGS_PER_FINGER = 12
_RING_VERTS = 8
_VERTS_PER_FINGER = _RINGS_PER_FINGER * _RING_VERTS + 1  # 97, incl. tip cap

_SKIN_BLEND_WIDTH = 0.008

ASSET_FILENAME = "hand_template.sgb"


def canonical_rest_pose() -> np.ndarray:
    """The all-zero parameter vector; FK of it reproduces the template."""
    return np.zeros(N_PARAMS)


def _finger_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n1 = PALM_NORMAL - np.dot(PALM_NORMAL, d) * d
    n1 = n1 / np.linalg.norm(n1)
    n2 = np.cross(d, n1)
    return n1, n2


def _build_geometry():
    verts = []
    labels = []
    skin = []
    stations = []          # scalar coordinate along the owning finger, -1 for palm
    owner = []             # finger id, -1 for palm
    pad_idx = np.full((N_FINGERS, 10), -1, dtype=np.int64)
    pad_w = np.zeros((N_FINGERS, 10))
    faces = []

    def skin_row(f: int, s: float) -> np.ndarray:
        """Blend between wrist/mcp/pip/dip bones around each joint station."""
        lp, lm, _ = _FINGER_SEGS[f]
        bones = (0, 1 + 3 * f, 2 + 3 * f, 3 + 3 * f)
        knots = (0.0, lp, lp + lm)
        row = np.zeros(N_ROT)
        w = _SKIN_BLEND_WIDTH
        seg = 0
        for k, knot in enumerate(knots):
            if s >= knot + w / 2:
                seg = k + 1
        for k, knot in enumerate(knots):
            if abs(s - knot) < w / 2:
                a = (s - knot) / w + 0.5
                row[bones[k]] = 1.0 - a
                row[bones[k + 1]] = a
                return row
        row[bones[seg]] = 1.0
        return row

    for f in range(N_FINGERS):
        d = _FINGER_DIRS[f] / np.linalg.norm(_FINGER_DIRS[f])
        n1, n2 = _finger_frame(d)
        base = _FINGER_BASE[f]
        total = float(_FINGER_SEGS[f].sum())
        r0, r1 = _FINGER_RADII[f]
        f0 = len(verts)
        pad = []
        pad_inner = []
        for k in range(_RINGS_PER_FINGER):
            t = k / (_RINGS_PER_FINGER - 1)
            s = t * total
            radius = r0 + (r1 - r0) * t
            center = base + s * d
            for m in range(_RING_VERTS):
                phi = 2.0 * np.pi * m / _RING_VERTS
                v = center + radius * (np.cos(phi) * n1 + np.sin(phi) * n2)
                if k >= _RINGS_PER_FINGER - 3 and m in (0, 1, _RING_VERTS - 1):
                    pad.append(len(verts))
                    # depth below the palmar-most surface line of the segment
                    pad_inner.append(radius * (1.0 - np.cos(phi)))
                verts.append(v)
                labels.append(f)
                skin.append(skin_row(f, s))
                stations.append(s)
                owner.append(f)
        s_cap = total + 0.004
        pad.append(len(verts))
        pad_inner.append(r1)
        verts.append(base + s_cap * d)
        labels.append(f)
        skin.append(skin_row(f, s_cap))
        stations.append(s_cap)
        owner.append(f)
        pad_idx[f] = np.array(pad, dtype=np.int64)
        w = np.exp(-np.array(pad_inner) / 0.002)
        pad_w[f] = w / w.sum()
        # tube quads plus a tip fan
        for k in range(_RINGS_PER_FINGER - 1):
            for m in range(_RING_VERTS):
                a = f0 + k * _RING_VERTS + m
                b = f0 + k * _RING_VERTS + (m + 1) % _RING_VERTS
                c = b + _RING_VERTS
                e = a + _RING_VERTS
                faces.append((a, b, c))
                faces.append((a, c, e))
        cap = f0 + _RINGS_PER_FINGER * _RING_VERTS
        last = f0 + (_RINGS_PER_FINGER - 1) * _RING_VERTS
        for m in range(_RING_VERTS):
            faces.append((last + m, last + (m + 1) % _RING_VERTS, cap))

    # palm slab: top and bottom grids, three perimeter rings, one center point
    def palm_vert(p):
        verts.append(np.asarray(p, dtype=np.float64))
        labels.append(PALM_LABEL)
        skin.append(_palm_skin_row())
        stations.append(-1.0)
        owner.append(-1)

    xs = np.linspace(-0.015, 0.085, 11)
    ys = np.linspace(-0.040, 0.040, 10)
    grid_base = {}
    for zsign, zbase, dome in ((1.0, 0.008, 0.004), (-1.0, -0.006, 0.003)):
        grid_base[zsign] = len(verts)
        for y in ys:
            for x in xs:
                u = (x - 0.035) / 0.050
                v = y / 0.040
                z = zbase + zsign * dome * float(np.cos(np.pi * u / 2) * np.cos(np.pi * v / 2))
                palm_vert([x, y, z])
    ring_base = {}
    for z in (-0.007, 0.0, 0.007):
        ring_base[z] = len(verts)
        for k in range(24):
            t = 2.0 * np.pi * k / 24
            palm_vert([0.035 + 0.055 * np.cos(t), 0.044 * np.sin(t), z])
    palm_vert([0.035, 0.0, 0.012])

    # grid quads (top winding up, bottom down)
    for zsign in (1.0, -1.0):
        g = grid_base[zsign]
        for r in range(9):
            for c in range(10):
                a = g + r * 11 + c
                b = a + 1
                d = a + 11
                e = d + 1
                if zsign > 0:
                    faces.append((a, b, e))
                    faces.append((a, e, d))
                else:
                    faces.append((a, e, b))
                    faces.append((a, d, e))
    # perimeter strips between the three side rings
    for lo, hi in ((-0.007, 0.0), (0.0, 0.007)):
        rb, rt = ring_base[lo], ring_base[hi]
        for k in range(24):
            a, b = rb + k, rb + (k + 1) % 24
            c, d = rt + (k + 1) % 24, rt + k
            faces.append((a, b, c))
            faces.append((a, c, d))
    # stitch each grid boundary to its nearest side ring
    verts_arr = np.array(verts)
    center = np.array([0.035, 0.0])
    for zsign, ring_z, flip in ((1.0, 0.007, False), (-1.0, -0.007, True)):
        g = grid_base[zsign]
        boundary = [g + r * 11 + c for r in range(10) for c in range(11)
                    if r in (0, 9) or c in (0, 10)]
        ring = list(range(ring_base[ring_z], ring_base[ring_z] + 24))
        faces.extend(_zip_loops(boundary, ring, verts_arr, center, flip))

    verts = np.array(verts)
    assert verts.shape == (N_VERTS, 3)
    return (verts, np.array(labels, dtype=np.int64), np.array(skin),
            np.array(stations), np.array(owner, dtype=np.int64),
            pad_idx, pad_w, np.array(faces, dtype=np.int64))


def _zip_loops(loop_a, loop_b, verts, center, flip):
    """Triangulate the band between two concentric vertex loops.

    Both loops are ordered by polar angle about ``center``; a merge walk
    advances whichever loop's next vertex comes first, emitting one triangle
    per step (len(a) + len(b) triangles total).
    """
    def ordered(idx):
        p = verts[idx]
        ang = np.mod(np.arctan2(p[:, 1] - center[1], p[:, 0] - center[0]), 2 * np.pi)
        srt = np.argsort(ang, kind="stable")
        return [idx[i] for i in srt], ang[srt]

    ia_idx, ia_ang = ordered(list(loop_a))
    ib_idx, ib_ang = ordered(list(loop_b))
    na, nb = len(ia_idx), len(ib_idx)
    out = []
    ia = ib = 0
    while ia < na or ib < nb:
        if ia < na:
            a_next = ia_ang[(ia + 1) % na] + (2 * np.pi if ia + 1 >= na else 0.0)
        else:
            a_next = np.inf
        if ib < nb:
            b_next = ib_ang[(ib + 1) % nb] + (2 * np.pi if ib + 1 >= nb else 0.0)
        else:
            b_next = np.inf
        if a_next <= b_next:
            tri = (ia_idx[ia % na], ia_idx[(ia + 1) % na], ib_idx[ib % nb])
            ia += 1
        else:
            tri = (ib_idx[(ib + 1) % nb], ia_idx[ia % na], ib_idx[ib % nb])
            ib += 1
        out.append(tri[::-1] if flip else tri)
    return out


def _palm_skin_row() -> np.ndarray:
    row = np.zeros(N_ROT)
    row[0] = 1.0
    return row


def _build_joints():
    joints = np.zeros((N_JOINTS, 3))
    for f in range(N_FINGERS):
        d = _FINGER_DIRS[f] / np.linalg.norm(_FINGER_DIRS[f])
        base = _FINGER_BASE[f]
        lp, lm, ld = _FINGER_SEGS[f]
        joints[1 + 4 * f] = base
        joints[2 + 4 * f] = base + lp * d
        joints[3 + 4 * f] = base + (lp + lm) * d
        joints[4 + 4 * f] = base + (lp + lm + ld) * d
    return joints


def _build_kinematics():
    kin_parent = np.empty(N_ROT, dtype=np.int64)
    rot2out = np.empty(N_ROT, dtype=np.int64)
    out_bone = np.empty(N_JOINTS, dtype=np.int64)
    kin_parent[0] = -1
    rot2out[0] = 0
    out_bone[0] = 0
    for f in range(N_FINGERS):
        mcp, pip, dip = 1 + 3 * f, 2 + 3 * f, 3 + 3 * f
        kin_parent[mcp] = 0
        kin_parent[pip] = mcp
        kin_parent[dip] = pip
        rot2out[mcp] = 1 + 4 * f
        rot2out[pip] = 2 + 4 * f
        rot2out[dip] = 3 + 4 * f
        out_bone[1 + 4 * f] = mcp
        out_bone[2 + 4 * f] = pip
        out_bone[3 + 4 * f] = dip
        out_bone[4 + 4 * f] = dip
    return kin_parent, rot2out, out_bone


def _build_shape_dirs(verts_t, joints_t, stations, owner):
    dv = np.zeros((10, N_VERTS, 3))
    dj = np.zeros((10, N_JOINTS, 3))
    # dir 0: uniform scale about the wrist
    dv[0] = 0.1 * verts_t
    dj[0] = 0.1 * joints_t
    # dir 1: finger elongation along each finger axis
    for f in range(N_FINGERS):
        d = _FINGER_DIRS[f] / np.linalg.norm(_FINGER_DIRS[f])
        sel = owner == f
        dv[1, sel] = 0.1 * stations[sel, None] * d
        lp, lm, ld = _FINGER_SEGS[f]
        for k, s in enumerate((0.0, lp, lp + lm, lp + lm + ld)):
            dj[1, 1 + 4 * f + k] = 0.1 * s * d
    # dirs 2..9: smooth sinusoidal displacement fields shared by verts/joints
    rng = np.random.default_rng(74210)
    for k in range(2, 10):
        freq = rng.uniform(15.0, 45.0, size=3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        dv[k] = 0.003 * np.sin(verts_t @ freq + phase)[:, None] * u
        dj[k] = 0.003 * np.sin(joints_t @ freq + phase)[:, None] * u
    return dv, dj


@dataclass(frozen=True)
class HandAsset:
    verts_t: np.ndarray
    joints_t: np.ndarray
    labels: np.ndarray
    skin_w: np.ndarray
    shape_dirs_v: np.ndarray
    shape_dirs_j: np.ndarray
    kin_parent: np.ndarray
    rot2out: np.ndarray
    out_bone: np.ndarray
    pad_idx: np.ndarray
    pad_w: np.ndarray
    faces: np.ndarray
    finger_dir: np.ndarray
    curl_axis: np.ndarray
    meta: dict = field(repr=False)
    sha256: str = ""

    @property
    def n_vertices(self) -> int:
        return self.verts_t.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joints_t.shape[0]

    def fk_arrays(self):
        return (self.verts_t, self.joints_t, self.shape_dirs_v, self.shape_dirs_j,
                self.skin_w, self.kin_parent, self.rot2out, self.out_bone)

    def fk(self, params: np.ndarray):
        """Pose the hand; returns (verts (778, 3), joints (21, 3))."""
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (N_PARAMS,):
            raise ValueError(f"expected ({N_PARAMS},) params, got {params.shape}")
        return kernels.fk_forward(params, *self.fk_arrays())

    def fk_vjp(self, params, d_verts, d_joints) -> np.ndarray:
        """Gradient of <d_verts, verts(p)> + <d_joints, joints(p)> wrt params."""
        return kernels.fk_vjp(np.asarray(params, dtype=np.float64),
                              d_verts, d_joints, *self.fk_arrays())

    def finger_vertex_indices(self, f: int) -> np.ndarray:
        return np.nonzero(self.labels == f)[0]

    def finger_centroid(self, verts: np.ndarray, finger: int) -> np.ndarray:
        """Weighted touch centroid of one finger's designated contact set."""
        if not 0 <= finger < N_FINGERS:
            raise ValueError(f"finger index {finger} out of range")
        return self.pad_w[finger] @ verts[self.pad_idx[finger]]

    def finger_centroids(self, verts: np.ndarray) -> np.ndarray:
        """(5, 3) weighted touch centroids, one per finger."""
        out = np.empty((N_FINGERS, 3))
        for f in range(N_FINGERS):
            out[f] = self.pad_w[f] @ verts[self.pad_idx[f]]
        return out

    def _arrays(self) -> dict[str, np.ndarray]:
        return {
            "verts_t": self.verts_t, "joints_t": self.joints_t,
            "labels": self.labels, "skin_w": self.skin_w,
            "shape_dirs_v": self.shape_dirs_v, "shape_dirs_j": self.shape_dirs_j,
            "kin_parent": self.kin_parent, "rot2out": self.rot2out,
            "out_bone": self.out_bone, "pad_idx": self.pad_idx,
            "pad_w": self.pad_w, "faces": self.faces,
            "finger_dir": self.finger_dir, "curl_axis": self.curl_axis,
        }

    def to_bytes(self) -> bytes:
        return container.to_bytes(self._arrays(), self.meta)

    def save(self, path) -> str:
        return container.save(path, self._arrays(), self.meta)

    @classmethod
    def _from_parts(cls, arrays: dict, meta: dict, sha: str) -> "HandAsset":
        return cls(sha256=sha, meta=meta, **arrays)

    @classmethod
    def load(cls, path) -> "HandAsset":
        arrays, meta, sha = container.load(path)
        if meta.get("format") != "semgrasp-hand":
            raise container.ContainerError(f"{path} is not a hand asset")
        return cls._from_parts(arrays, meta, sha)


def build_hand_asset() -> HandAsset:
    """Generate the hand template from scratch (deterministic)."""
    verts_t, labels, skin_w, stations, owner, pad_idx, pad_w, faces = _build_geometry()
    joints_t = _build_joints()
    kin_parent, rot2out, out_bone = _build_kinematics()
    shape_dirs_v, shape_dirs_j = _build_shape_dirs(verts_t, joints_t, stations, owner)
    dirs = _FINGER_DIRS / np.linalg.norm(_FINGER_DIRS, axis=1, keepdims=True)
    curl = np.cross(dirs, np.broadcast_to(PALM_NORMAL, (N_FINGERS, 3)))
    curl /= np.linalg.norm(curl, axis=1, keepdims=True)
    meta = {
        "format": "semgrasp-hand",
        "version": 1,
        "fingers": list(FINGER_NAMES),
        "palm_label": PALM_LABEL,
        "palm_normal": [0.0, 0.0, 1.0],
        "units": "m",
    }
    asset = HandAsset(
        verts_t=verts_t, joints_t=joints_t, labels=labels, skin_w=skin_w,
        shape_dirs_v=shape_dirs_v, shape_dirs_j=shape_dirs_j,
        kin_parent=kin_parent, rot2out=rot2out, out_bone=out_bone,
        pad_idx=pad_idx, pad_w=pad_w, faces=faces,
        finger_dir=dirs, curl_axis=curl, meta=meta,
    )
    blob = asset.to_bytes()
    return HandAsset._from_parts(asset._arrays(), meta, hashlib.sha256(blob).hexdigest())


@functools.lru_cache(maxsize=1)
def default_asset() -> HandAsset:
    """The packaged hand template."""
    path = resources.files("semgrasp").joinpath("assets", ASSET_FILENAME)
    with resources.as_file(path) as p:
        return HandAsset.load(Path(p))
