"""Numeric hot kernels, compiled with numba when available.

Every kernel has a pure-numpy twin (suffix ``_np``).  The active backend is
chosen once at import time from the ``SEMGRASP_NUMBA`` environment variable
(``1`` by default; set ``SEMGRASP_NUMBA=0`` to force the numpy path).  Both
paths compute the same quantities; tests assert their agreement and
``benchmarks/bench_kernels.py`` compares their speed.

Distance queries run an exhaustive scan for small clouds and switch to a
uniform spatial grid above ``GRID_THRESHOLD`` query points (numba path only;
the numpy fallback stays exhaustive, which is exact as well).
"""

from __future__ import annotations

import os

import numpy as np

GRID_THRESHOLD = 4096
_GRID_MAX_CELLS_PER_AXIS = 128

NUMBA_AVAILABLE = False
try:
    import numba
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("SEMGRASP_NUMBA", "1") != "0"

_F = np.float64


def _as_f8(a):
    return np.ascontiguousarray(a, dtype=_F)


# ---------------------------------------------------------------------------
# capped nearest-neighbor distance
# ---------------------------------------------------------------------------

def min_dist_capped_np(query: np.ndarray, ref: np.ndarray, cap: float) -> np.ndarray:
    """Per-query min Euclidean distance to ``ref``, saturated at ``cap``."""
    query = _as_f8(query)
    ref = _as_f8(ref)
    out = np.full(query.shape[0], cap, dtype=_F)
    # chunked to bound the (N, M) intermediate
    chunk = max(1, int(4_000_000 // max(ref.shape[0], 1)))
    for s in range(0, query.shape[0], chunk):
        block = query[s:s + chunk]
        d2 = np.sum((block[:, None, :] - ref[None, :, :]) ** 2, axis=2)
        np.minimum(np.sqrt(d2.min(axis=1)), cap, out=out[s:s + chunk])
    return out


@njit(cache=True)
def _min_dist_capped_exhaustive_nb(query, ref, cap):  # pragma: no cover - jit
    n = query.shape[0]
    m = ref.shape[0]
    out = np.empty(n, dtype=np.float64)
    cap2 = cap * cap
    for i in range(n):
        best = cap2
        qx, qy, qz = query[i, 0], query[i, 1], query[i, 2]
        for j in range(m):
            dx = qx - ref[j, 0]
            dy = qy - ref[j, 1]
            dz = qz - ref[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


@njit(cache=True)
def _build_grid_nb(ref, cell, origin, dims):  # pragma: no cover - jit
    m = ref.shape[0]
    ncell = dims[0] * dims[1] * dims[2]
    counts = np.zeros(ncell + 1, dtype=np.int64)
    ids = np.empty(m, dtype=np.int64)
    for j in range(m):
        cx = int((ref[j, 0] - origin[0]) / cell)
        cy = int((ref[j, 1] - origin[1]) / cell)
        cz = int((ref[j, 2] - origin[2]) / cell)
        if cx < 0:
            cx = 0
        if cy < 0:
            cy = 0
        if cz < 0:
            cz = 0
        if cx >= dims[0]:
            cx = dims[0] - 1
        if cy >= dims[1]:
            cy = dims[1] - 1
        if cz >= dims[2]:
            cz = dims[2] - 1
        cid = (cx * dims[1] + cy) * dims[2] + cz
        ids[j] = cid
        counts[cid + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    order = np.empty(m, dtype=np.int64)
    cursor = counts[:-1].copy()
    for j in range(m):
        cid = ids[j]
        order[cursor[cid]] = j
        cursor[cid] += 1
    return counts, order


@njit(cache=True)
def _min_dist_capped_grid_nb(query, ref, cap, cell, origin, dims, counts, order):  # pragma: no cover - jit
    n = query.shape[0]
    out = np.empty(n, dtype=np.float64)
    cap2 = cap * cap
    for i in range(n):
        qx, qy, qz = query[i, 0], query[i, 1], query[i, 2]
        cx = int(np.floor((qx - origin[0]) / cell))
        cy = int(np.floor((qy - origin[1]) / cell))
        cz = int(np.floor((qz - origin[2]) / cell))
        best = cap2
        for ox in range(-1, 2):
            gx = cx + ox
            if gx < 0 or gx >= dims[0]:
                continue
            for oy in range(-1, 2):
                gy = cy + oy
                if gy < 0 or gy >= dims[1]:
                    continue
                for oz in range(-1, 2):
                    gz = cz + oz
                    if gz < 0 or gz >= dims[2]:
                        continue
                    cid = (gx * dims[1] + gy) * dims[2] + gz
                    for s in range(counts[cid], counts[cid + 1]):
                        j = order[s]
                        dx = qx - ref[j, 0]
                        dy = qy - ref[j, 1]
                        dz = qz - ref[j, 2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 < best:
                            best = d2
        out[i] = np.sqrt(best)
    return out


def _grid_params(ref: np.ndarray, cap: float):
    lo = ref.min(axis=0) - 1e-9
    hi = ref.max(axis=0) + 1e-9
    span = np.maximum(hi - lo, 1e-9)
    # grid cells must be >= cap so a radius-cap query only touches 3x3x3 cells
    cell = max(cap, float(span.max()) / _GRID_MAX_CELLS_PER_AXIS)
    dims = np.maximum(1, np.ceil(span / cell).astype(np.int64))
    return cell, lo, dims


def min_dist_capped_nb(query: np.ndarray, ref: np.ndarray, cap: float) -> np.ndarray:
    query = _as_f8(query)
    ref = _as_f8(ref)
    if query.shape[0] <= GRID_THRESHOLD:
        return _min_dist_capped_exhaustive_nb(query, ref, float(cap))
    cell, origin, dims = _grid_params(ref, float(cap))
    counts, order = _build_grid_nb(ref, cell, origin, dims)
    return _min_dist_capped_grid_nb(query, ref, float(cap), cell, origin, dims, counts, order)


# ---------------------------------------------------------------------------
# per-label capped nearest-neighbor distance (finger-touch queries)
# ---------------------------------------------------------------------------

def label_min_dist_np(query, ref, labels, n_labels: int, cap: float) -> np.ndarray:
    """(N, n_labels) min distance from each query point to each label class."""
    query = _as_f8(query)
    ref = _as_f8(ref)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    out = np.full((query.shape[0], n_labels), cap, dtype=_F)
    for lab in range(n_labels):
        sel = ref[labels == lab]
        if sel.shape[0]:
            out[:, lab] = min_dist_capped_np(query, sel, cap)
    return out


@njit(cache=True)
def _label_min_dist_exhaustive_nb(query, ref, labels, n_labels, cap):  # pragma: no cover - jit
    n = query.shape[0]
    m = ref.shape[0]
    cap2 = cap * cap
    out = np.full((n, n_labels), cap2, dtype=np.float64)
    for i in range(n):
        qx, qy, qz = query[i, 0], query[i, 1], query[i, 2]
        for j in range(m):
            lab = labels[j]
            if lab < 0 or lab >= n_labels:
                continue
            dx = qx - ref[j, 0]
            dy = qy - ref[j, 1]
            dz = qz - ref[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < out[i, lab]:
                out[i, lab] = d2
    return np.sqrt(out)


def label_min_dist_nb(query, ref, labels, n_labels: int, cap: float) -> np.ndarray:
    query = _as_f8(query)
    ref = _as_f8(ref)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if query.shape[0] <= GRID_THRESHOLD:
        return _label_min_dist_exhaustive_nb(query, ref, labels, int(n_labels), float(cap))
    out = np.full((query.shape[0], n_labels), cap, dtype=_F)
    for lab in range(n_labels):
        sel = np.ascontiguousarray(ref[labels == lab])
        if sel.shape[0]:
            out[:, lab] = min_dist_capped_nb(query, sel, cap)
    return out


# ---------------------------------------------------------------------------
# gaussian smoothing of a per-point indicator over the cloud
# ---------------------------------------------------------------------------

def gaussian_smooth_np(points, weights, sigma: float) -> np.ndarray:
    points = _as_f8(points)
    weights = _as_f8(weights)
    inv = -0.5 / (sigma * sigma)
    out = np.empty(points.shape[0], dtype=_F)
    chunk = max(1, int(4_000_000 // max(points.shape[0], 1)))
    for s in range(0, points.shape[0], chunk):
        d2 = np.sum((points[s:s + chunk, None, :] - points[None, :, :]) ** 2, axis=2)
        out[s:s + chunk] = np.exp(d2 * inv) @ weights
    return out


@njit(cache=True)
def _gaussian_smooth_nb(points, weights, inv):  # pragma: no cover - jit
    n = points.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        acc = 0.0
        for j in range(n):
            dx = px - points[j, 0]
            dy = py - points[j, 1]
            dz = pz - points[j, 2]
            acc += weights[j] * np.exp((dx * dx + dy * dy + dz * dz) * inv)
        out[i] = acc
    return out


def gaussian_smooth_nb(points, weights, sigma: float) -> np.ndarray:
    return _gaussian_smooth_nb(_as_f8(points), _as_f8(weights), -0.5 / (sigma * sigma))


# ---------------------------------------------------------------------------
# axis-angle rotations
# ---------------------------------------------------------------------------

_RODRIGUES_EPS = 1e-8


@njit(cache=True, inline="always")
def _rodrigues_nb(w, R):  # pragma: no cover - jit
    x, y, z = w[0], w[1], w[2]
    t2 = x * x + y * y + z * z
    t = np.sqrt(t2)
    if t < _RODRIGUES_EPS:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    R[0, 0] = 1.0 - b * (y * y + z * z)
    R[0, 1] = b * x * y - a * z
    R[0, 2] = b * x * z + a * y
    R[1, 0] = b * x * y + a * z
    R[1, 1] = 1.0 - b * (x * x + z * z)
    R[1, 2] = b * y * z - a * x
    R[2, 0] = b * x * z - a * y
    R[2, 1] = b * y * z + a * x
    R[2, 2] = 1.0 - b * (x * x + y * y)


def _rodrigues_np(w: np.ndarray) -> np.ndarray:
    x, y, z = float(w[0]), float(w[1]), float(w[2])
    t2 = x * x + y * y + z * z
    t = np.sqrt(t2)
    if t < _RODRIGUES_EPS:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + a * K + b * (K @ K)


def _rodrigues_jac_np(w: np.ndarray) -> np.ndarray:
    """d R / d w_a for a = 0..2, shape (3, 3, 3).

    Exact for any angle; switches to the first-order limit d R = [e_a]_x
    below the epsilon where the closed form loses precision.
    """
    w = np.asarray(w, dtype=_F)
    t = np.linalg.norm(w)
    R = _rodrigues_np(w)
    out = np.empty((3, 3, 3), dtype=_F)
    eye = np.eye(3)
    if t < 1e-6:
        for a in range(3):
            e = eye[a]
            out[a] = np.array([[0.0, -e[2], e[1]], [e[2], 0.0, -e[0]], [-e[1], e[0], 0.0]])
        return out
    t2 = t * t
    for a in range(3):
        # Gallego & Yezzi: dR/dw_a = ([v]_x / t^2) @ R with v = w_a w + w x ((I - R) e_a)
        v = w[a] * w + np.cross(w, eye[:, a] - R[:, a])
        K = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
        out[a] = (K / t2) @ R
    return out


@njit(cache=True)
def _rodrigues_jac_nb(w, R, out):  # pragma: no cover - jit
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    t = np.sqrt(t2)
    if t < 1e-6:
        for a in range(3):
            for r in range(3):
                for c in range(3):
                    out[a, r, c] = 0.0
        out[0, 1, 2] = -1.0
        out[0, 2, 1] = 1.0
        out[1, 0, 2] = 1.0
        out[1, 2, 0] = -1.0
        out[2, 0, 1] = -1.0
        out[2, 1, 0] = 1.0
        return
    for a in range(3):
        # v = w_a * w + w x ((I - R) e_a)
        u0 = (1.0 if a == 0 else 0.0) - R[0, a]
        u1 = (1.0 if a == 1 else 0.0) - R[1, a]
        u2 = (1.0 if a == 2 else 0.0) - R[2, a]
        c0 = w[1] * u2 - w[2] * u1
        c1 = w[2] * u0 - w[0] * u2
        c2 = w[0] * u1 - w[1] * u0
        v0 = w[a] * w[0] + c0
        v1 = w[a] * w[1] + c1
        v2 = w[a] * w[2] + c2
        # out[a] = ([v]_x @ R) / t2
        for c in range(3):
            out[a, 0, c] = (-v2 * R[1, c] + v1 * R[2, c]) / t2
            out[a, 1, c] = (v2 * R[0, c] - v0 * R[2, c]) / t2
            out[a, 2, c] = (-v1 * R[0, c] + v0 * R[1, c]) / t2


# ---------------------------------------------------------------------------
# articulated-hand forward kinematics (linear blend skinning)
# ---------------------------------------------------------------------------
# Parameter layout (61): [0:3] root orientation, [3:48] 15 x axis-angle,
# [48:58] shape coefficients, [58:61] translation.  The root rotation pivots
# at the wrist joint, so the rest pose reproduces the template exactly.

N_ROT = 16  # wrist + 15 articulated joints


def _shaped_np(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j):
    beta = params[48:58]
    vs = verts_t + np.tensordot(beta, shape_dirs_v, axes=1)
    js = joints_t + np.tensordot(beta, shape_dirs_j, axes=1)
    return vs, js


def _transforms_np(params, js, kin_parent, rot2out):
    """World transforms per rotating joint, as (rot (16,3,3), tr (16,3))."""
    l_rot = np.empty((N_ROT, 3, 3), dtype=_F)
    l_tr = np.empty((N_ROT, 3), dtype=_F)
    for j in range(N_ROT):
        w = params[0:3] if j == 0 else params[3 + (j - 1) * 3: 6 + (j - 1) * 3]
        l_rot[j] = _rodrigues_np(w)
        rj = js[rot2out[j]]
        l_tr[j] = rj if j == 0 else rj - js[rot2out[kin_parent[j]]]
    g_rot = np.empty_like(l_rot)
    g_tr = np.empty_like(l_tr)
    for j in range(N_ROT):
        p = kin_parent[j]
        if p < 0:
            g_rot[j] = l_rot[j]
            g_tr[j] = l_tr[j]
        else:
            g_rot[j] = g_rot[p] @ l_rot[j]
            g_tr[j] = g_rot[p] @ l_tr[j] + g_tr[p]
    a_rot = g_rot.copy()
    a_tr = np.empty_like(g_tr)
    for j in range(N_ROT):
        a_tr[j] = g_tr[j] - g_rot[j] @ js[rot2out[j]]
    return l_rot, l_tr, g_rot, g_tr, a_rot, a_tr


def fk_forward_np(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j,
                  skin_w, kin_parent, rot2out, out_bone):
    params = _as_f8(params)
    vs, js = _shaped_np(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j)
    _, _, _, _, a_rot, a_tr = _transforms_np(params, js, kin_parent, rot2out)
    posed = np.einsum("vk,kab,vb->va", skin_w, a_rot, vs) + skin_w @ a_tr
    verts = posed + params[58:61]
    joints = np.empty((joints_t.shape[0], 3), dtype=_F)
    for k in range(joints_t.shape[0]):
        b = out_bone[k]
        joints[k] = a_rot[b] @ js[k] + a_tr[b] + params[58:61]
    return verts, joints


def fk_vjp_np(params, d_verts, d_joints, verts_t, joints_t, shape_dirs_v,
              shape_dirs_j, skin_w, kin_parent, rot2out, out_bone):
    """Gradient of <d_verts, verts> + <d_joints, joints> w.r.t. the 61 params."""
    params = _as_f8(params)
    d_verts = _as_f8(d_verts)
    d_joints = _as_f8(d_joints)
    n_out = joints_t.shape[0]
    vs, js = _shaped_np(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j)
    l_rot, l_tr, g_rot, g_tr, a_rot, a_tr = _transforms_np(params, js, kin_parent, rot2out)

    grad = np.zeros(61, dtype=_F)
    grad[58:61] = d_verts.sum(axis=0) + d_joints.sum(axis=0)

    # d wrt the per-bone affine transforms
    d_a_rot = np.einsum("vk,va,vb->kab", skin_w, d_verts, vs)
    d_a_tr = skin_w.T @ d_verts
    d_vs = np.einsum("vk,kba,vb->va", skin_w, a_rot, d_verts)
    d_js = np.zeros((n_out, 3), dtype=_F)
    for k in range(n_out):
        b = out_bone[k]
        d_a_rot[b] += np.outer(d_joints[k], js[k])
        d_a_tr[b] += d_joints[k]
        d_js[k] += a_rot[b].T @ d_joints[k]

    # A_j = [G_rot | G_tr - G_rot r_j]
    d_g_rot = np.empty_like(d_a_rot)
    d_g_tr = d_a_tr.copy()
    for j in range(N_ROT):
        rj = js[rot2out[j]]
        d_g_rot[j] = d_a_rot[j] - np.outer(d_a_tr[j], rj)
        d_js[rot2out[j]] -= g_rot[j].T @ d_a_tr[j]

    # chain rule through G_j = G_parent * L_j, children first
    d_l_rot = np.empty_like(l_rot)
    d_l_tr = np.empty_like(l_tr)
    for j in range(N_ROT - 1, -1, -1):
        p = kin_parent[j]
        if p < 0:
            d_l_rot[j] = d_g_rot[j]
            d_l_tr[j] = d_g_tr[j]
        else:
            d_l_rot[j] = g_rot[p].T @ d_g_rot[j]
            d_l_tr[j] = g_rot[p].T @ d_g_tr[j]
            d_g_rot[p] += d_g_rot[j] @ l_rot[j].T + np.outer(d_g_tr[j], l_tr[j])
            d_g_tr[p] += d_g_tr[j]

    # rotation params
    for j in range(N_ROT):
        w = params[0:3] if j == 0 else params[3 + (j - 1) * 3: 6 + (j - 1) * 3]
        dR = _rodrigues_jac_np(w)
        base = 0 if j == 0 else 3 + (j - 1) * 3
        for a in range(3):
            grad[base + a] += float(np.sum(dR[a] * d_l_rot[j]))

    # local offsets feed the shaped joint positions
    for j in range(N_ROT):
        d_js[rot2out[j]] += d_l_tr[j]
        p = kin_parent[j]
        if p >= 0:
            d_js[rot2out[p]] -= d_l_tr[j]

    # shape coefficients
    grad[48:58] = (
        np.einsum("kva,va->k", shape_dirs_v, d_vs)
        + np.einsum("kja,ja->k", shape_dirs_j, d_js)
    )
    return grad


@njit(cache=True)
def _fk_core_nb(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j,
                skin_w, kin_parent, rot2out, out_bone,
                vs, js, l_rot, l_tr, g_rot, g_tr, a_rot, a_tr,
                verts, joints):  # pragma: no cover - jit
    nv = verts_t.shape[0]
    nj = joints_t.shape[0]
    for i in range(nv):
        for c in range(3):
            acc = verts_t[i, c]
            for k in range(10):
                acc += params[48 + k] * shape_dirs_v[k, i, c]
            vs[i, c] = acc
    for i in range(nj):
        for c in range(3):
            acc = joints_t[i, c]
            for k in range(10):
                acc += params[48 + k] * shape_dirs_j[k, i, c]
            js[i, c] = acc
    w = np.empty(3, dtype=np.float64)
    for j in range(N_ROT):
        if j == 0:
            w[0], w[1], w[2] = params[0], params[1], params[2]
        else:
            b = 3 + (j - 1) * 3
            w[0], w[1], w[2] = params[b], params[b + 1], params[b + 2]
        _rodrigues_nb(w, l_rot[j])
        oj = rot2out[j]
        p = kin_parent[j]
        if p < 0:
            for c in range(3):
                l_tr[j, c] = js[oj, c]
        else:
            op = rot2out[p]
            for c in range(3):
                l_tr[j, c] = js[oj, c] - js[op, c]
    for j in range(N_ROT):
        p = kin_parent[j]
        if p < 0:
            for r in range(3):
                for c in range(3):
                    g_rot[j, r, c] = l_rot[j, r, c]
                g_tr[j, r] = l_tr[j, r]
        else:
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for s in range(3):
                        acc += g_rot[p, r, s] * l_rot[j, s, c]
                    g_rot[j, r, c] = acc
                acc = g_tr[p, r]
                for s in range(3):
                    acc += g_rot[p, r, s] * l_tr[j, s]
                g_tr[j, r] = acc
    for j in range(N_ROT):
        oj = rot2out[j]
        for r in range(3):
            acc = g_tr[j, r]
            for s in range(3):
                a_rot[j, r, s] = g_rot[j, r, s]
                acc -= g_rot[j, r, s] * js[oj, s]
            a_tr[j, r] = acc
    tx, ty, tz = params[58], params[59], params[60]
    for i in range(nv):
        x, y, z = 0.0, 0.0, 0.0
        for j in range(N_ROT):
            wij = skin_w[i, j]
            if wij == 0.0:
                continue
            px = a_rot[j, 0, 0] * vs[i, 0] + a_rot[j, 0, 1] * vs[i, 1] + a_rot[j, 0, 2] * vs[i, 2] + a_tr[j, 0]
            py = a_rot[j, 1, 0] * vs[i, 0] + a_rot[j, 1, 1] * vs[i, 1] + a_rot[j, 1, 2] * vs[i, 2] + a_tr[j, 1]
            pz = a_rot[j, 2, 0] * vs[i, 0] + a_rot[j, 2, 1] * vs[i, 1] + a_rot[j, 2, 2] * vs[i, 2] + a_tr[j, 2]
            x += wij * px
            y += wij * py
            z += wij * pz
        verts[i, 0] = x + tx
        verts[i, 1] = y + ty
        verts[i, 2] = z + tz
    for k in range(nj):
        b = out_bone[k]
        for r in range(3):
            acc = a_tr[b, r]
            for s in range(3):
                acc += a_rot[b, r, s] * js[k, s]
            joints[k, r] = acc
        joints[k, 0] += tx
        joints[k, 1] += ty
        joints[k, 2] += tz


def fk_forward_nb(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j,
                  skin_w, kin_parent, rot2out, out_bone):
    params = _as_f8(params)
    nv, nj = verts_t.shape[0], joints_t.shape[0]
    vs = np.empty((nv, 3))
    js = np.empty((nj, 3))
    l_rot = np.empty((N_ROT, 3, 3))
    l_tr = np.empty((N_ROT, 3))
    g_rot = np.empty((N_ROT, 3, 3))
    g_tr = np.empty((N_ROT, 3))
    a_rot = np.empty((N_ROT, 3, 3))
    a_tr = np.empty((N_ROT, 3))
    verts = np.empty((nv, 3))
    joints = np.empty((nj, 3))
    _fk_core_nb(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j,
                skin_w, kin_parent, rot2out, out_bone,
                vs, js, l_rot, l_tr, g_rot, g_tr, a_rot, a_tr, verts, joints)
    return verts, joints


@njit(cache=True)
def _fk_vjp_core_nb(params, d_verts, d_joints, verts_t, joints_t,
                    shape_dirs_v, shape_dirs_j, skin_w, kin_parent,
                    rot2out, out_bone, grad):  # pragma: no cover - jit
    nv = verts_t.shape[0]
    nj = joints_t.shape[0]
    vs = np.empty((nv, 3))
    js = np.empty((nj, 3))
    l_rot = np.empty((N_ROT, 3, 3))
    l_tr = np.empty((N_ROT, 3))
    g_rot = np.empty((N_ROT, 3, 3))
    g_tr = np.empty((N_ROT, 3))
    a_rot = np.empty((N_ROT, 3, 3))
    a_tr = np.empty((N_ROT, 3))
    verts = np.empty((nv, 3))
    joints = np.empty((nj, 3))
    _fk_core_nb(params, verts_t, joints_t, shape_dirs_v, shape_dirs_j,
                skin_w, kin_parent, rot2out, out_bone,
                vs, js, l_rot, l_tr, g_rot, g_tr, a_rot, a_tr, verts, joints)

    for a in range(61):
        grad[a] = 0.0
    for i in range(nv):
        grad[58] += d_verts[i, 0]
        grad[59] += d_verts[i, 1]
        grad[60] += d_verts[i, 2]
    for k in range(nj):
        grad[58] += d_joints[k, 0]
        grad[59] += d_joints[k, 1]
        grad[60] += d_joints[k, 2]

    d_a_rot = np.zeros((N_ROT, 3, 3))
    d_a_tr = np.zeros((N_ROT, 3))
    d_vs = np.zeros((nv, 3))
    d_js = np.zeros((nj, 3))
    for i in range(nv):
        for j in range(N_ROT):
            wij = skin_w[i, j]
            if wij == 0.0:
                continue
            for r in range(3):
                dv = wij * d_verts[i, r]
                d_a_tr[j, r] += dv
                for c in range(3):
                    d_a_rot[j, r, c] += dv * vs[i, c]
            for c in range(3):
                acc = 0.0
                for r in range(3):
                    acc += a_rot[j, r, c] * d_verts[i, r]
                d_vs[i, c] += wij * acc
    for k in range(nj):
        b = out_bone[k]
        for r in range(3):
            d_a_tr[b, r] += d_joints[k, r]
            for c in range(3):
                d_a_rot[b, r, c] += d_joints[k, r] * js[k, c]
        for c in range(3):
            acc = 0.0
            for r in range(3):
                acc += a_rot[b, r, c] * d_joints[k, r]
            d_js[k, c] += acc

    d_g_rot = np.empty((N_ROT, 3, 3))
    d_g_tr = np.empty((N_ROT, 3))
    for j in range(N_ROT):
        oj = rot2out[j]
        for r in range(3):
            d_g_tr[j, r] = d_a_tr[j, r]
            for c in range(3):
                d_g_rot[j, r, c] = d_a_rot[j, r, c] - d_a_tr[j, r] * js[oj, c]
        for c in range(3):
            acc = 0.0
            for r in range(3):
                acc += g_rot[j, r, c] * d_a_tr[j, r]
            d_js[oj, c] -= acc

    d_l_rot = np.empty((N_ROT, 3, 3))
    d_l_tr = np.empty((N_ROT, 3))
    for j in range(N_ROT - 1, -1, -1):
        p = kin_parent[j]
        if p < 0:
            for r in range(3):
                for c in range(3):
                    d_l_rot[j, r, c] = d_g_rot[j, r, c]
                d_l_tr[j, r] = d_g_tr[j, r]
        else:
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for s in range(3):
                        acc += g_rot[p, s, r] * d_g_rot[j, s, c]
                    d_l_rot[j, r, c] = acc
                acc = 0.0
                for s in range(3):
                    acc += g_rot[p, s, r] * d_g_tr[j, s]
                d_l_tr[j, r] = acc
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for s in range(3):
                        acc += d_g_rot[j, r, s] * l_rot[j, c, s]
                    d_g_rot[p, r, c] += acc + d_g_tr[j, r] * l_tr[j, c]
                d_g_tr[p, r] += d_g_tr[j, r]

    w = np.empty(3)
    R = np.empty((3, 3))
    dR = np.empty((3, 3, 3))
    for j in range(N_ROT):
        if j == 0:
            w[0], w[1], w[2] = params[0], params[1], params[2]
            base = 0
        else:
            base = 3 + (j - 1) * 3
            w[0], w[1], w[2] = params[base], params[base + 1], params[base + 2]
        _rodrigues_nb(w, R)
        _rodrigues_jac_nb(w, R, dR)
        for a in range(3):
            acc = 0.0
            for r in range(3):
                for c in range(3):
                    acc += dR[a, r, c] * d_l_rot[j, r, c]
            grad[base + a] += acc

    for j in range(N_ROT):
        oj = rot2out[j]
        p = kin_parent[j]
        for c in range(3):
            d_js[oj, c] += d_l_tr[j, c]
        if p >= 0:
            op = rot2out[p]
            for c in range(3):
                d_js[op, c] -= d_l_tr[j, c]

    for k in range(10):
        acc = 0.0
        for i in range(nv):
            for c in range(3):
                acc += shape_dirs_v[k, i, c] * d_vs[i, c]
        for m in range(nj):
            for c in range(3):
                acc += shape_dirs_j[k, m, c] * d_js[m, c]
        grad[48 + k] = acc


def fk_vjp_nb(params, d_verts, d_joints, verts_t, joints_t, shape_dirs_v,
              shape_dirs_j, skin_w, kin_parent, rot2out, out_bone):
    grad = np.empty(61, dtype=_F)
    _fk_vjp_core_nb(_as_f8(params), _as_f8(d_verts), _as_f8(d_joints),
                    verts_t, joints_t, shape_dirs_v, shape_dirs_j, skin_w,
                    kin_parent, rot2out, out_bone, grad)
    return grad


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    min_dist_capped = min_dist_capped_nb
    label_min_dist = label_min_dist_nb
    gaussian_smooth = gaussian_smooth_nb
    fk_forward = fk_forward_nb
    fk_vjp = fk_vjp_nb
else:
    min_dist_capped = min_dist_capped_np
    label_min_dist = label_min_dist_np
    gaussian_smooth = gaussian_smooth_np
    fk_forward = fk_forward_np
    fk_vjp = fk_vjp_np


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def warmup(asset=None) -> None:
    """Trigger JIT compilation of the hot kernels with tiny inputs."""
    if not USE_NUMBA:
        return
    q = np.zeros((2, 3))
    r = np.ones((2, 3))
    min_dist_capped(q, r, 1.0)
    label_min_dist(q, r, np.zeros(2, dtype=np.int64), 2, 1.0)
    gaussian_smooth(q, np.ones(2), 0.1)
    if asset is not None:
        p = np.zeros(61)
        fk_forward(p, *asset.fk_arrays())
        fk_vjp(p, np.zeros((asset.n_vertices, 3)), np.zeros((asset.n_joints, 3)),
               *asset.fk_arrays())
