"""Synthetic objects and a procedural grasp oracle.

Training data for the generation models comes from closed-form object
surfaces (spheres, boxes, cylinders, with capsules reserved as a held-out
family) grasped by a search procedure: the wrist is placed against the
object's support plane along a seeded approach direction, then each finger
curls until its touch pad meets the surface.  Grasps that fail quality gates
(too few finger contacts, or contacts far from the touch centroids they
supervise) are rejected and retried under a different approach.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import container
from .contact import (D_MAX, SIGMA_GAUSSIAN, TAU_CONTACT, TAU_THRESHOLD, ObjectCloud,
                      binarize, compute_contact_map, fingertouch_analysis,
                      gaussian_condition_map)
from .hand import canonical_rest_pose
from .objectives import pairs_from_scm, tgc_loss

FAMILIES = ("sphere", "box", "cylinder", "capsule")
HELD_OUT_FAMILY = "capsule"
TRAIN_FAMILIES = tuple(f for f in FAMILIES if f != HELD_OUT_FAMILY)

PAD_TARGET = 0.0025       # curl until a pad vertex is this close to the surface
# hand-frame point placed at the object's near-surface support point: high
# over the distal finger region, so only the rising tip arcs can reach it and
# contacts concentrate on the pads rather than the proximal phalanges
GRIP_ANCHOR = np.array([0.120, 0.010, 0.038])
CURL_MAX = 1.7
CURL_SPLIT = (0.45, 0.35, 0.20)   # mcp / pip / dip share of the curl angle
GATE_MIN_FINGERS = 3
# contact patches spread ~7mm around the weighted pad centroids, so the gate
# prunes only the straggling tail of that distribution
GATE_TGC_PER_PAIR = 0.008
MAX_ATTEMPTS = 12

DATASET_FORMAT = "semgrasp-dataset"
SPLIT_FORMAT = "semgrasp-dataset-split"
DATASET_VERSION = 1
SPLIT_NAMES = ("train", "eval_in", "eval_held")


class OracleError(RuntimeError):
    pass


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# object surfaces
# ---------------------------------------------------------------------------

def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _sphere(rng: np.random.Generator, n: int):
    r = rng.uniform(0.018, 0.030)
    d = _unit_rows(rng.normal(size=(n, 3)))
    return d * r, d


def _box(rng: np.random.Generator, n: int):
    h = rng.uniform(0.012, 0.026, size=3)
    areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2],
                      h[0] * h[2], h[0] * h[1], h[0] * h[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    nrm = np.zeros((n, 3))
    others = ((1, 2), (0, 2), (0, 1))
    for fidx in range(6):
        m = face == fidx
        k = int(m.sum())
        if k == 0:
            continue
        ax = fidx // 2
        sg = 1.0 - 2.0 * (fidx % 2)
        pts[m, ax] = sg * h[ax]
        nrm[m, ax] = sg
        for oth in others[ax]:
            pts[m, oth] = rng.uniform(-h[oth], h[oth], size=k)
    return pts, nrm


def _cylinder(rng: np.random.Generator, n: int):
    r = rng.uniform(0.012, 0.024)
    hh = rng.uniform(0.020, 0.035)
    areas = np.array([2 * np.pi * r * 2 * hh, np.pi * r * r, np.pi * r * r])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    for pidx in range(3):
        m = part == pidx
        k = int(m.sum())
        if k == 0:
            continue
        phi = rng.uniform(0.0, 2 * np.pi, size=k)
        if pidx == 0:
            pts[m] = np.stack([r * np.cos(phi), r * np.sin(phi),
                               rng.uniform(-hh, hh, size=k)], axis=1)
            nrm[m] = np.stack([np.cos(phi), np.sin(phi), np.zeros(k)], axis=1)
        else:
            sg = 1.0 if pidx == 1 else -1.0
            rad = r * np.sqrt(rng.uniform(0.0, 1.0, size=k))
            pts[m] = np.stack([rad * np.cos(phi), rad * np.sin(phi),
                               np.full(k, sg * hh)], axis=1)
            nrm[m] = np.array([0.0, 0.0, sg])
    return pts, nrm


def _capsule(rng: np.random.Generator, n: int):
    r = rng.uniform(0.012, 0.020)
    hh = rng.uniform(0.015, 0.028)
    areas = np.array([2 * np.pi * r * 2 * hh, 2 * np.pi * r * r, 2 * np.pi * r * r])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    for pidx in range(3):
        m = part == pidx
        k = int(m.sum())
        if k == 0:
            continue
        if pidx == 0:
            phi = rng.uniform(0.0, 2 * np.pi, size=k)
            pts[m] = np.stack([r * np.cos(phi), r * np.sin(phi),
                               rng.uniform(-hh, hh, size=k)], axis=1)
            nrm[m] = np.stack([np.cos(phi), np.sin(phi), np.zeros(k)], axis=1)
        else:
            sg = 1.0 if pidx == 1 else -1.0
            d = _unit_rows(rng.normal(size=(k, 3)))
            d[:, 2] = sg * np.abs(d[:, 2])
            pts[m] = d * r + np.array([0.0, 0.0, sg * hh])
            nrm[m] = d
    return pts, nrm


_SAMPLERS = {"sphere": _sphere, "box": _box, "cylinder": _cylinder,
             "capsule": _capsule}


def sample_object(family: str, seed: int, n_points: int = 256) -> ObjectCloud:
    """Seeded surface sample of one closed-form object, centered at origin."""
    if family not in _SAMPLERS:
        raise DatasetError(f"unknown object family {family!r}; choose from {FAMILIES}")
    if n_points <= 0:
        raise DatasetError("n_points must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(606,)))
    pts, nrm = _SAMPLERS[family](rng, int(n_points))
    return ObjectCloud(points=pts, normals=nrm, source_id=f"{family}-{int(seed)}")


# ---------------------------------------------------------------------------
# grasp oracle
# ---------------------------------------------------------------------------

_SQ3 = 1.0 / np.sqrt(3.0)
_CANONICAL_APPROACHES = np.array([
    [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
    [_SQ3, _SQ3, _SQ3], [-_SQ3, -_SQ3, _SQ3],
])


def axis_angle_from_matrix(rot: np.ndarray) -> np.ndarray:
    """Inverse of the Rodrigues map; stable at both 0 and pi."""
    tr = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(tr))
    if theta < 1e-12:
        return np.zeros(3)
    if theta > np.pi - 1e-3:
        # rot ~ 2 aa^T - I, so the diagonal fixes |a| and one row fixes signs
        axis = np.sqrt(np.maximum((np.diag(rot) + 1.0) / 2.0, 0.0))
        k = int(np.argmax(axis))
        for i in range(3):
            if i != k:
                axis[i] = rot[k, i] / (2.0 * axis[k])
        return theta * axis / np.linalg.norm(axis)
    skew = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0],
                     rot[1, 0] - rot[0, 1]])
    return theta * skew / (2.0 * np.sin(theta))


def _frame_for(approach: np.ndarray, roll: float) -> np.ndarray:
    """Rotation whose palm normal (+z of the hand) points along -approach and
    whose finger direction (+x) is the rolled tangent."""
    a = approach / np.linalg.norm(approach)
    b0 = np.cross(a, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(b0) < 1e-6:
        b0 = np.cross(a, np.array([1.0, 0.0, 0.0]))
    b0 /= np.linalg.norm(b0)
    b1 = np.cross(a, b0)
    t = np.cos(roll) * b0 + np.sin(roll) * b1
    u = np.cross(-a, t)
    return np.stack([t, u, -a], axis=1)


def _curl_into(params: np.ndarray, finger: int, theta: float, curl_axis: np.ndarray) -> None:
    base = 3 + 9 * finger
    for j, share in enumerate(CURL_SPLIT):
        params[base + 3 * j: base + 3 * j + 3] = share * theta * curl_axis


def _pad_distance(asset, params: np.ndarray, finger: int, points: np.ndarray) -> float:
    verts, _ = asset.fk(params)
    pads = verts[asset.pad_idx[finger]]
    d2 = ((pads[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min()))


def _curl_finger(asset, params: np.ndarray, finger: int, points: np.ndarray) -> float:
    """Curl one finger until its pad is PAD_TARGET from the cloud; leaves the
    best reachable curl in place and returns the final pad distance."""
    ax = asset.curl_axis[finger]
    thetas = np.linspace(0.0, CURL_MAX, 18)
    dists = np.empty_like(thetas)
    hit = -1
    for i, th in enumerate(thetas):
        _curl_into(params, finger, th, ax)
        dists[i] = _pad_distance(asset, params, finger, points)
        if dists[i] <= PAD_TARGET:
            hit = i
            break
    if hit <= 0:
        if hit == 0:   # already touching at zero curl
            _curl_into(params, finger, 0.0, ax)
            return float(dists[0])
        best = int(np.argmin(dists))
        _curl_into(params, finger, thetas[best], ax)
        return float(dists[best])
    lo, hi = thetas[hit - 1], thetas[hit]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        _curl_into(params, finger, mid, ax)
        if _pad_distance(asset, params, finger, points) <= PAD_TARGET:
            hi = mid
        else:
            lo = mid
    _curl_into(params, finger, hi, ax)
    return _pad_distance(asset, params, finger, points)


def oracle_grasp(asset, cloud: ObjectCloud, seed: int) -> tuple[np.ndarray, dict]:
    """Search for a gated grasp of the cloud; raises OracleError if no seeded
    approach passes the quality gates."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(707,)))
    c = cloud.centroid
    rejections = []
    for attempt in range(MAX_ATTEMPTS):
        a = _CANONICAL_APPROACHES[attempt % 8].copy()
        if attempt >= 8:
            a = a + rng.normal(scale=0.25, size=3)
        a /= np.linalg.norm(a)
        roll = rng.uniform(0.0, 2 * np.pi)
        anchor = GRIP_ANCHOR + np.array([0.0, 0.0, rng.uniform(0.0, 0.002)])
        rot = _frame_for(a, roll)
        support = float(((cloud.points - c) @ a).max())
        params = canonical_rest_pose()
        params[0:3] = axis_angle_from_matrix(rot)
        params[58:61] = c + support * a - rot @ anchor
        for f in range(5):
            _curl_finger(asset, params, f, cloud.points)
        verts, _ = asset.fk(params)
        scm = fingertouch_analysis(cloud, verts, asset.labels)
        n_fingers = int((scm.sum(axis=0) > 0).sum())
        pairs = pairs_from_scm(scm)
        if n_fingers < GATE_MIN_FINGERS or pairs.shape[0] == 0:
            rejections.append(f"attempt {attempt}: {n_fingers} fingers in contact")
            continue
        mean_pair = tgc_loss(pairs, cloud.points, asset.finger_centroids(verts)) / pairs.shape[0]
        if mean_pair >= GATE_TGC_PER_PAIR:
            rejections.append(f"attempt {attempt}: mean pair distance {mean_pair * 1000:.1f}mm")
            continue
        info = {"attempt": attempt, "n_contact_fingers": n_fingers,
                "n_pairs": int(pairs.shape[0]), "mean_pair_dist": float(mean_pair)}
        return params, info
    raise OracleError(f"no gated grasp for {cloud.source_id or 'cloud'} "
                      f"(seed {seed}): " + "; ".join(rejections))


def make_grasp_record(asset, cloud: ObjectCloud, seed: int, family: str = "") -> dict:
    params, info = oracle_grasp(asset, cloud, seed)
    verts, _ = asset.fk(params)
    cmap = compute_contact_map(cloud, verts)
    binary = binarize(cmap)
    scm = fingertouch_analysis(cloud, verts, asset.labels)
    return {"points": cloud.points, "normals": cloud.normals, "params": params,
            "scm": scm, "cmap": cmap, "binary": binary,
            "gaussian": gaussian_condition_map(binary, SIGMA_GAUSSIAN, cloud),
            "object_id": cloud.source_id, "family": family or cloud.source_id.split("-")[0],
            "seed": int(seed), "oracle": info}


# ---------------------------------------------------------------------------
# dataset building and storage
# ---------------------------------------------------------------------------

def _build_split(asset, families, count, seed_rng, n_points, rejected):
    records = []
    misses = 0
    while len(records) < count:
        family = families[len(records) % len(families)]
        obj_seed = int(seed_rng.integers(2 ** 31))
        cloud = sample_object(family, obj_seed, n_points)
        try:
            records.append(make_grasp_record(asset, cloud, obj_seed, family))
        except OracleError:
            misses += 1
            if misses > 20 + 4 * count:
                raise DatasetError(f"oracle rejection rate too high ({misses} misses)")
    rejected.append(misses)
    return records


def build_dataset(asset, *, n_train: int, n_eval_in: int, n_eval_held: int,
                  seed: int = 0, n_points: int = 256) -> dict:
    """Three splits: train and eval_in from the training families, eval_held
    from the held-out family only."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(808,))
    rngs = [np.random.default_rng(s) for s in ss.spawn(3)]
    rejected: list[int] = []
    splits = {
        "train": _build_split(asset, TRAIN_FAMILIES, n_train, rngs[0], n_points, rejected),
        "eval_in": _build_split(asset, TRAIN_FAMILIES, n_eval_in, rngs[1], n_points, rejected),
        "eval_held": _build_split(asset, (HELD_OUT_FAMILY,), n_eval_held, rngs[2],
                                  n_points, rejected),
    }
    manifest = {
        "format": DATASET_FORMAT, "version": DATASET_VERSION,
        "seed": int(seed), "n_points": int(n_points),
        "counts": {k: len(v) for k, v in splits.items()},
        "families": {"train": list(TRAIN_FAMILIES), "eval_in": list(TRAIN_FAMILIES),
                     "eval_held": [HELD_OUT_FAMILY]},
        "held_out_family": HELD_OUT_FAMILY,
        "thresholds": {"d_max": D_MAX, "tau_contact": TAU_CONTACT,
                       "tau_threshold": TAU_THRESHOLD, "sigma": SIGMA_GAUSSIAN},
        "oracle": {"pad_target": PAD_TARGET, "grip_anchor": GRIP_ANCHOR.tolist(),
                   "gate_min_fingers": GATE_MIN_FINGERS,
                   "gate_tgc_per_pair": GATE_TGC_PER_PAIR,
                   "rejected": {name: rejected[i] for i, name in enumerate(SPLIT_NAMES)}},
        "hand_sha": asset.sha256,
    }
    return {"splits": splits, "manifest": manifest}


def _stack_split(records: list[dict]) -> tuple[dict, dict]:
    families = sorted({r["family"] for r in records})
    arrays = {
        "points": np.stack([r["points"] for r in records]),
        "normals": np.stack([r["normals"] for r in records]),
        "params": np.stack([r["params"] for r in records]),
        "scm": np.stack([r["scm"] for r in records]),
        "cmap": np.stack([r["cmap"] for r in records]),
        "binary": np.stack([r["binary"] for r in records]),
        "gaussian": np.stack([r["gaussian"] for r in records]),
        "seeds": np.array([r["seed"] for r in records], dtype=np.int64),
        "family_code": np.array([families.index(r["family"]) for r in records],
                                dtype=np.int64),
    }
    return arrays, {"families": families}


def _unstack_split(arrays: dict, meta: dict) -> list[dict]:
    families = meta["families"]
    out = []
    for i in range(arrays["params"].shape[0]):
        family = families[int(arrays["family_code"][i])]
        seed = int(arrays["seeds"][i])
        out.append({"points": arrays["points"][i], "normals": arrays["normals"][i],
                    "params": arrays["params"][i], "scm": arrays["scm"][i],
                    "cmap": arrays["cmap"][i], "binary": arrays["binary"][i],
                    "gaussian": arrays["gaussian"][i], "family": family,
                    "seed": seed, "object_id": f"{family}-{seed}"})
    return out


def save_dataset(dirpath, dataset: dict) -> dict:
    """Write one container per split plus manifest.json; returns the manifest
    with checksums filled in."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    manifest = dict(dataset["manifest"])
    checksums = {}
    for name in SPLIT_NAMES:
        arrays, extra = _stack_split(dataset["splits"][name])
        meta = {"format": SPLIT_FORMAT, "version": DATASET_VERSION,
                "split": name, **extra}
        checksums[name] = container.save(dirpath / f"{name}.sgb", arrays, meta)
    manifest["checksums"] = checksums
    (dirpath / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_dataset(dirpath) -> dict:
    dirpath = Path(dirpath)
    mpath = dirpath / "manifest.json"
    if not mpath.exists():
        raise DatasetError(f"{dirpath} has no manifest.json")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{mpath}: invalid JSON: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DatasetError(f"{mpath} is not a dataset manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {manifest.get('version')}")
    splits = {}
    for name in SPLIT_NAMES:
        path = dirpath / f"{name}.sgb"
        if not path.exists():
            raise DatasetError(f"missing split file {path}")
        arrays, meta, sha = container.load(path)
        want = manifest.get("checksums", {}).get(name)
        if want and sha != want:
            raise DatasetError(f"{path} checksum mismatch; file is corrupt or stale")
        if meta.get("format") != SPLIT_FORMAT or meta.get("split") != name:
            raise DatasetError(f"{path} is not the {name} split")
        splits[name] = _unstack_split(arrays, meta)
    return {"splits": splits, "manifest": manifest}
