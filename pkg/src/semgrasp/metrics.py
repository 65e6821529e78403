"""Evaluation metrics for generated grasps.

All distances are meters internally; the report table prints millimeters.
Metrics that depend on a nonempty contact set return None when that set is
empty rather than inventing a value, and aggregation skips such rows.
"""

from __future__ import annotations

import json

import numpy as np

from . import generation
from .contact import ObjectCloud, binarize, compute_contact_map
from .objectives import pairs_from_scm, tgc_loss

SR_VARIANTS = ("recall", "precision")


def mpjpe(joints_pred: np.ndarray, joints_gt: np.ndarray) -> float:
    """Root-relative mean per-joint position error."""
    jp = np.asarray(joints_pred, dtype=np.float64)
    jg = np.asarray(joints_gt, dtype=np.float64)
    if jp.shape != jg.shape or jp.ndim != 2 or jp.shape[1] != 3:
        raise ValueError(f"joint arrays must share shape (J, 3), got {jp.shape} vs {jg.shape}")
    rel = (jp - jp[0]) - (jg - jg[0])
    return float(np.linalg.norm(rel, axis=1).mean())


def mrrpe(root_pred: np.ndarray, root_gt: np.ndarray,
          obj_root: np.ndarray | None = None) -> float:
    """Relative root position error: how far the hand root sits from where it
    should, measured relative to the object root (which cancels when the
    object is static but keeps the definition honest)."""
    if obj_root is None:
        obj_root = np.zeros(3)
    rel_pred = np.asarray(root_pred, dtype=np.float64) - obj_root
    rel_gt = np.asarray(root_gt, dtype=np.float64) - obj_root
    return float(np.linalg.norm(rel_pred - rel_gt))


def contact_deviation(scm_gt: np.ndarray, points: np.ndarray,
                      centroids_pred: np.ndarray) -> float | None:
    """Mean distance from each ground-truth designated point to the generated
    grasp's touch centroid for the designated finger; None without pairs."""
    pairs = pairs_from_scm(scm_gt)
    if pairs.shape[0] == 0:
        return None
    return float(tgc_loss(pairs, points, centroids_pred) / pairs.shape[0])


def success_rate(binary_pred: np.ndarray, binary_gt: np.ndarray,
                 variant: str = "recall") -> float | None:
    """Overlap of contact regions (entries equal to 0 mark contact).

    recall: share of the ground-truth contact set the generated grasp covers;
    precision: share of the generated contact set that lies in the ground
    truth.  None when the reference set of the chosen variant is empty.
    """
    if variant not in SR_VARIANTS:
        raise ValueError(f"variant must be one of {SR_VARIANTS}")
    a = np.asarray(binary_pred) == 0
    b = np.asarray(binary_gt) == 0
    if a.shape != b.shape:
        raise ValueError(f"binary maps must share shape, got {a.shape} vs {b.shape}")
    denom = b if variant == "recall" else a
    if not denom.any():
        return None
    return float((a & b).sum() / denom.sum())


def _scalar_condition(record: dict, kind: str) -> np.ndarray | None:
    if kind == "binary":
        return 1.0 - np.asarray(record["binary"], dtype=np.float64)
    if kind == "gaussian":
        return np.asarray(record["gaussian"], dtype=np.float64)
    return None


def evaluate_record(model, asset, record: dict, seed: int,
                    sr_variant: str = "recall") -> dict:
    """Generate one grasp conditioned the way the model was trained and score
    it against the record's ground truth."""
    sample = generation.generate(model, asset, record["points"], record["scm"],
                                 seed, scalar_map=_scalar_condition(record,
                                                                    model.config.condition))
    cloud = ObjectCloud(points=record["points"])
    verts_gt, joints_gt = asset.fk(record["params"][:61])
    binary_pred = binarize(compute_contact_map(cloud, sample.verts))
    return {
        "object_id": record.get("object_id", ""),
        "family": record.get("family", ""),
        "seed": int(seed),
        "mpjpe": mpjpe(sample.joints, joints_gt),
        "mrrpe": mrrpe(sample.joints[0], joints_gt[0], cloud.centroid),
        "cdev": contact_deviation(record["scm"], record["points"],
                                  asset.finger_centroids(sample.verts)),
        "sr": success_rate(binary_pred, record["binary"], sr_variant),
    }


def _mean_defined(rows: list[dict], key: str) -> float | None:
    vals = [r[key] for r in rows if r[key] is not None]
    return float(np.mean(vals)) if vals else None


def evaluate_dataset(model, asset, records: list[dict], *, seed: int = 0,
                     sr_variant: str = "recall") -> dict:
    """Per-record metrics plus means over the rows where each is defined."""
    if sr_variant not in SR_VARIANTS:
        raise ValueError(f"sr_variant must be one of {SR_VARIANTS}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                       spawn_key=(909,)))
    seeds = rng.integers(2 ** 31, size=len(records))
    rows = [evaluate_record(model, asset, rec, int(s), sr_variant)
            for rec, s in zip(records, seeds)]
    summary = {key: _mean_defined(rows, key) for key in ("mpjpe", "mrrpe", "cdev", "sr")}
    summary["n_records"] = len(rows)
    summary["n_cdev_undefined"] = sum(r["cdev"] is None for r in rows)
    summary["n_sr_undefined"] = sum(r["sr"] is None for r in rows)
    return {"sr_variant": sr_variant, "seed": int(seed), "rows": rows,
            "summary": summary}


def _cell(value: float | None, scale: float) -> str:
    return "-" if value is None else f"{value * scale:.2f}"


def format_table(results: dict) -> str:
    """Aligned text table, millimeters and percent."""
    header = ("object", "MPJPE(mm)", "MRRPE(mm)", "CDev(mm)", "SR(%)")
    body = []
    for row in results["rows"]:
        body.append((row["object_id"] or "?",
                     _cell(row["mpjpe"], 1000.0), _cell(row["mrrpe"], 1000.0),
                     _cell(row["cdev"], 1000.0), _cell(row["sr"], 100.0)))
    s = results["summary"]
    body.append(("mean", _cell(s["mpjpe"], 1000.0), _cell(s["mrrpe"], 1000.0),
                 _cell(s["cdev"], 1000.0), _cell(s["sr"], 100.0)))
    widths = [max(len(header[c]), *(len(r[c]) for r in body)) for c in range(5)]
    lines = [" ".join(h.ljust(widths[0]) if c == 0 else h.rjust(widths[c])
                      for c, h in enumerate(header))]
    for r in body:
        lines.append(" ".join(r[0].ljust(widths[0]) if c == 0 else r[c].rjust(widths[c])
                              for c in range(5)))
    return "\n".join(lines)


def results_to_json(results: dict) -> str:
    return json.dumps(results, indent=2, sort_keys=True)
