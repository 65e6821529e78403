"""File formats for object clouds and sparse SCM annotations.

Clouds travel in two interchangeable formats:

* text (``.pts``/``.xyz``/``.txt``): one ``x y z`` triple per line, floats
  in shortest round-trip decimal form, ``#`` starts a comment line;
* binary (``.sgb``): the deterministic array container, arrays ``points``
  (and optionally ``normals``), meta ``{"format": "semgrasp-cloud", ...}``.

Both round-trip float64 coordinates exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import container
from .contact import ContactValidationError, ObjectCloud, scm_from_json_obj, scm_to_json_obj

CLOUD_TEXT_SUFFIXES = (".pts", ".xyz", ".txt")
CLOUD_FORMAT_VERSION = 1


def save_cloud_text(path, cloud: ObjectCloud) -> None:
    lines = []
    if cloud.source_id:
        lines.append(f"# source_id: {cloud.source_id}")
    for x, y, z in cloud.points:
        lines.append(f"{float(x)!r} {float(y)!r} {float(z)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cloud_text(path) -> ObjectCloud:
    source_id = Path(path).stem
    rows = []
    for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("source_id:"):
                source_id = line.split("source_id:", 1)[1].strip()
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ContactValidationError(f"{path}:{ln}: expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ContactValidationError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        raise ContactValidationError(f"{path}: no points")
    return ObjectCloud(points=np.array(rows), source_id=source_id)


def save_cloud_binary(path, cloud: ObjectCloud) -> str:
    arrays = {"points": cloud.points}
    if cloud.normals is not None:
        arrays["normals"] = cloud.normals
    meta = {"format": "semgrasp-cloud", "version": CLOUD_FORMAT_VERSION,
            "source_id": cloud.source_id}
    return container.save(path, arrays, meta)


def load_cloud_binary(path) -> ObjectCloud:
    arrays, meta, _ = container.load(path)
    if meta.get("format") != "semgrasp-cloud":
        raise ContactValidationError(f"{path} is not a cloud container")
    return ObjectCloud(points=arrays["points"], normals=arrays.get("normals"),
                       source_id=meta.get("source_id", ""))


def save_cloud(path, cloud: ObjectCloud) -> None:
    if Path(path).suffix in CLOUD_TEXT_SUFFIXES:
        save_cloud_text(path, cloud)
    else:
        save_cloud_binary(path, cloud)


def load_cloud(path) -> ObjectCloud:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix in CLOUD_TEXT_SUFFIXES:
        return load_cloud_text(path)
    return load_cloud_binary(path)


def save_scm(path, scm: np.ndarray, object_id: str = "") -> None:
    obj = scm_to_json_obj(scm, object_id)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scm(path, n_fingers: int = 5):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ContactValidationError(f"{path}: invalid JSON: {exc}") from exc
    return scm_from_json_obj(obj, n_fingers)
