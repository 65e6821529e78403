import numpy as np
import pytest

from semgrasp import dataio
from semgrasp.contact import ContactValidationError, ObjectCloud


def _cloud(rng, n=50, with_normals=False):
    normals = None
    if with_normals:
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return ObjectCloud(points=rng.normal(size=(n, 3)) * 0.05,
                       normals=normals, source_id="fixture")


def test_text_roundtrip_is_lossless(tmp_path, rng):
    cloud = _cloud(rng)
    path = tmp_path / "c.pts"
    dataio.save_cloud_text(path, cloud)
    back = dataio.load_cloud_text(path)
    assert back.points.dtype == np.float64
    assert np.array_equal(back.points, cloud.points)
    assert back.source_id == "fixture"


def test_text_comments_and_blank_lines(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("# a comment\n\n0.5 -1.25 3.0\n# another\n1e-3 2e-3 3e-3\n")
    cloud = dataio.load_cloud_text(path)
    assert cloud.points.shape == (2, 3)
    assert cloud.points[0, 1] == -1.25


def test_text_malformed_line(tmp_path):
    path = tmp_path / "c.pts"
    path.write_text("0 0 0\n1 2\n")
    with pytest.raises(ContactValidationError):
        dataio.load_cloud_text(path)
    path.write_text("0 0 zebra\n")
    with pytest.raises(ContactValidationError):
        dataio.load_cloud_text(path)
    path.write_text("# only comments\n")
    with pytest.raises(ContactValidationError):
        dataio.load_cloud_text(path)


def test_binary_roundtrip_with_normals(tmp_path, rng):
    cloud = _cloud(rng, with_normals=True)
    path = tmp_path / "c.sgb"
    dataio.save_cloud_binary(path, cloud)
    back = dataio.load_cloud_binary(path)
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.normals, cloud.normals)
    assert back.source_id == "fixture"


def test_binary_rejects_wrong_container(tmp_path, asset):
    path = tmp_path / "hand.sgb"
    asset.save(path)
    with pytest.raises(ContactValidationError):
        dataio.load_cloud_binary(path)


def test_suffix_dispatch(tmp_path, rng):
    cloud = _cloud(rng, n=12)
    t = tmp_path / "a.pts"
    b = tmp_path / "a.sgb"
    dataio.save_cloud(t, cloud)
    dataio.save_cloud(b, cloud)
    assert t.read_text().splitlines()[1].count(" ") == 2
    assert np.array_equal(dataio.load_cloud(t).points, cloud.points)
    assert np.array_equal(dataio.load_cloud(b).points, cloud.points)
    with pytest.raises(FileNotFoundError):
        dataio.load_cloud(tmp_path / "missing.pts")


def test_scm_file_roundtrip(tmp_path, rng):
    scm = (rng.uniform(size=(30, 5)) < 0.15).astype(np.uint8)
    path = tmp_path / "s.json"
    dataio.save_scm(path, scm, object_id="cube")
    back, oid = dataio.load_scm(path)
    assert oid == "cube"
    assert np.array_equal(back, scm)


def test_scm_file_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ContactValidationError):
        dataio.load_scm(path)
