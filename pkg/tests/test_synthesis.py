import numpy as np
import pytest

from semgrasp import generation as G
from semgrasp import synthesis as S
from semgrasp.contact import ObjectCloud, binarize, compute_contact_map, fingertouch_analysis
from semgrasp.kernels import _rodrigues_np


@pytest.mark.parametrize("family", S.FAMILIES)
def test_sampled_points_lie_on_the_surface(family):
    cloud = S.sample_object(family, 42, 300)
    pts = cloud.points
    assert pts.shape == (300, 3) and cloud.normals.shape == (300, 3)
    assert cloud.source_id == f"{family}-42"
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-12)
    if family == "sphere":
        r = np.linalg.norm(pts, axis=1)
        assert r.std() < 1e-12
    elif family == "box":
        h = np.abs(pts).max(axis=0)
        on_face = np.isclose(np.abs(pts), h, atol=1e-12).any(axis=1)
        inside = (np.abs(pts) <= h + 1e-12).all(axis=1)
        assert on_face.all() and inside.all()
    elif family == "cylinder":
        rad = np.hypot(pts[:, 0], pts[:, 1])
        hh = np.abs(pts[:, 2]).max()
        r = rad.max()
        on_cap = np.isclose(np.abs(pts[:, 2]), hh, atol=1e-12) & (rad <= r + 1e-12)
        on_side = np.isclose(rad, r, atol=1e-9)
        assert (on_cap | on_side).all()
    else:   # capsule: every surface point is exactly r from the axis segment
        rad = np.hypot(pts[:, 0], pts[:, 1])
        r = rad.max()
        hh = (np.abs(pts[:, 2]) - np.sqrt(np.maximum(r * r - rad * rad, 0.0))).max()
        seg_dist = np.hypot(rad, np.maximum(np.abs(pts[:, 2]) - hh, 0.0))
        assert np.allclose(seg_dist, r, atol=1e-9)


def test_sample_object_is_seeded():
    a = S.sample_object("box", 7, 128)
    b = S.sample_object("box", 7, 128)
    c = S.sample_object("box", 8, 128)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    with pytest.raises(S.DatasetError, match="family"):
        S.sample_object("torus", 0)
    with pytest.raises(S.DatasetError):
        S.sample_object("box", 0, n_points=0)


def test_axis_angle_from_matrix_roundtrip(rng):
    for _ in range(50):
        w = rng.normal(size=3)
        w *= rng.uniform(1e-4, np.pi - 1e-3) / np.linalg.norm(w)
        rot = _rodrigues_np(w)
        back = _rodrigues_np(S.axis_angle_from_matrix(rot))
        assert np.abs(back - rot).max() < 1e-9
    # half-turns hit the trace = -1 branch
    for axis in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1], [1, -2, 0.5]):
        w = np.pi * np.asarray(axis, dtype=np.float64)
        w = w / np.linalg.norm(w) * np.pi
        rot = _rodrigues_np(w)
        back = _rodrigues_np(S.axis_angle_from_matrix(rot))
        assert np.abs(back - rot).max() < 1e-6
    assert np.allclose(S.axis_angle_from_matrix(np.eye(3)), 0.0)


def test_frame_for_is_orthonormal_and_faces_object(rng):
    for _ in range(20):
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        roll = rng.uniform(0, 2 * np.pi)
        rot = S._frame_for(a, roll)
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(rot), 1.0)
        assert np.allclose(rot @ [0.0, 0.0, 1.0], -a, atol=1e-12)


@pytest.mark.parametrize("family,seed", [("sphere", 3), ("box", 11), ("cylinder", 5),
                                         ("capsule", 2)])
def test_oracle_satisfies_its_gates(asset, family, seed):
    cloud = S.sample_object(family, seed, 256)
    params, info = S.oracle_grasp(asset, cloud, seed)
    assert params.shape == (61,)
    assert info["n_contact_fingers"] >= S.GATE_MIN_FINGERS
    assert info["mean_pair_dist"] < S.GATE_TGC_PER_PAIR
    # the gates are measured on the actual posed hand
    verts, _ = asset.fk(params)
    scm = fingertouch_analysis(cloud, verts, asset.labels)
    assert int((scm.sum(axis=0) > 0).sum()) == info["n_contact_fingers"]
    again, _ = S.oracle_grasp(asset, cloud, seed)
    assert np.array_equal(params, again)


def test_oracle_raises_when_object_is_out_of_reach(asset):
    d = np.random.default_rng(0).normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    giant = ObjectCloud(points=d * 0.25, source_id="giant")
    with pytest.raises(S.OracleError, match="giant"):
        S.oracle_grasp(asset, giant, 0)


def test_grasp_record_fields_are_consistent(asset):
    cloud = S.sample_object("cylinder", 21, 200)
    rec = S.make_grasp_record(asset, cloud, 21)
    verts, _ = asset.fk(rec["params"])
    assert np.array_equal(rec["cmap"], compute_contact_map(cloud, verts))
    assert np.array_equal(rec["binary"], binarize(rec["cmap"]))
    assert np.array_equal(rec["scm"], fingertouch_analysis(cloud, verts, asset.labels))
    assert rec["family"] == "cylinder" and rec["object_id"] == "cylinder-21"
    assert rec["gaussian"].min() >= 0.0 and rec["gaussian"].max() <= 1.0
    # records drop straight into model training
    cfg = G.DenoiserConfig(condition="gaussian", frame="dual", t_total=10)
    model = G.GenerationModel(cfg, hand_sha=asset.sha256)
    model.set_normalization(rec["params"][None, :])
    prep = G.prepare_record(model, asset, rec)
    assert prep.ppf.shape == (200, 32) and prep.cond.shape == (200, 6)
    assert prep.pairs.shape[0] == int(rec["scm"].sum())


@pytest.fixture(scope="module")
def tiny_dataset(asset):
    return S.build_dataset(asset, n_train=3, n_eval_in=2, n_eval_held=2,
                           seed=12, n_points=128)


def test_build_dataset_splits_and_manifest(tiny_dataset):
    splits, manifest = tiny_dataset["splits"], tiny_dataset["manifest"]
    assert [len(splits[k]) for k in S.SPLIT_NAMES] == [3, 2, 2]
    assert all(r["family"] in S.TRAIN_FAMILIES for r in splits["train"])
    assert all(r["family"] == S.HELD_OUT_FAMILY for r in splits["eval_held"])
    assert manifest["counts"] == {"train": 3, "eval_in": 2, "eval_held": 2}
    assert manifest["held_out_family"] == S.HELD_OUT_FAMILY
    assert manifest["thresholds"]["tau_contact"] == 0.003
    assert manifest["n_points"] == 128


def test_dataset_roundtrip_is_lossless(tiny_dataset, tmp_path):
    manifest = S.save_dataset(tmp_path / "ds", tiny_dataset)
    assert set(manifest["checksums"]) == set(S.SPLIT_NAMES)
    loaded = S.load_dataset(tmp_path / "ds")
    for name in S.SPLIT_NAMES:
        for rec, back in zip(tiny_dataset["splits"][name], loaded["splits"][name]):
            for key in ("points", "normals", "params", "scm", "cmap", "binary", "gaussian"):
                assert np.array_equal(rec[key], back[key]), (name, key)
            assert back["object_id"] == rec["object_id"]


def test_dataset_load_rejects_corruption(tiny_dataset, tmp_path):
    S.save_dataset(tmp_path / "ds", tiny_dataset)
    target = tmp_path / "ds" / "train.sgb"
    blob = bytearray(target.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    target.write_bytes(bytes(blob))
    with pytest.raises((S.DatasetError, ValueError)):
        S.load_dataset(tmp_path / "ds")
    with pytest.raises(S.DatasetError, match="manifest"):
        S.load_dataset(tmp_path / "nowhere")
