import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgrasp import contact
from semgrasp.contact import (
    ContactValidationError,
    ObjectCloud,
    binarize,
    compute_contact_map,
    fingertouch_analysis,
    gaussian_condition_map,
    scm_from_clicks,
    scm_from_json_obj,
    scm_to_json_obj,
)


def _cloud(points, **kw):
    return ObjectCloud(points=np.asarray(points, dtype=float), **kw)


# -- compute_contact_map ----------------------------------------------------

def test_contact_map_saturates_when_hand_far(rng):
    cloud = _cloud(rng.normal(size=(40, 3)) * 0.01)
    hand = rng.normal(size=(30, 3)) * 0.01 + 5.0
    assert np.all(compute_contact_map(cloud, hand) == 1.0)


def test_contact_map_zero_at_coincident_point(rng):
    pts = rng.normal(size=(10, 3)) * 0.02
    hand = rng.normal(size=(7, 3)) * 0.02
    hand[3] = pts[4]
    cmap = compute_contact_map(_cloud(pts), hand)
    assert cmap[4] == 0.0


def test_contact_map_matches_bruteforce_scan(rng):
    pts = rng.normal(size=(8, 3)) * 0.02
    hand = rng.normal(size=(5, 3)) * 0.02
    cmap = compute_contact_map(_cloud(pts), hand, d_max=0.01)
    brute = np.sqrt(((pts[:, None, :] - hand[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    expected = np.clip(brute / 0.01, 0.0, 1.0)
    assert np.allclose(cmap, expected, atol=1e-9)


def test_contact_map_monotone_under_retreat(rng):
    pts = rng.normal(size=(64, 3)) * 0.03
    hand = rng.normal(size=(50, 3)) * 0.03
    near = compute_contact_map(_cloud(pts), hand)
    far = compute_contact_map(_cloud(pts), hand + np.array([0.5, 0.0, 0.0]))
    assert np.all(far >= near)


def test_contact_map_validation():
    cloud = _cloud(np.zeros((3, 3)))
    with pytest.raises(ContactValidationError):
        compute_contact_map(cloud, np.zeros((3, 3)), d_max=0.0)
    with pytest.raises(ContactValidationError):
        compute_contact_map(cloud, np.zeros((0, 3)))
    with pytest.raises(ContactValidationError):
        ObjectCloud(points=np.array([[np.nan, 0, 0]]))
    with pytest.raises(ContactValidationError):
        ObjectCloud(points=np.zeros((0, 3)))


# -- fingertouch_analysis ---------------------------------------------------

def test_fingertouch_all_zero_when_far(rng):
    cloud = _cloud(rng.normal(size=(20, 3)) * 0.02)
    hand = rng.normal(size=(40, 3)) * 0.02 + 1.0
    labels = rng.integers(0, 6, size=40)
    assert not fingertouch_analysis(cloud, hand, labels).any()


def test_fingertouch_many_to_many():
    pts = np.array([[0.0, 0.0, 0.0]])
    hand = np.array([[0.001, 0.0, 0.0], [0.0, 0.001, 0.0], [1.0, 1.0, 1.0]])
    labels = np.array([0, 1, 2])  # thumb and index both within tau of the point
    scm = fingertouch_analysis(_cloud(pts), hand, labels, tau_contact=0.003)
    assert scm[0, 0] == 1 and scm[0, 1] == 1
    assert scm[0, 2] == 0 and scm[0, 3] == 0 and scm[0, 4] == 0


def test_fingertouch_matches_bruteforce(rng):
    for _ in range(20):
        n = int(rng.integers(4, 64))
        m = int(rng.integers(8, 128))
        pts = rng.normal(size=(n, 3)) * 0.01
        hand = rng.normal(size=(m, 3)) * 0.01
        labels = rng.integers(0, 6, size=m)
        tau = 0.004
        scm = fingertouch_analysis(_cloud(pts), hand, labels, tau_contact=tau)
        expected = np.zeros((n, 5), dtype=np.uint8)
        for f in range(5):
            sel = hand[labels == f]
            if sel.shape[0]:
                d = np.sqrt(((pts[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
                expected[:, f] = d < tau
        assert np.array_equal(scm, expected)


def test_fingertouch_requires_labels(rng):
    cloud = _cloud(rng.normal(size=(5, 3)))
    with pytest.raises(ContactValidationError):
        fingertouch_analysis(cloud, np.zeros((4, 3)), np.zeros(3, dtype=int))


def test_scm_implies_contact_map_below_threshold(asset, rng):
    # consistency between the two representations on a posed hand
    p = rng.normal(scale=0.2, size=61)
    verts, _ = asset.fk(p)
    pts = verts[rng.choice(778, size=60, replace=False)] + rng.normal(scale=0.002, size=(60, 3))
    cloud = _cloud(pts)
    scm = fingertouch_analysis(cloud, verts, asset.labels)
    cmap = compute_contact_map(cloud, verts)
    touching = scm.any(axis=1)
    assert touching.any(), "fixture should produce contacts"
    assert np.all(cmap[touching] < contact.TAU_CONTACT / contact.D_MAX)


# -- scm_from_clicks ---------------------------------------------------------

def test_clicks_empty_gives_zero_scm():
    cloud = _cloud(np.zeros((7, 3)))
    assert not scm_from_clicks(cloud, []).any()


def test_click_singleton_ball():
    pts = np.stack([np.arange(5), np.zeros(5), np.zeros(5)], axis=1) * 0.1
    scm = scm_from_clicks(_cloud(pts), [(2, 3, 0.01)])
    assert scm.sum() == 1
    assert scm[2, 3] == 1


def test_clicks_union_matches_radius_scan(rng):
    pts = rng.normal(size=(16, 3)) * 0.02
    cloud = _cloud(pts)
    clicks = [(3, 1, 0.015), (9, 1, 0.015)]
    scm = scm_from_clicks(cloud, clicks)
    expected = np.zeros((16, 5), dtype=np.uint8)
    for idx, f, r in clicks:
        d = np.linalg.norm(pts - pts[idx], axis=1)
        expected[d <= r, f] = 1
    assert np.array_equal(scm, expected)


def test_clicks_validation():
    cloud = _cloud(np.zeros((4, 3)))
    with pytest.raises(ContactValidationError):
        scm_from_clicks(cloud, [(4, 0, 0.01)])
    with pytest.raises(ContactValidationError):
        scm_from_clicks(cloud, [(0, 5, 0.01)])
    with pytest.raises(ContactValidationError):
        scm_from_clicks(cloud, [(0, 0, 0.0)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 4)), max_size=6),
       st.randoms(use_true_random=False))
def test_clicks_idempotent_and_order_independent(clicks, pyrandom):
    pts = np.random.default_rng(7).normal(size=(16, 3)) * 0.03
    cloud = _cloud(pts)
    base = scm_from_clicks(cloud, clicks)
    doubled = scm_from_clicks(cloud, clicks + clicks)
    shuffled = list(clicks)
    pyrandom.shuffle(shuffled)
    assert np.array_equal(base, doubled)
    assert np.array_equal(base, scm_from_clicks(cloud, shuffled))


# -- binarize ----------------------------------------------------------------

def test_binarize_examples():
    assert np.all(binarize(np.ones(5), 0.5) == 1)
    assert np.all(binarize(np.zeros(5), 0.5) == 0)
    assert np.array_equal(binarize(np.array([0.1, 0.49, 0.5, 0.9]), 0.5),
                          np.array([0, 0, 1, 1], dtype=np.uint8))
    with pytest.raises(ContactValidationError):
        binarize(np.zeros(3), 0.0)


def test_binarized_touching_configuration_has_contact(asset, rng):
    p = rng.normal(scale=0.1, size=61)
    verts, _ = asset.fk(p)
    pts = verts[:32] + rng.normal(scale=0.0005, size=(32, 3))
    cmap = compute_contact_map(_cloud(pts), verts)
    assert (binarize(cmap) == 0).any()


# -- gaussian_condition_map ---------------------------------------------------

def test_gaussian_map_zero_indicator():
    cloud = _cloud(np.random.default_rng(3).normal(size=(9, 3)))
    out = gaussian_condition_map(np.ones(9, dtype=np.uint8), 0.01, cloud)
    assert np.all(out == 0.0)


def test_gaussian_map_line_oracle():
    h = 0.01
    pts = np.stack([np.arange(5) * h, np.zeros(5), np.zeros(5)], axis=1)
    binary = np.array([1, 1, 0, 1, 1], dtype=np.uint8)  # contact at the center
    out = gaussian_condition_map(binary, h, _cloud(pts))
    d = np.abs(np.arange(5) - 2) * h
    expected = np.exp(-0.5 * (d / h) ** 2)
    expected /= expected.max()
    assert np.allclose(out, expected, atol=1e-12)
    assert out[2] == 1.0
    assert np.all(np.diff(out[:3]) > 0) and np.all(np.diff(out[2:]) < 0)


# -- sparse interchange --------------------------------------------------------

def test_scm_json_roundtrip(rng):
    scm = (rng.uniform(size=(40, 5)) < 0.1).astype(np.uint8)
    obj = scm_to_json_obj(scm, "obj-1")
    back, oid = scm_from_json_obj(obj)
    assert oid == "obj-1"
    assert np.array_equal(back, scm)
    assert obj["n_points"] == 40


def test_scm_json_validation():
    with pytest.raises(ContactValidationError):
        scm_from_json_obj({"n_points": 0, "contacts": []})
    with pytest.raises(ContactValidationError):
        scm_from_json_obj({"n_points": 4, "contacts": [{"point_index": 4, "finger": 0}]})
    with pytest.raises(ContactValidationError):
        scm_from_json_obj({"n_points": 4, "contacts": [{"point_index": 0, "finger": 9}]})
    with pytest.raises(ContactValidationError):
        scm_from_json_obj({"contacts": []})
