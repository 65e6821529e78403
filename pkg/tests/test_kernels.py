import subprocess
import sys

import numpy as np

from semgrasp import kernels


def _clouds(rng, n, m=778):
    return rng.normal(size=(n, 3)) * 0.05, rng.normal(size=(m, 3)) * 0.05


def test_min_dist_matches_bruteforce(rng):
    q, r = _clouds(rng, 200, 150)
    cap = 0.02
    brute = np.minimum(
        np.sqrt(((q[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)).min(axis=1), cap)
    for fn in (kernels.min_dist_capped_np, kernels.min_dist_capped_nb):
        out = fn(q, r, cap)
        assert np.allclose(out, brute, atol=1e-12)


def test_min_dist_backends_agree_across_grid_threshold(rng):
    for n in (512, kernels.GRID_THRESHOLD, kernels.GRID_THRESHOLD + 1, 20000):
        q, r = _clouds(rng, n)
        d_nb = kernels.min_dist_capped_nb(q, r, 0.01)
        d_np = kernels.min_dist_capped_np(q, r, 0.01)
        assert np.array_equal(d_nb, d_np), f"mismatch at n={n}"


def test_min_dist_cap_saturates(rng):
    q = np.array([[10.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    r = np.zeros((5, 3))
    for fn in (kernels.min_dist_capped_np, kernels.min_dist_capped_nb):
        out = fn(q, r, 0.25)
        assert out[0] == 0.25
        assert out[1] == 0.0


def test_label_min_dist_matches_bruteforce(rng):
    q, r = _clouds(rng, 300, 200)
    labels = rng.integers(0, 6, size=200)
    cap = 0.01
    expected = np.full((300, 5), cap)
    for lab in range(5):
        sel = r[labels == lab]
        if sel.shape[0]:
            d = np.sqrt(((q[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
            expected[:, lab] = np.minimum(d, cap)
    for fn in (kernels.label_min_dist_np, kernels.label_min_dist_nb):
        out = fn(q, r, labels, 5, cap)
        assert np.allclose(out, expected, atol=1e-12)


def test_label_min_dist_backends_agree_large(rng):
    q, r = _clouds(rng, 10000)
    labels = rng.integers(0, 6, size=778)
    d_nb = kernels.label_min_dist_nb(q, r, labels, 5, 0.003)
    d_np = kernels.label_min_dist_np(q, r, labels, 5, 0.003)
    assert np.array_equal(d_nb, d_np)


def test_label_min_dist_empty_label(rng):
    q, r = _clouds(rng, 50, 40)
    labels = np.zeros(40, dtype=np.int64)  # only label 0 populated
    for fn in (kernels.label_min_dist_np, kernels.label_min_dist_nb):
        out = fn(q, r, labels, 5, 0.007)
        assert np.all(out[:, 1:] == 0.007)


def test_gaussian_smooth_matches_direct(rng):
    pts = rng.normal(size=(120, 3)) * 0.04
    w = rng.uniform(size=120)
    sigma = 0.01
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    expected = np.exp(-0.5 * d2 / sigma**2) @ w
    out_np = kernels.gaussian_smooth_np(pts, w, sigma)
    out_nb = kernels.gaussian_smooth_nb(pts, w, sigma)
    assert np.allclose(out_np, expected, rtol=1e-12)
    assert np.allclose(out_nb, expected, rtol=1e-12)


def test_backend_dispatch_env_flag():
    code = "import semgrasp.kernels as k; print(k.backend_name())"
    for flag, want in (("0", "numpy"), ("1", "numba")):
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True, text=True, check=True,
            env={"PATH": "/usr/bin:/bin", "SEMGRASP_NUMBA": flag},
        )
        assert out.stdout.strip() == want
