import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshpix.rbf import (KERNELS, Kernel, RbfSystem, SingularSystemError, assemble, evaluate,
                         kernel_eval, lu_factor, lu_solve, metric, solve, solve_batch)
from meshpix.tensor import euclidean_dist2


@pytest.mark.parametrize("kind, c, r, expected", [
    ("mq", 0.5, 0.0, 0.5),
    ("imq", 1.8, 0.0, 1 / 1.8),
    ("tps", 1.0, 1.0, 0.0),
    ("tps", 1.0, math.e, math.e ** 2),
    ("gaussian", 0.5, 2.0, math.exp(-1)),
])
def test_kernel_values(kind, c, r, expected):
    assert float(kernel_eval(Kernel(kind, c), r * r)) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_tps_near_zero():
    r2 = np.concatenate([[0.0], np.logspace(-300, 0, 400)])
    v = kernel_eval(Kernel("tps"), r2)
    assert np.all(np.isfinite(v))
    assert v[0] == 0 and np.all(v[1:-1] <= 0)


@pytest.mark.parametrize("kind, c", [("mq", 0.0), ("imq", -1.0), ("gaussian", 0.0), ("cubic", 1.0)])
def test_bad_kernel_rejected(kind, c):
    with pytest.raises(ValueError):
        Kernel(kind, c)


def test_assemble_matches_pairwise_loop():
    rng = np.random.default_rng(0)
    pts = rng.random((7, 2)) * 10
    k = Kernel("mq", 0.5)
    A, f = assemble(pts, np.arange(7.0), k)
    for j in range(7):
        for i in range(7):
            d = (pts[j, 0] - pts[i, 0]) ** 2 + (pts[j, 1] - pts[i, 1]) ** 2
            assert A[j, i] == pytest.approx(math.sqrt(d + 0.25), rel=1e-14)
    assert np.array_equal(A, A.T)
    assert np.array_equal(f, np.arange(7.0))


def test_assemble_single_center():
    A, f = assemble([[3.0, 4.0]], [9.0], Kernel("imq", 2.0))
    assert A.tolist() == [[0.5]] and f.tolist() == [9.0]


def test_identity_metric_assembles_bitwise_equal():
    rng = np.random.default_rng(1)
    pts = rng.random((9, 2)) * 20
    k = Kernel("mq", 0.5)
    A_iso, _ = assemble(pts, np.zeros(9), k)
    A_id, _ = assemble(pts, np.zeros(9), k, metric((1.0, 0.0, 1.0)))
    assert np.array_equal(A_iso, A_id)


def test_solve_examples():
    w, reg = solve([[0.5]], [100.0])
    assert w.tolist() == [200.0] and not reg
    f = np.array([3.0, -1.0, 7.0])
    assert np.array_equal(solve(np.eye(3), f)[0], f)


def test_solve_random_spd_residual():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(6, 6))
    A = M @ M.T + 6 * np.eye(6)
    f = rng.normal(size=6)
    w, reg = solve(A, f)
    assert not reg
    assert np.abs(A @ w - f).max() < 1e-9 * np.abs(f).max()


def test_lu_matches_numpy_on_batches():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(50, 8, 8)) + 4 * np.eye(8)
    b = rng.normal(size=(50, 8))
    LU, perm, _ = lu_factor(A)
    x = lu_solve(LU, perm, b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b[..., None])[..., 0], rtol=1e-9, atol=1e-10)


def test_near_singular_system_is_regularized():
    A = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]])
    w, reg = solve(A, [1.0, 1.0])
    assert reg
    assert np.abs(A @ w - 1).max() < 1e-6


def test_zero_matrix_is_singular():
    with pytest.raises(SingularSystemError):
        solve(np.zeros((3, 3)), np.ones(3))
    w, reg, failed = solve_batch(np.zeros((2, 3, 3)), np.ones((2, 3)))
    assert failed.all() and not np.isnan(w).any()


def test_tps_zero_trace_regularization_uses_entries():
    # two coincident centres: TPS matrix is all zeros on the diagonal and singular
    A, f = assemble([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0]], [1.0, 1.0, 2.0], Kernel("tps"))
    _, reg, failed = solve_batch(A[None], f[None])
    assert reg[0] and not failed[0]


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        solve(np.ones((2, 3)), [1, 2])
    with pytest.raises(ValueError):
        solve([[np.nan]], [1.0])
    with pytest.raises(ValueError):
        assemble(np.zeros((2, 2)), [1.0], Kernel())


def random_spd(rng):
    M = rng.normal(size=(2, 2))
    S = M @ M.T + 0.2 * np.eye(2)
    return S[0, 0], S[0, 1], S[1, 1]


@pytest.mark.parametrize("kind", KERNELS)
def test_interpolation_property(kind):
    rng = np.random.default_rng(hash(kind) % 2**32)
    c = {"gaussian": 0.3, "mq": 0.5, "imq": 1.8, "tps": 1.0}[kind]
    for _ in range(20):
        n = int(rng.integers(1, 21))
        pts = rng.random((n, 2)) * 12
        vals = rng.random(n) * 255
        for dist2 in (euclidean_dist2, metric(random_spd(rng))):
            sys_ = RbfSystem.fit(pts, vals, Kernel(kind, c), dist2)
            tol = 1e-3 if sys_.regularized else 1e-6
            got = evaluate(sys_, pts)
            assert np.abs(got - vals).max() <= tol * max(np.abs(vals).max(), 1.0)


def test_single_center_evaluation():
    k = Kernel("mq", 0.5)
    s = RbfSystem.fit([[1.0, 1.0]], [100.0], k)
    assert s.weights.tolist() == [200.0]
    assert s((4.0, 5.0)) == pytest.approx(200 * math.sqrt(25.25))


@pytest.mark.xfail(strict=True, reason="without a polynomial term MQ sags between centres; "
                   "measured max error about 2.4 on this set")
def test_constant_data_near_reproduced_with_local_support():
    rng = np.random.default_rng(4)
    pts = rng.random((12, 2)) * 8
    s = RbfSystem.fit(pts, np.full(12, 50.0), Kernel("mq", 0.5))
    lo, hi = pts.min(0), pts.max(0)
    probes = lo + rng.random((500, 2)) * (hi - lo) * 0.5 + (hi - lo) * 0.25
    assert np.abs(s(probes) - 50).max() < 0.5


def test_identity_metric_evaluation_matches_euclidean():
    rng = np.random.default_rng(5)
    pts = rng.random((10, 2)) * 10
    vals = rng.random(10) * 255
    iso = RbfSystem.fit(pts, vals, Kernel("mq", 0.5))
    ident = RbfSystem.fit(pts, vals, Kernel("mq", 0.5), metric((1.0, 0.0, 1.0)))
    x = rng.random((100, 2)) * 10
    assert np.array_equal(iso(x), ident(x))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31 - 1))
def test_permutation_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2)) * 10
    vals = rng.random(n) * 255
    p = rng.permutation(n)
    a = RbfSystem.fit(pts, vals, Kernel("mq", 0.5))
    b = RbfSystem.fit(pts[p], vals[p], Kernel("mq", 0.5))
    x = rng.random((20, 2)) * 10
    if a.regularized or b.regularized:
        return
    np.testing.assert_allclose(a(x), b(x), rtol=1e-9, atol=1e-7)


def test_shape_parameter_continuity():
    rng = np.random.default_rng(6)
    pts = rng.random((8, 2)) * 6
    vals = rng.random(8) * 255
    x = rng.random((30, 2)) * 6
    base = RbfSystem.fit(pts, vals, Kernel("mq", 0.5))(x)
    prev = None
    for h in (1e-3, 1e-5, 1e-7):
        diff = np.abs(RbfSystem.fit(pts, vals, Kernel("mq", 0.5 + h))(x) - base).max()
        if prev is not None:
            assert diff < prev
        prev = diff
    assert prev < 1e-3
