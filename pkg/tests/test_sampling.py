import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from meshpix.core import GrayImage
from meshpix.sampling import (CANNY, HALFTONE, UNIFORM, SamplingConfig, build_samples,
                              canny_edges, canny_mask, floyd_steinberg, halftone_points,
                              pca_thin, uniform_points)


def step(size=32):
    a = np.zeros((size, size))
    a[:, size // 2:] = 255
    return GrayImage(a)


def disk(size=64, radius=20):
    y, x = np.mgrid[0:size, 0:size]
    return GrayImage(255.0 * ((x - 32) ** 2 + (y - 32) ** 2 <= radius ** 2))


def blobs(size=96, seed=0):
    """Smooth random image with a few hard edges."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    a = 120 + 60 * np.sin(6 * x + 2 * rng.random()) * np.cos(5 * y)
    a[(x - 0.3) ** 2 + (y - 0.6) ** 2 < 0.04] = 230
    a[(x > 0.6) & (y < 0.4)] = 20
    return GrayImage(a)


def test_constant_image_has_no_edges():
    assert canny_edges(GrayImage(np.full((20, 20), 9.0))) == []


def test_step_gives_one_vertical_chain():
    chains = canny_edges(step())
    assert len(chains) == 1
    chain = chains[0]
    assert len(chain) >= 28
    assert set(chain[:, 0].tolist()) <= {15, 16}


def test_disk_gives_closed_chain_on_the_circle():
    chains = canny_edges(disk())
    assert len(chains) == 1
    chain = chains[0]
    assert np.array_equal(chain[0], chain[-1])
    r = np.hypot(chain[:, 0] - 32, chain[:, 1] - 32)
    assert np.abs(r - 20).max() <= 1.5


def test_chains_are_8_connected_and_cover_the_mask():
    img = blobs()
    mask = canny_mask(img, 0.1, 0.25, 1.4)
    chains = canny_edges(img, min_length=1)
    seen = set()
    for c in chains:
        steps = np.abs(np.diff(c, axis=0))
        assert steps.max() <= 1 and np.all(steps.sum(axis=1) > 0)
        seen |= {tuple(p) for p in c.tolist()}
    marked = {(int(x), int(y)) for y, x in zip(*np.nonzero(mask))}
    assert seen == marked


@pytest.mark.parametrize("low, high, sigma", [(0.3, 0.2, 1.0), (0.0, 0.2, 1.0), (0.1, 0.2, 0.0)])
def test_canny_rejects_bad_parameters(low, high, sigma):
    with pytest.raises(ValueError):
        canny_edges(step(), low, high, sigma)


def test_pca_thin_straight_chain():
    chain = np.column_stack([np.arange(100), np.full(100, 7)])
    pts, chains = pca_thin([chain], window=11, dense_spacing=3, sparse_spacing=10)
    assert len(chains) == 1
    assert 10 <= len(pts) <= 12
    xs = np.sort(pts[:, 0])
    assert xs[0] == 0 and xs[-1] == 99
    gaps = np.diff(xs)
    assert gaps.min() >= 5 and gaps.max() <= 10
    assert chains[0].tolist() == sorted(chains[0].tolist())


def test_pca_thin_keeps_more_points_at_a_corner():
    arm = np.arange(60)
    chain = np.vstack([np.column_stack([arm, np.zeros(60)]),
                       np.column_stack([np.full(59, 59), arm[1:]])])
    pts, _ = pca_thin([chain], window=11, dense_spacing=2, sparse_spacing=10)
    near = np.hypot(pts[:, 0] - 59, pts[:, 1]) <= 6
    near_density = near.sum() / 12
    far = ~near
    far_density = far.sum() / (2 * 59 - 12)
    assert near_density >= far_density


def test_pca_thin_empty_and_shared_points():
    assert pca_thin([])[0].shape == (0, 2)
    a = np.column_stack([np.arange(10), np.zeros(10)])
    b = np.column_stack([np.full(10, 9), np.arange(10)])  # starts where a ends
    pts, chains = pca_thin([a, b], sparse_spacing=4, dense_spacing=2)
    assert chains[0][-1] == chains[1][0]
    assert len(np.unique(pts, axis=0)) == len(pts)


def test_halftone_constant_image_is_empty():
    assert len(halftone_points(GrayImage(np.full((30, 30), 5.0)), 0.05)) == 0


def test_halftone_concentrates_at_the_step():
    pts = halftone_points(step(64), 0.03)
    assert len(pts) > 0
    near = np.abs(pts[:, 0] - 31.5) <= 3
    assert near.mean() >= 0.8


def test_halftone_budget():
    img = blobs(256, seed=3)
    pts = halftone_points(img, 0.02)
    assert abs(len(pts) - 1311) <= 197
    assert np.array_equal(pts, halftone_points(img, 0.02))


def test_floyd_steinberg_preserves_mass():
    rng = np.random.default_rng(0)
    v = rng.random((40, 50)) * 0.3
    out = floyd_steinberg(v)
    assert abs(out.sum() - v.sum()) <= 0.05 * v.sum()
    assert np.array_equal(floyd_steinberg(np.zeros((4, 4))), np.zeros((4, 4), bool))
    assert floyd_steinberg(np.ones((4, 4))).all()


def test_uniform_grid_on_empty_image():
    pts = uniform_points(GrayImage(np.zeros((100, 100))), None, 25)
    assert len(pts) == 25
    for c in [(0, 0), (99, 0), (0, 99), (99, 99)]:
        assert c in set(map(tuple, pts.tolist()))


def test_uniform_grid_fully_covered():
    img = GrayImage(np.zeros((100, 100)))
    grid = uniform_points(img, None, 25)
    assert len(uniform_points(img, grid, 25)) == 0
    inner = grid[~np.isin(grid, [0, 99]).any(axis=1) | (grid.min(axis=1) > 0) & (grid.max(axis=1) < 99)]
    no_corners = np.array([p for p in grid.tolist() if p[0] not in (0, 99) or p[1] not in (0, 99)])
    assert len(uniform_points(img, no_corners, 25)) == 4
    assert len(inner) > 0


def test_uniform_with_center_point_matches_brute_force():
    img = GrayImage(np.zeros((100, 100)))
    grid = uniform_points(img, None, 25)
    center = np.array([[50.0, 50.0]])
    got = uniform_points(img, center, 25)
    corners = {(0, 0), (99, 0), (0, 99), (99, 99)}
    expected = [p for p in grid.tolist()
                if math.dist(p, (50, 50)) >= 25 or tuple(p) in corners]
    assert sorted(map(tuple, got.tolist())) == sorted(map(tuple, expected))


def test_uniform_is_order_independent():
    img = GrayImage(np.zeros((80, 90)))
    rng = np.random.default_rng(1)
    existing = rng.random((30, 2)) * [89, 79]
    a = uniform_points(img, existing, 10)
    b = uniform_points(img, existing[::-1], 10)
    assert np.array_equal(a, b)


def check_invariants(samples, img, min_sep):
    pts = samples.points
    assert len(pts) >= 4
    if len(pts) > 1:
        assert pdist(pts).min() >= min_sep
    assert np.all(pts >= 0) and np.all(pts[:, 0] <= img.width - 1) and np.all(pts[:, 1] <= img.height - 1)
    for chain in samples.edge_chains:
        assert np.all(samples.tags[chain] == CANNY)
    for c in [(0, 0), (img.width - 1, 0), (0, img.height - 1), (img.width - 1, img.height - 1)]:
        assert c in set(map(tuple, pts.tolist()))


def test_build_samples_constant_image_is_grid_and_corners():
    img = GrayImage(np.full((64, 64), 100.0))
    cfg = SamplingConfig(target_ratio=0, uniform_spacing=16)
    s = build_samples(img, cfg)
    check_invariants(s, img, cfg.min_separation)
    assert s.count(CANNY) == 0 and s.count(HALFTONE) == 0
    grid = uniform_points(img, None, 16)
    assert sorted(map(tuple, s.points.tolist())) == sorted(map(tuple, grid.tolist()))


def test_build_samples_step_regions():
    img = step(64)
    s = build_samples(img, SamplingConfig(target_ratio=0, halftone_fraction=0.02))
    check_invariants(s, img, 1.5)
    near = np.abs(s.points[:, 0] - 31.5) <= 4
    assert s.count(CANNY) > 0
    assert np.all(near[s.tags == CANNY])
    assert near[s.tags == HALFTONE].mean() >= 0.8
    assert not near[s.tags == UNIFORM].any() or near[s.tags == UNIFORM].mean() < 0.2


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_build_samples_invariants_and_canny_points_on_mask(seed):
    img = blobs(96, seed)
    cfg = SamplingConfig(target_ratio=0.08)
    s = build_samples(img, cfg)
    check_invariants(s, img, cfg.min_separation)
    mask = canny_mask(img, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
    for x, y in s.points[s.tags == CANNY].astype(int).tolist():
        assert mask[y, x]
    assert abs(len(s) / img.data.size - 0.08) <= 0.01


def test_build_samples_is_deterministic():
    img = blobs(64, 5)
    a, b = build_samples(img), build_samples(img)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.tags, b.tags)


@pytest.mark.parametrize("field, value", [
    ("canny_low", 0.5), ("pca_window", 4), ("pca_dense_spacing", 20.0),
    ("halftone_fraction", 1.5), ("uniform_spacing", 0.0), ("min_separation", -1.0),
])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        SamplingConfig(**{field: value}).validate()
