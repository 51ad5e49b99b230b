import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpcikit import metrics
from rpcikit.errors import InputError
from rpcikit.volume import Spacing

from conftest import make_labels, random_mask


def multisets_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.array_equal(np.sort(a), np.sort(b))


# ---------------------------------------------------------------------------
# Dice


def test_dice_identical_and_disjoint():
    a = np.zeros((4, 4, 4), dtype=bool)
    a[:2] = True
    assert metrics.dice(a, a) == 1.0
    b = np.zeros((4, 4, 4), dtype=bool)
    b[2:] = True
    assert metrics.dice(a, b) == 0.0


def test_dice_empty_conventions():
    e = np.zeros((3, 3, 3), dtype=bool)
    f = np.zeros((3, 3, 3), dtype=bool)
    f[0, 0, 0] = True
    assert metrics.dice(e, e) == 1.0
    assert metrics.dice(e, f) == 0.0
    assert metrics.dice(f, e) == 0.0


def test_dice_closed_form_shifted_cube():
    # 10^3 cube against itself shifted by 2 voxels: overlap 8*10*10,
    # 2*800/(1000+1000) = 0.8
    a = np.zeros((14, 12, 12), dtype=bool)
    b = np.zeros((14, 12, 12), dtype=bool)
    a[0:10, 1:11, 1:11] = True
    b[2:12, 1:11, 1:11] = True
    assert metrics.dice(a, b) == 0.8


def test_dice_matches_set_arithmetic(rng):
    for _ in range(20):
        dims = tuple(int(d) for d in rng.integers(2, 16, 3))
        a = rng.random(dims) < 0.4
        b = rng.random(dims) < 0.4
        expected_na = sum(1 for v in a.ravel() if v)
        expected_nb = sum(1 for v in b.ravel() if v)
        expected_inter = sum(1 for u, v in zip(a.ravel(), b.ravel()) if u and v)
        if expected_na + expected_nb == 0:
            expected = 1.0
        else:
            expected = 2.0 * expected_inter / (expected_na + expected_nb)
        assert metrics.dice(a, b) == expected


def test_dice_shape_mismatch():
    with pytest.raises(InputError, match="dims mismatch"):
        metrics.dice(np.zeros((2, 2, 2), dtype=bool), np.zeros((2, 2, 3), dtype=bool))


# ---------------------------------------------------------------------------
# boundary extraction


def test_boundary_of_solid_cube():
    m = np.zeros((7, 7, 7), dtype=bool)
    m[1:6, 1:6, 1:6] = True
    surf = metrics.boundary_mask(m)
    assert surf.sum() == 5**3 - 3**3
    assert not surf[3, 3, 3]
    assert surf[1, 3, 3]


def test_grid_edge_counts_as_background():
    m = np.ones((3, 3, 3), dtype=bool)
    surf = metrics.boundary_mask(m)
    assert surf.sum() == 26  # everything except the center voxel


def test_single_voxel_is_boundary():
    m = np.zeros((3, 3, 3), dtype=bool)
    m[1, 1, 1] = True
    assert metrics.boundary_voxels(m).tolist() == [[1, 1, 1]]


def test_boundary_is_6_connected_not_26():
    # diagonal-only background contact does not make a voxel boundary
    m = np.ones((3, 3, 3), dtype=bool)
    m[0, 0, 0] = False
    surf = metrics.boundary_mask(m)
    assert not surf[1, 1, 1]
    assert surf[1, 0, 0]


# ---------------------------------------------------------------------------
# analytic fixtures for surface distances


def test_single_voxels_3mm_apart():
    a = np.zeros((5, 5, 5), dtype=bool)
    b = np.zeros((5, 5, 5), dtype=bool)
    a[1, 2, 2] = True
    b[4, 2, 2] = True
    s = metrics.surface_distances(a, b, Spacing(1.0, 1.0, 1.0))
    assert metrics.dice(a, b) == 0.0
    assert metrics.hd95(s) == 3.0
    assert metrics.asd(s) == 3.0


def test_single_voxels_3mm_apart_via_spacing():
    # same 3 mm, produced by one 1.5 mm-spaced axis
    a = np.zeros((5, 3, 3), dtype=bool)
    b = np.zeros((5, 3, 3), dtype=bool)
    a[1, 1, 1] = True
    b[3, 1, 1] = True
    s = metrics.surface_distances(a, b, Spacing(1.5, 1.0, 1.0))
    assert metrics.hd95(s) == 3.0
    assert metrics.asd(s) == 3.0


def test_identical_masks_give_perfect_scores():
    rng = np.random.Generator(np.random.PCG64(3))
    m = random_mask(rng, (10, 10, 10), 0.3)
    s = metrics.surface_distances(m, m, Spacing(0.9, 1.1, 2.0))
    assert metrics.dice(m, m) == 1.0
    assert metrics.hd95(s) == 0.0
    assert metrics.asd(s) == 0.0


def test_hd95_percentile_interpolation():
    # pooled multiset {0 x19, 20}: rank 0.95*19 = 18.05 -> 0.05 of the way
    # from 0 to 20 = 1.0
    d = metrics.SurfaceDistanceSet(d_ab=np.zeros(10), d_ba=np.append(np.zeros(9), 20.0))
    assert metrics.hd95(d) == pytest.approx(1.0)
    assert metrics.asd(d) == 1.0


# ---------------------------------------------------------------------------
# oracle equivalence


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_surface_distances_match_brute_force(backend, rng):
    for _ in range(10):
        dims = tuple(int(d) for d in rng.integers(3, 24, 3))
        a = random_mask(rng, dims, float(rng.uniform(0.05, 0.4)))
        b = random_mask(rng, dims, float(rng.uniform(0.05, 0.4)))
        spacing = Spacing(*rng.uniform(0.3, 4.0, 3))
        fast = metrics.surface_distances(a, b, spacing, backend=backend)
        ref = metrics.brute_force_surface_distances(a, b, spacing)
        assert multisets_equal(fast.d_ab, ref.d_ab)
        assert multisets_equal(fast.d_ba, ref.d_ba)


def test_structured_masks_match_brute_force(rng):
    # spheres and slabs exercise long runs and exact ties under reflection
    x, y, z = np.mgrid[0:20, 0:18, 0:16]
    sphere = (x - 9.0) ** 2 + (y - 8.0) ** 2 + (z - 7.0) ** 2 <= 36.0
    slab = np.zeros((20, 18, 16), dtype=bool)
    slab[4:16, 2:16, 5:11] = True
    spacing = Spacing(1.0, 1.0, 1.0)  # isotropic: plenty of geometric ties
    fast = metrics.surface_distances(sphere, slab, spacing)
    ref = metrics.brute_force_surface_distances(sphere, slab, spacing)
    assert multisets_equal(fast.d_ab, ref.d_ab)
    assert multisets_equal(fast.d_ba, ref.d_ba)


def test_cropping_does_not_change_distances(rng):
    # distances computed on a padded grid equal those on the tight grid
    a = random_mask(rng, (8, 8, 8), 0.2)
    b = random_mask(rng, (8, 8, 8), 0.2)
    pad_a = np.zeros((20, 21, 22), dtype=bool)
    pad_b = np.zeros((20, 21, 22), dtype=bool)
    pad_a[5:13, 6:14, 7:15] = a
    pad_b[5:13, 6:14, 7:15] = b
    sp = Spacing(0.8, 1.2, 1.9)
    s1 = metrics.surface_distances(a, b, sp)
    s2 = metrics.surface_distances(pad_a, pad_b, sp)
    assert multisets_equal(s1.d_ab, s2.d_ab)
    assert multisets_equal(s1.d_ba, s2.d_ba)


def test_surface_distance_symmetry():
    rng = np.random.Generator(np.random.PCG64(77))
    a = random_mask(rng, (9, 9, 9), 0.25)
    b = random_mask(rng, (9, 9, 9), 0.25)
    sp = Spacing(1.1, 0.7, 2.2)
    s = metrics.surface_distances(a, b, sp)
    r = metrics.surface_distances(b, a, sp)
    assert np.array_equal(s.d_ab, r.d_ba)
    assert np.array_equal(s.d_ba, r.d_ab)


def test_empty_mask_distances_rejected():
    e = np.zeros((3, 3, 3), dtype=bool)
    f = e.copy()
    f[1, 1, 1] = True
    with pytest.raises(InputError, match="empty mask"):
        metrics.surface_distances(e, f, Spacing(1, 1, 1))
    with pytest.raises(InputError, match="empty mask"):
        metrics.surface_distances(f, e, Spacing(1, 1, 1))


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    pa=st.floats(0.05, 0.5),
    pb=st.floats(0.05, 0.5),
    dx=st.floats(0.25, 0.9),
    dy=st.floats(1.0, 1.9),
    dz=st.floats(2.0, 3.9),
)
def test_distance_properties(seed, pa, pb, dx, dy, dz):
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = tuple(int(d) for d in rng.integers(3, 14, 3))
    a = random_mask(rng, dims, pa)
    b = random_mask(rng, dims, pb)
    spacing = Spacing(dx, dy, dz)
    s = metrics.surface_distances(a, b, spacing)
    pooled = s.pooled()
    assert (pooled >= 0.0).all()
    h = metrics.hd95(s)
    m = metrics.asd(s)
    assert 0.0 <= m <= pooled.max()
    assert h <= pooled.max()
    # HD95 can only dip below ASD when the multiset is tiny or degenerate;
    # the diameter bound always holds
    diameter = np.sqrt(
        ((dims[0] - 1) * dx) ** 2 + ((dims[1] - 1) * dy) ** 2 + ((dims[2] - 1) * dz) ** 2
    )
    assert pooled.max() <= diameter + 1e-9
    # overlap implies zero minimum somewhere in each direction
    if (a & b).any():
        inter_boundary = metrics.boundary_mask(a) & metrics.boundary_mask(b)
        if inter_boundary.any():
            assert pooled.min() == 0.0


# ---------------------------------------------------------------------------
# per-region policy


def region_pair(dims, spec_a, spec_b):
    """Build two label volumes from {region: slices} specs."""
    a = np.zeros(dims, dtype=np.uint8)
    b = np.zeros(dims, dtype=np.uint8)
    for region, sl in spec_a.items():
        a[sl] = region + 1
    for region, sl in spec_b.items():
        b[sl] = region + 1
    return make_labels(a), make_labels(b)


def test_region_metrics_undefined_policy():
    gt, pred = region_pair(
        (10, 10, 10),
        {0: (slice(0, 3), slice(0, 3), slice(0, 3))},
        {1: (slice(5, 8), slice(5, 8), slice(5, 8))},
    )
    pm = metrics.evaluate_pair(gt, pred, patient="x")
    r0 = pm.regions[0]  # present only in gt
    assert r0.dice == 0.0
    assert r0.hd95_mm is None and r0.asd_mm is None
    r1 = pm.regions[1]  # present only in pred
    assert r1.dice == 0.0
    assert r1.hd95_mm is None and r1.asd_mm is None
    r2 = pm.regions[2]  # absent from both
    assert r2.dice is None and r2.hd95_mm is None and r2.asd_mm is None


def test_patient_overall_skips_undefined():
    gt, pred = region_pair(
        (10, 10, 10),
        {0: (slice(0, 3), slice(0, 3), slice(0, 3)),
         1: (slice(5, 9), slice(5, 9), slice(5, 9))},
        {0: (slice(0, 3), slice(0, 3), slice(0, 3))},
    )
    pm = metrics.evaluate_pair(gt, pred)
    assert pm.overall("dice") == pytest.approx(0.5)  # mean of 1.0 and 0.0
    assert pm.overall("hd95_mm") == 0.0  # only region 0 defined
    assert pm.undefined_count("hd95_mm") == 12
    assert pm.undefined_count("dice") == 11


def test_evaluate_pair_threading_invariance():
    rng = np.random.Generator(np.random.PCG64(123))
    data_a = rng.integers(0, 14, (16, 16, 16)).astype(np.uint8)
    data_b = rng.integers(0, 14, (16, 16, 16)).astype(np.uint8)
    gt = make_labels(data_a, spacing=(1.0, 1.3, 2.1))
    pred = make_labels(data_b, spacing=(1.0, 1.3, 2.1))
    serial = metrics.evaluate_pair(gt, pred, workers=1)
    threaded = metrics.evaluate_pair(gt, pred, workers=8)
    assert serial == threaded


def test_evaluate_pair_grid_mismatch():
    gt = make_labels(np.zeros((4, 4, 4), dtype=np.uint8))
    pred = make_labels(np.zeros((4, 4, 4), dtype=np.uint8), spacing=(2, 2, 2))
    with pytest.raises(InputError):
        metrics.evaluate_pair(gt, pred)


def test_false_negative_mask_keeps_gt_labels():
    gt, pred = region_pair(
        (6, 6, 6),
        {3: (slice(0, 4), slice(0, 2), slice(0, 2))},
        {3: (slice(0, 2), slice(0, 2), slice(0, 2))},
    )
    fn = metrics.false_negative_mask(gt, pred)
    assert (fn.data[2:4, 0:2, 0:2] == 4).all()
    assert (fn.data[0:2, 0:2, 0:2] == 0).all()
    assert fn.data.sum() == 4 * 2 * 2 * 2


def test_false_negative_mask_counts_label_swaps():
    # gt region 3 predicted as region 4 is still a miss for region 3
    gt, pred = region_pair(
        (4, 4, 4),
        {3: (slice(0, 2), slice(0, 2), slice(0, 2))},
        {4: (slice(0, 2), slice(0, 2), slice(0, 2))},
    )
    fn = metrics.false_negative_mask(gt, pred)
    assert (fn.data[0:2, 0:2, 0:2] == 4).all()
