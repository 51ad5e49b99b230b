import numpy as np
import pytest

from rpcikit import backends
from rpcikit.errors import InputError
from rpcikit.preprocess import (
    CropSpec,
    DilationSpec,
    compute_crop_box,
    crop_labels_with_margin,
    crop_with_margin,
    dilate_labels,
)
from rpcikit.volume import LabelVolume, Spacing

from conftest import make_labels, make_scalar


def dilation_oracle(labels: LabelVolume, radius_mm: float) -> np.ndarray:
    """Expected dilation by all-pairs nearest-label scan with the shared
    distance formula: nearest foreground label within the radius, smallest
    label on exact distance ties (argmin returns the first, labels ascend)."""
    data = labels.data
    wx, wy, wz = backends.squared_weights(labels.spacing)
    r2 = radius_mm * radius_mm
    out = data.copy()
    values = [int(v) for v in np.unique(data) if v != 0]
    bg = np.argwhere(data == 0).astype(np.float64)
    per_label = np.empty((len(values), len(bg)), dtype=np.float64)
    for row, v in enumerate(values):
        pts = np.argwhere(data == v).astype(np.float64)
        di = pts[:, 0][:, None] - bg[:, 0][None, :]
        dj = pts[:, 1][:, None] - bg[:, 1][None, :]
        dk = pts[:, 2][:, None] - bg[:, 2][None, :]
        d2 = (di * di) * wx + (dj * dj) * wy + (dk * dk) * wz
        per_label[row] = d2.min(axis=0)
    best = per_label.argmin(axis=0)
    best_d2 = per_label[best, np.arange(len(bg))]
    take = best_d2 <= r2
    coords = bg[take].astype(np.int64)
    out[coords[:, 0], coords[:, 1], coords[:, 2]] = np.asarray(values, dtype=np.uint8)[best[take]]
    return out


# ---------------------------------------------------------------------------
# cropping


def test_crop_box_margin_15_clamps_to_grid():
    data = np.zeros((64, 64, 64), dtype=np.uint8)
    data[10:21, 10:21, 10:21] = 1
    lv = make_labels(data)
    box = compute_crop_box(lv, CropSpec(margin_mm=15.0))
    assert box.lo == (0, 0, 0)
    assert box.hi == (35, 35, 35)


def test_crop_box_anisotropic_expansion():
    # 5 mm slices in z: ceil(15/5) = 3 voxels; 1 mm in x/y: 15 voxels
    data = np.zeros((64, 64, 40), dtype=np.uint8)
    data[20:25, 20:25, 20:25] = 2
    lv = make_labels(data, spacing=(1.0, 1.0, 5.0))
    box = compute_crop_box(lv, CropSpec(margin_mm=15.0))
    assert box.lo == (5, 5, 17)
    assert box.hi == (39, 39, 27)


def test_crop_preserves_world_coordinates():
    data = np.zeros((40, 40, 40), dtype=np.uint8)
    data[12:18, 15:22, 9:30] = 3
    lv = make_labels(data, spacing=(0.9, 1.1, 2.3), origin=(-100.0, 50.0, 7.0))
    ct = make_scalar(np.arange(40**3, dtype=np.int16).reshape(40, 40, 40) % 2000,
                     spacing=(0.9, 1.1, 2.3), origin=(-100.0, 50.0, 7.0))
    ct2, lv2 = crop_with_margin(ct, lv, CropSpec(margin_mm=7.0))
    box = compute_crop_box(lv, CropSpec(margin_mm=7.0))
    probe = np.array([2, 3, 1])
    w_new = lv2.voxel_to_world(probe)
    w_old = lv.voxel_to_world(probe + np.asarray(box.lo))
    assert np.abs(w_new - w_old).max() < 1e-9
    # payloads line up too
    assert np.array_equal(ct2.data, ct.data[box.slices()])
    assert np.array_equal(lv2.data, lv.data[box.slices()])


def test_crop_keeps_all_foreground():
    data = np.zeros((30, 30, 30), dtype=np.uint8)
    data[0, 0, 0] = 1
    data[29, 29, 29] = 2
    lv = make_labels(data)
    out = crop_labels_with_margin(lv, CropSpec(margin_mm=4.0))
    assert out.dims == (30, 30, 30)
    assert int(out.data.sum()) == 3


def test_crop_zero_margin_is_tight():
    data = np.zeros((20, 20, 20), dtype=np.uint8)
    data[5:8, 6:9, 7:10] = 5
    out = crop_labels_with_margin(make_labels(data), CropSpec(margin_mm=0.0))
    assert out.dims == (3, 3, 3)
    assert (out.data == 5).all()


def test_crop_empty_labels_raises():
    lv = make_labels(np.zeros((8, 8, 8), dtype=np.uint8))
    with pytest.raises(InputError, match="empty mask"):
        crop_labels_with_margin(lv)


def test_crop_requires_shared_grid():
    lv = make_labels(np.ones((8, 8, 8), dtype=np.uint8))
    ct = make_scalar(np.zeros((8, 8, 9), dtype=np.int16))
    with pytest.raises(InputError, match="dims mismatch"):
        crop_with_margin(ct, lv)


def test_crop_spec_rejects_negative_margin():
    with pytest.raises(InputError):
        CropSpec(margin_mm=-1.0)


# ---------------------------------------------------------------------------
# dilation


def test_dilate_single_voxel_radius_2_has_33_voxels():
    # |{offsets with i^2+j^2+k^2 <= 4}| = 33 at 1 mm spacing
    data = np.zeros((9, 9, 9), dtype=np.uint8)
    data[4, 4, 4] = 6
    out = dilate_labels(make_labels(data), DilationSpec(radius_mm=2.0))
    assert int((out.data == 6).sum()) == 33
    assert int((out.data != 0).sum()) == 33


def test_dilate_radius_zero_is_identity():
    data = np.zeros((6, 6, 6), dtype=np.uint8)
    data[2, 2, 2] = 3
    lv = make_labels(data)
    out = dilate_labels(lv, DilationSpec(radius_mm=0.0))
    assert out.identical(lv)


def test_dilate_never_rewrites_foreground():
    data = np.zeros((10, 10, 10), dtype=np.uint8)
    data[4, 4, 4] = 9
    data[4, 4, 5] = 2  # direct neighbor with a smaller label
    lv = make_labels(data)
    out = dilate_labels(lv, DilationSpec(radius_mm=3.0))
    assert out.data[4, 4, 4] == 9
    assert out.data[4, 4, 5] == 2


def test_dilate_tie_goes_to_smaller_label():
    # two seeds 4 voxels apart: the midpoint is exactly 2 mm from both
    data = np.zeros((9, 5, 5), dtype=np.uint8)
    data[2, 2, 2] = 7
    data[6, 2, 2] = 3
    out = dilate_labels(make_labels(data), DilationSpec(radius_mm=2.0))
    assert out.data[4, 2, 2] == 3
    assert out.data[3, 2, 2] == 7  # strictly closer to the 7-seed
    assert out.data[5, 2, 2] == 3


def test_dilate_anisotropic_reach():
    # 2 mm radius at 5 mm slice thickness never crosses a slice
    data = np.zeros((7, 7, 5), dtype=np.uint8)
    data[3, 3, 2] = 1
    out = dilate_labels(make_labels(data, spacing=(1.0, 1.0, 5.0)), DilationSpec(radius_mm=2.0))
    assert out.data[:, :, 1].sum() == 0
    assert out.data[:, :, 3].sum() == 0
    assert out.data[3, 3, 2] == 1
    assert out.data[1, 3, 2] == 1  # 2 mm along x is in reach


def test_dilate_matches_nearest_label_oracle(rng):
    for trial in range(20):
        dims = (24, 24, 24)
        data = np.zeros(dims, dtype=np.uint8)
        n_seeds = int(rng.integers(2, 30))
        for _ in range(n_seeds):
            pos = tuple(rng.integers(0, d) for d in dims)
            data[pos] = int(rng.integers(1, 14))
        spacing = Spacing(*rng.uniform(0.5, 3.0, 3))
        radius = float(rng.uniform(0.5, 4.0))
        lv = make_labels(data, spacing=(spacing.dx, spacing.dy, spacing.dz))
        got = dilate_labels(lv, DilationSpec(radius_mm=radius))
        expected = dilation_oracle(lv, radius)
        assert np.array_equal(got.data, expected), f"trial {trial} mismatch"


def test_dilate_backends_agree(rng):
    data = np.zeros((20, 20, 20), dtype=np.uint8)
    data[5, 5, 5] = 2
    data[14, 10, 10] = 11
    data[10, 15, 8] = 7
    lv = make_labels(data, spacing=(0.8, 1.1, 2.0))
    a = dilate_labels(lv, DilationSpec(radius_mm=3.5), backend="numba")
    b = dilate_labels(lv, DilationSpec(radius_mm=3.5), backend="numpy")
    assert np.array_equal(a.data, b.data)


def test_dilate_empty_volume_is_identity():
    lv = make_labels(np.zeros((5, 5, 5), dtype=np.uint8))
    out = dilate_labels(lv, DilationSpec(radius_mm=2.0))
    assert out.identical(lv)
