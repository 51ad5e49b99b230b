import math

import numpy as np
import pytest
from scipy import ndimage

from rpcikit.errors import InputError
from rpcikit.phantom import PhantomSpec, generate_phantom, perturb_labels
from rpcikit.volume import NUM_REGIONS, require_same_grid


def test_all_regions_present_with_substance():
    ct, labels, config = generate_phantom(PhantomSpec(seed=0))
    counts = np.bincount(labels.data.ravel(), minlength=NUM_REGIONS + 1)
    assert counts[0] > 0
    for region in range(NUM_REGIONS):
        assert counts[region + 1] >= 100, f"region {region} has {counts[region + 1]} voxels"


def test_ct_and_labels_share_grid():
    ct, labels, _ = generate_phantom(PhantomSpec(seed=1))
    require_same_grid(ct, labels)
    assert ct.data.dtype == np.int16
    assert labels.data.dtype == np.uint8
    assert ct.data.min() >= -1024
    assert ct.data.max() <= 3071
    assert ct.data.std() > 0


def test_same_seed_reproduces_exactly():
    spec = PhantomSpec(dims=(48, 40, 36), spacing=(1.0, 1.5, 2.0), seed=7)
    ct1, lab1, cfg1 = generate_phantom(spec)
    ct2, lab2, cfg2 = generate_phantom(spec)
    assert ct1.data.tobytes() == ct2.data.tobytes()
    assert lab1.data.tobytes() == lab2.data.tobytes()
    assert cfg1 == cfg2


def test_different_seed_changes_ct():
    spec_a = PhantomSpec(seed=7)
    spec_b = PhantomSpec(seed=8)
    ct_a, _, _ = generate_phantom(spec_a)
    ct_b, _, _ = generate_phantom(spec_b)
    assert ct_a.data.tobytes() != ct_b.data.tobytes()


def test_bowel_quarters_are_balanced():
    _, labels, config = generate_phantom(PhantomSpec(seed=2))
    assert config.region_order == (9, 10, 11, 12)
    stored = [r + 1 for r in config.region_order]
    counts = np.array([(labels.data == s).sum() for s in stored], dtype=np.float64)
    total = counts.sum()
    assert total > 0
    for c in counts:
        assert abs(c / total - 0.25) <= 0.01


def test_fan_root_lies_inside_volume():
    spec = PhantomSpec(dims=(40, 48, 56), spacing=(1.2, 0.9, 1.1), seed=5)
    _, labels, config = generate_phantom(spec)
    hi = (np.array(spec.dims) - 1) * np.array(spec.spacing)
    root = np.asarray(config.root_world)
    assert (root > 0).all() and (root < hi).all()


def test_anisotropic_phantom_keeps_all_regions():
    spec = PhantomSpec(dims=(48, 48, 32), spacing=(1.5, 1.5, 3.0), seed=3)
    _, labels, _ = generate_phantom(spec)
    assert set(np.unique(labels.data)) == set(range(NUM_REGIONS + 1))


def test_spec_validation():
    with pytest.raises(InputError, match="at least 32"):
        PhantomSpec(dims=(16, 64, 64))
    with pytest.raises(InputError, match="bowel_fraction"):
        PhantomSpec(bowel_fraction=1.0)
    with pytest.raises(InputError, match="bowel_fraction"):
        PhantomSpec(bowel_fraction=0.0)
    with pytest.raises(InputError):
        PhantomSpec(spacing=(1.0, -1.0, 1.0))


def test_perturb_zero_magnitude_is_identity():
    _, labels, _ = generate_phantom(PhantomSpec(seed=4))
    assert perturb_labels(labels, 0.0, seed=1) is labels


def test_perturb_is_deterministic_and_changes_labels():
    _, labels, _ = generate_phantom(PhantomSpec(seed=4))
    a = perturb_labels(labels, 3.0, seed=11)
    b = perturb_labels(labels, 3.0, seed=11)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.tobytes() != labels.data.tobytes()
    c = perturb_labels(labels, 3.0, seed=12)
    assert c.data.tobytes() != a.data.tobytes()


def test_perturb_only_relabels_locally():
    # nearest-neighbor pull-back moves a label at most magnitude/sqrt(3) mm
    # per axis (plus rounding), so every output label must already exist in
    # the input within that index window
    spec = PhantomSpec(dims=(40, 36, 32), spacing=(1.0, 1.5, 2.0), seed=6)
    _, labels, _ = generate_phantom(spec)
    magnitude = 4.0
    warped = perturb_labels(labels, magnitude, seed=3)
    assert warped.spacing == labels.spacing
    assert warped.dims == labels.dims
    sp = labels.spacing.as_array()
    reach = [int(math.floor(magnitude / (math.sqrt(3.0) * s) + 0.5)) for s in sp]
    box = np.ones(tuple(2 * r + 1 for r in reach), dtype=bool)
    for value in np.unique(warped.data):
        allowed = ndimage.binary_dilation(labels.data == value, structure=box)
        assert allowed[warped.data == value].all()


def test_perturb_output_stays_valid():
    _, labels, _ = generate_phantom(PhantomSpec(seed=9))
    warped = perturb_labels(labels, 6.0, seed=2)
    assert warped.data.dtype == np.uint8
    assert set(np.unique(warped.data)) <= set(np.unique(labels.data))


def test_perturb_rejects_bad_magnitude():
    _, labels, _ = generate_phantom(PhantomSpec(seed=4))
    with pytest.raises(InputError, match="magnitude_mm"):
        perturb_labels(labels, -1.0, seed=0)
    with pytest.raises(InputError, match="magnitude_mm"):
        perturb_labels(labels, float("nan"), seed=0)
