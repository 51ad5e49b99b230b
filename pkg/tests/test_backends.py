import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpcikit import backends
from rpcikit.errors import InputError
from rpcikit.volume import Spacing

from conftest import random_mask


def nearest_d2_oracle(fg: np.ndarray, spacing: Spacing) -> np.ndarray:
    """Per-voxel min squared distance to foreground, by scanning every
    foreground voxel with the shared distance formula."""
    wx, wy, wz = backends.squared_weights(spacing)
    pts = np.argwhere(fg).astype(np.float64)
    dims = fg.shape
    out = np.empty(dims, dtype=np.float64)
    for x in range(dims[0]):
        for y in range(dims[1]):
            for z in range(dims[2]):
                di = pts[:, 0] - x
                dj = pts[:, 1] - y
                dk = pts[:, 2] - z
                d2 = (di * di) * wx + (dj * dj) * wy + (dk * dk) * wz
                out[x, y, z] = d2.min()
    return out


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_feature_transform_matches_all_pairs_oracle(backend, rng):
    for _ in range(6):
        dims = tuple(int(d) for d in rng.integers(3, 14, 3))
        fg = random_mask(rng, dims, 0.15)
        spacing = Spacing(*rng.uniform(0.4, 3.5, 3))
        feats = backends.feature_transform(fg, spacing, backend=backend)
        d2 = backends.squared_distances_from_features(feats, spacing)
        expected = nearest_d2_oracle(fg, spacing)
        # exact float equality: both sides use the identical formula on
        # integer offsets, and with generic anisotropic spacing the argmin
        # value is unique as a real number
        assert np.array_equal(d2, expected)


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_features_point_at_foreground(backend, rng):
    dims = (9, 11, 7)
    fg = random_mask(rng, dims, 0.1)
    feats = backends.feature_transform(fg, Spacing(1.0, 1.5, 2.0), backend=backend)
    picked = fg[feats[0], feats[1], feats[2]]
    assert picked.all()
    # foreground voxels are their own nearest feature
    idx = np.argwhere(fg)
    for a in range(3):
        assert np.array_equal(feats[a][fg], idx[:, a])


def test_backends_agree_exactly(rng):
    for _ in range(4):
        dims = tuple(int(d) for d in rng.integers(4, 20, 3))
        fg = random_mask(rng, dims, 0.2)
        spacing = Spacing(*rng.uniform(0.3, 4.0, 3))
        d2_nb = backends.squared_distances_from_features(
            backends.feature_transform(fg, spacing, backend="numba"), spacing
        )
        d2_np = backends.squared_distances_from_features(
            backends.feature_transform(fg, spacing, backend="numpy"), spacing
        )
        assert np.array_equal(d2_nb, d2_np)


def test_distance_field_simple_line():
    fg = np.zeros((5, 1, 1), dtype=bool)
    fg[0] = True
    d = backends.distance_field_mm(fg, Spacing(2.0, 1.0, 1.0))
    assert np.array_equal(d[:, 0, 0], [0.0, 2.0, 4.0, 6.0, 8.0])


def test_distance_field_anisotropic_plane():
    fg = np.zeros((3, 3, 3), dtype=bool)
    fg[1, 1, 1] = True
    d = backends.distance_field_mm(fg, Spacing(1.0, 2.0, 5.0))
    assert d[1, 1, 1] == 0.0
    assert d[0, 1, 1] == 1.0
    assert d[1, 0, 1] == 2.0
    assert d[1, 1, 0] == 5.0
    assert d[0, 0, 1] == np.sqrt(5.0)


def test_empty_mask_rejected():
    with pytest.raises(InputError, match="empty mask"):
        backends.feature_transform(np.zeros((3, 3, 3), dtype=bool), Spacing(1, 1, 1))


def test_full_mask_all_zero_distance():
    fg = np.ones((4, 5, 6), dtype=bool)
    d = backends.distance_field_mm(fg, Spacing(0.5, 0.7, 0.9))
    assert not d.any()


def test_active_backend_env_flag(monkeypatch):
    monkeypatch.delenv(backends.BACKEND_ENV, raising=False)
    assert backends.active_backend() in ("numba", "numpy")
    monkeypatch.setenv(backends.BACKEND_ENV, "numpy")
    assert backends.active_backend() == "numpy"
    monkeypatch.setenv(backends.BACKEND_ENV, "bogus")
    with pytest.raises(InputError, match="unknown backend"):
        backends.active_backend()


def test_explicit_override_beats_env(monkeypatch):
    monkeypatch.setenv(backends.BACKEND_ENV, "numpy")
    assert backends.active_backend("numba") == "numba"


def test_spacing_covariance_dyadic():
    # doubling every spacing doubles every distance bit-exactly (the weights
    # scale by exactly 4)
    rng = np.random.Generator(np.random.PCG64(5))
    fg = random_mask(rng, (8, 9, 10), 0.12)
    d1 = backends.distance_field_mm(fg, Spacing(1.0, 1.5, 2.5))
    d2 = backends.distance_field_mm(fg, Spacing(2.0, 3.0, 5.0))
    assert np.array_equal(d2, 2.0 * d1)


def test_permutation_covariance(rng):
    # transposing axes and permuting spacing the same way permutes the field;
    # only up to roundoff because the fixed term order of the distance
    # formula changes with the axes
    fg = random_mask(rng, (7, 8, 9), 0.15)
    d = backends.distance_field_mm(fg, Spacing(0.7, 1.3, 2.9))
    dt = backends.distance_field_mm(
        np.ascontiguousarray(fg.transpose(2, 0, 1)), Spacing(2.9, 0.7, 1.3)
    )
    assert np.allclose(dt, d.transpose(2, 0, 1), rtol=1e-12, atol=0.0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    dx=st.floats(0.25, 0.75),
    dy=st.floats(1.0, 1.75),
    dz=st.floats(2.0, 3.5),
    p=st.floats(0.02, 0.6),
)
def test_distance_field_invariants(seed, dx, dy, dz, p):
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = tuple(int(d) for d in rng.integers(2, 12, 3))
    fg = random_mask(rng, dims, p)
    spacing = Spacing(dx, dy, dz)
    d = backends.distance_field_mm(fg, spacing)
    assert (d[fg] == 0.0).all()
    assert (d[~fg] > 0.0).all()
    # 1-Lipschitz along each axis in world units
    for axis, step in ((0, dx), (1, dy), (2, dz)):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(1, None)
        sl_b[axis] = slice(0, -1)
        diff = np.abs(d[tuple(sl_a)] - d[tuple(sl_b)])
        assert (diff <= step + 1e-9).all()


def test_warmup_is_idempotent():
    backends.warmup()
    backends.warmup()
