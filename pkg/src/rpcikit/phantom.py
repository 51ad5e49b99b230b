"""Synthetic abdomen phantom and label perturbation for self-contained tests.

The phantom is geometric, not anatomical: an ellipsoidal "torso" whose shell
(torso minus an inner "bowel" ellipsoid) is tiled into the nine fixed-region
blocks 0..8 by thirds of its extent in x and z, while the bowel ellipsoid is
split into regions 9..12 with the same fan construction used on real scans.
The CT channel is a smooth per-region intensity plus low-frequency waves and
seeded Gaussian noise, clipped to a plausible HU range.

All randomness flows through ``numpy.random.Generator(numpy.random.PCG64(seed))``
so identical specs produce byte-identical volumes on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InputError
from .priors import FanConfig, apply_fan, balance_fan
from .volume import LabelVolume, ScalarVolume, Spacing, VolumeGeometry, WorldTransform

# torso semi-axis as a fraction of the half-extent per axis
_TORSO_FRACTION = 0.88
# bowel ellipsoid center offset, in units of the torso semi-axes
_BOWEL_OFFSET = (0.05, 0.0, -0.04)
# control-point stride of the perturbation lattice, in voxels
_LATTICE_STEP = 8


@dataclass(frozen=True)
class PhantomSpec:
    dims: Tuple[int, int, int] = (64, 64, 64)
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    bowel_fraction: float = 0.2

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 3 or any(d < 32 for d in dims):
            raise InputError(f"phantom dims must be at least 32 per axis, got {self.dims}")
        spacing = tuple(float(s) for s in self.spacing)
        object.__setattr__(self, "spacing", spacing)
        Spacing(*spacing)  # validates positivity
        if not (0.0 < self.bowel_fraction < 1.0):
            raise InputError(
                f"bowel_fraction must be strictly between 0 and 1, got {self.bowel_fraction}"
            )

    def spacing_obj(self) -> Spacing:
        return Spacing(*self.spacing)


def _ellipsoid(axes_mm, center_mm, semi_mm) -> np.ndarray:
    q = np.zeros(tuple(len(a) for a in axes_mm))
    for a in range(3):
        shape = [1, 1, 1]
        shape[a] = -1
        q = q + (((axes_mm[a] - center_mm[a]) / semi_mm[a]) ** 2).reshape(shape)
    return q <= 1.0


def _third_blocks(n_lo: int, n_hi: int, coords: np.ndarray) -> np.ndarray:
    """Block index 0/1/2 for 1-D voxel coordinates, by thirds of [n_lo, n_hi]."""
    extent = n_hi - n_lo + 1
    e1 = n_lo + extent / 3.0
    e2 = n_lo + 2.0 * extent / 3.0
    return np.digitize(coords, [e1, e2]).astype(np.int64)


def generate_phantom(spec: PhantomSpec) -> Tuple[ScalarVolume, LabelVolume, FanConfig]:
    """Build the (ct, labels, fan config) triple for a phantom spec."""
    dims = spec.dims
    spacing = spec.spacing_obj()
    transform = WorldTransform.identity()
    geometry = VolumeGeometry(dims, spacing, transform)
    sp = spacing.as_array()

    axes_mm = [np.arange(dims[a], dtype=np.float64) * sp[a] for a in range(3)]
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0 * sp
    semi = _TORSO_FRACTION / 2.0 * np.asarray(dims, dtype=np.float64) * sp

    torso = _ellipsoid(axes_mm, center, semi)
    scale = spec.bowel_fraction ** (1.0 / 3.0)
    bowel_center = center + semi * np.asarray(_BOWEL_OFFSET)
    bowel = _ellipsoid(axes_mm, bowel_center, semi * scale)
    bowel &= torso  # guard; the offset keeps the bowel inside anyway
    shell = torso & ~bowel

    labels = np.zeros(dims, dtype=np.uint8)
    fg_idx = np.argwhere(torso)
    lo, hi = fg_idx.min(axis=0), fg_idx.max(axis=0)
    bx = _third_blocks(lo[0], hi[0], np.arange(dims[0], dtype=np.float64))
    bz = _third_blocks(lo[2], hi[2], np.arange(dims[2], dtype=np.float64))
    block_region = np.broadcast_to(bx[:, None, None] * 3 + bz[None, None, :], dims)  # 0..8
    labels[shell] = (block_region[shell] + 1).astype(np.uint8)

    config = FanConfig(root_world=tuple(bowel_center))
    partition = balance_fan(bowel, geometry, config)
    fanned = apply_fan(bowel, partition)
    labels[bowel] = fanned.data[bowel]

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    x_mm = axes_mm[0].reshape(-1, 1, 1)
    y_mm = axes_mm[1].reshape(1, -1, 1)
    z_mm = axes_mm[2].reshape(1, 1, -1)
    waves = 25.0 * np.sin(2.0 * np.pi * x_mm / 47.0) * np.cos(2.0 * np.pi * z_mm / 61.0)
    waves = waves + 15.0 * np.sin(2.0 * np.pi * y_mm / 53.0)
    hu = np.where(torso, 20.0 + 12.0 * labels.astype(np.float64) + waves, -1000.0)
    hu = hu + rng.normal(0.0, 7.0, size=dims)
    ct_data = np.clip(np.rint(hu), -1024, 3071).astype(np.int16)

    ct = ScalarVolume(data=ct_data, spacing=spacing, transform=transform)
    lab = LabelVolume(data=labels, spacing=spacing, transform=transform)
    return ct, lab, config


def _trilinear_upsample(ctrl: np.ndarray, dims: Tuple[int, int, int], step: int) -> np.ndarray:
    idx = []
    frac = []
    for a in range(3):
        t = np.arange(dims[a], dtype=np.float64) / step
        i0 = np.minimum(t.astype(np.int64), ctrl.shape[a] - 2)
        idx.append(i0)
        frac.append(t - i0)
    out = np.zeros(dims, dtype=np.float64)
    for ca in (0, 1):
        wx = (frac[0] if ca else 1.0 - frac[0]).reshape(-1, 1, 1)
        for cb in (0, 1):
            wy = (frac[1] if cb else 1.0 - frac[1]).reshape(1, -1, 1)
            for cc in (0, 1):
                wz = (frac[2] if cc else 1.0 - frac[2]).reshape(1, 1, -1)
                corner = ctrl[np.ix_(idx[0] + ca, idx[1] + cb, idx[2] + cc)]
                out += corner * (wx * wy * wz)
    return out


def perturb_labels(labels: LabelVolume, magnitude_mm: float, seed: int) -> LabelVolume:
    """Warp a label volume by a smooth random displacement field.

    The field comes from uniform[-1, 1] vectors on a coarse control lattice,
    trilinearly upsampled and scaled so the per-voxel displacement norm never
    exceeds ``magnitude_mm``. Labels are pulled with nearest-neighbor lookup
    (indices clamped to the grid), so every output label already existed in
    the input and magnitude 0 is the identity.
    """
    if not math.isfinite(magnitude_mm) or magnitude_mm < 0:
        raise InputError(f"magnitude_mm must be non-negative and finite, got {magnitude_mm}")
    if magnitude_mm == 0:
        return labels
    dims = labels.dims
    sp = labels.spacing.as_array()
    ctrl_shape = tuple(int(np.ceil((d - 1) / _LATTICE_STEP)) + 1 for d in dims)
    rng = np.random.Generator(np.random.PCG64(seed))
    ctrl = rng.uniform(-1.0, 1.0, size=(3,) + ctrl_shape)

    per_component = magnitude_mm / math.sqrt(3.0)
    src = []
    for a in range(3):
        disp_mm = _trilinear_upsample(ctrl[a], dims, _LATTICE_STEP) * per_component
        grid = np.arange(dims[a], dtype=np.float64).reshape(
            tuple(-1 if ax == a else 1 for ax in range(3))
        )
        coords = np.rint(grid + disp_mm / sp[a])
        src.append(np.clip(coords, 0, dims[a] - 1).astype(np.intp))
    warped = labels.data[src[0], src[1], src[2]]
    return LabelVolume(data=warped, spacing=labels.spacing, transform=labels.transform)
