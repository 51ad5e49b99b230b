"""Fan partition of the small bowel into four equal-volume angular sectors.

Angles are measured in a fixed anatomical plane around a root point given in
world coordinates. With the default coronal plane and RAS world axes the
in-plane components are (x, z); the default start direction is superior
(+z, i.e. a half turn angle of pi/2 from +x) and the default sweep of +1
runs the growing angle toward the patient's left. Sector cuts are placed at
the 25/50/75% quantiles of the per-voxel angle distribution so each sector
holds as close to a quarter of the bowel volume as whole voxels allow, and
sectors are half-open on the right: a voxel exactly at a cut belongs to the
higher sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InputError
from .volume import LabelVolume, VolumeGeometry

# in-plane world axis pairs (u, v): angle = atan2(v, u)
_PLANE_AXES = {
    "coronal": (0, 2),  # x (right), z (superior)
    "axial": (0, 1),  # x (right), y (anterior)
    "sagittal": (1, 2),  # y (anterior), z (superior)
}

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FanConfig:
    root_world: Tuple[float, float, float]
    plane: str = "coronal"
    start_angle: float = math.pi / 2.0
    sweep: int = 1
    region_order: Tuple[int, int, int, int] = (9, 10, 11, 12)

    def __post_init__(self):
        if self.plane not in _PLANE_AXES:
            raise InputError(f"unknown fan plane: {self.plane!r}")
        if self.sweep not in (1, -1):
            raise InputError(f"sweep must be +1 or -1, got {self.sweep}")
        root = tuple(float(v) for v in self.root_world)
        if len(root) != 3 or not all(math.isfinite(v) for v in root):
            raise InputError(f"root_world must be 3 finite coordinates, got {self.root_world}")
        object.__setattr__(self, "root_world", root)
        if not math.isfinite(self.start_angle):
            raise InputError(f"start_angle must be finite, got {self.start_angle}")
        if sorted(self.region_order) != [9, 10, 11, 12]:
            raise InputError(
                f"region_order must be a permutation of (9, 10, 11, 12), got {self.region_order}"
            )
        object.__setattr__(self, "region_order", tuple(int(r) for r in self.region_order))


@dataclass(frozen=True)
class FanPartition:
    config: FanConfig
    geometry: VolumeGeometry
    cut_angles: Tuple[float, float, float]
    achieved_fractions: Tuple[float, float, float, float]

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cut_angles)
        if len(cuts) != 3 or not (0.0 <= cuts[0] < cuts[1] < cuts[2] < _TWO_PI):
            raise InputError(f"cut angles must be strictly increasing in [0, 2*pi), got {cuts}")
        fr = tuple(float(f) for f in self.achieved_fractions)
        if len(fr) != 4 or abs(sum(fr) - 1.0) > 1e-9:
            raise InputError(f"achieved fractions must sum to 1, got {fr}")
        object.__setattr__(self, "cut_angles", cuts)
        object.__setattr__(self, "achieved_fractions", fr)


def fan_angles(indices: np.ndarray, geometry: VolumeGeometry, config: FanConfig) -> np.ndarray:
    """Fan angle in [0, 2*pi) for each voxel index row of ``indices`` (n, 3).

    A voxel whose in-plane world position coincides with the root gets 0.
    """
    indices = np.asarray(indices)
    if indices.ndim != 2 or indices.shape[1] != 3:
        raise InputError(f"indices must have shape (n, 3), got {indices.shape}")
    world = geometry.voxel_to_world(indices)
    ua, va = _PLANE_AXES[config.plane]
    u = world[:, ua] - config.root_world[ua]
    v = world[:, va] - config.root_world[va]
    raw = np.arctan2(v, u)
    phi = np.mod(config.sweep * (raw - config.start_angle), _TWO_PI)
    phi[(u == 0.0) & (v == 0.0)] = 0.0
    return phi


def voxel_fan_angle(index, geometry: VolumeGeometry, config: FanConfig) -> float:
    return float(fan_angles(np.asarray(index, dtype=np.int64).reshape(1, 3), geometry, config)[0])


def _quantile_cuts(sorted_angles: np.ndarray) -> Tuple[float, float, float]:
    """Smallest angle a with count(angles <= a) >= k*n/4, for k = 1, 2, 3.

    Pure integer threshold arithmetic so the cuts are insensitive to float
    quantile conventions.
    """
    n = sorted_angles.shape[0]
    cuts = []
    for k in (1, 2, 3):
        i = -(-k * n // 4) - 1  # ceil(k*n/4) - 1
        cuts.append(float(sorted_angles[i]))
    return tuple(cuts)


def balance_fan(
    small_bowel: np.ndarray, geometry: VolumeGeometry, config: FanConfig
) -> FanPartition:
    """Choose cut angles splitting the bowel mask into four near-equal sectors."""
    small_bowel = np.asarray(small_bowel)
    if small_bowel.shape != geometry.dims:
        raise InputError(f"dims mismatch: mask {small_bowel.shape} vs geometry {geometry.dims}")
    idx = np.argwhere(small_bowel)
    if idx.shape[0] == 0:
        raise InputError("empty mask: no small-bowel voxels to partition")
    phi = fan_angles(idx, geometry, config)
    order = np.sort(phi)
    if order[0] == order[-1]:
        raise InputError("degenerate fan: all bowel voxels share one angle")
    cuts = _quantile_cuts(order)
    if not (cuts[0] < cuts[1] < cuts[2]):
        raise InputError(f"degenerate fan: coincident sector cuts {cuts}")
    sector = np.searchsorted(np.asarray(cuts), phi, side="right")
    counts = np.bincount(sector, minlength=4).astype(np.float64)
    fractions = tuple(counts / phi.shape[0])
    return FanPartition(
        config=config, geometry=geometry, cut_angles=cuts, achieved_fractions=fractions
    )


def apply_fan(small_bowel: np.ndarray, partition: FanPartition) -> LabelVolume:
    """Label each bowel voxel with its sector's region (in ``region_order``)."""
    geometry = partition.geometry
    small_bowel = np.asarray(small_bowel)
    if small_bowel.shape != geometry.dims:
        raise InputError(f"dims mismatch: mask {small_bowel.shape} vs geometry {geometry.dims}")
    out = np.zeros(geometry.dims, dtype=np.uint8)
    idx = np.argwhere(small_bowel)
    if idx.shape[0]:
        phi = fan_angles(idx, geometry, partition.config)
        sector = np.searchsorted(np.asarray(partition.cut_angles), phi, side="right")
        stored = np.asarray(
            [r + 1 for r in partition.config.region_order], dtype=np.uint8
        )[sector]
        out[idx[:, 0], idx[:, 1], idx[:, 2]] = stored
    return LabelVolume(data=out, spacing=geometry.spacing, transform=geometry.transform)
