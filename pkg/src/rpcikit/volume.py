"""Core volume data model and coordinate geometry.

Volumes are immutable: the payload array is marked read-only at construction,
so volumes can be shared freely across worker threads. Data is indexed
``[x, y, z]`` throughout, the same axis order the on-disk format uses.

Label volumes store region ``r`` (0..12) as voxel value ``r + 1`` and keep 0
for background, so the files stay loadable in standard viewers where 0 is
conventionally "nothing". Every report header repeats this mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import InputError

NUM_REGIONS = 13

#: Anatomical names of the 13 rPCI regions, indexed by region id.
REGION_NAMES = (
    "central",
    "right upper",
    "epigastrium",
    "left upper",
    "left flank",
    "left lower",
    "pelvis",
    "right lower",
    "right flank",
    "upper jejunum",
    "lower jejunum",
    "upper ileum",
    "lower ileum",
)

LABEL_ENCODING_NOTE = "label encoding: stored value = region id + 1, 0 = background"


@dataclass(frozen=True)
class Spacing:
    """Voxel edge lengths in mm. CT stacks are routinely anisotropic in z."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name, v in (("dx", self.dx), ("dy", self.dy), ("dz", self.dz)):
            if not np.isfinite(v) or v <= 0:
                raise InputError(f"spacing {name} must be a positive finite number, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=np.float64)

    def voxel_volume(self) -> float:
        return self.dx * self.dy * self.dz


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WorldTransform:
    """Rigid placement of the voxel grid in world space (mm).

    ``world = origin + direction @ (index * spacing)`` with ``direction`` an
    orthonormal 3x3 axis matrix.
    """

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        origin = _readonly(np.asarray(self.origin, dtype=np.float64).reshape(3))
        direction = _readonly(np.asarray(self.direction, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)
        if not np.all(np.isfinite(origin)) or not np.all(np.isfinite(direction)):
            raise InputError("transform contains non-finite values")
        should_be_identity = direction.T @ direction
        if not np.allclose(should_be_identity, np.eye(3), atol=1e-6):
            raise InputError("direction matrix is not orthonormal")
        if abs(abs(float(np.linalg.det(direction))) - 1.0) > 1e-6:
            raise InputError("direction matrix determinant is not +/-1")

    @classmethod
    def identity(cls) -> "WorldTransform":
        return cls(origin=np.zeros(3), direction=np.eye(3))

    def is_close(self, other: "WorldTransform", tol: float = 1e-6) -> bool:
        return bool(
            np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.direction, other.direction, atol=tol)
        )


@dataclass(frozen=True)
class RegionId:
    """One of the 13 rPCI regions (0..12)."""

    index: int

    def __post_init__(self):
        if not 0 <= self.index < NUM_REGIONS:
            raise InputError(f"region index must be in [0, {NUM_REGIONS - 1}], got {self.index}")

    @property
    def name(self) -> str:
        return REGION_NAMES[self.index]

    @property
    def stored_label(self) -> int:
        return self.index + 1


def as_region(r: "RegionId | int") -> RegionId:
    return r if isinstance(r, RegionId) else RegionId(int(r))


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive voxel-index box."""

    lo: Tuple[int, int, int]
    hi: Tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if any(l > h for l, h in zip(lo, hi)):
            raise InputError(f"bounding box lo {lo} exceeds hi {hi}")
        if any(l < 0 for l in lo):
            raise InputError(f"bounding box lo {lo} is negative")

    def slices(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(l, h + 1) for l, h in zip(self.lo, self.hi))

    def shape(self) -> Tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class VolumeGeometry:
    """Grid shape plus physical placement, without the payload."""

    dims: Tuple[int, int, int]
    spacing: Spacing
    transform: WorldTransform

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise InputError(f"dims must be three positive integers, got {self.dims}")

    def voxel_to_world(self, idx: Sequence[float]) -> np.ndarray:
        """World coordinates (mm) of a voxel center. Integer grid indices only
        need to be within the grid; fractional indices are allowed for
        interpolation-style queries."""
        idx = np.asarray(idx, dtype=np.float64)
        if idx.shape[-1] != 3:
            raise InputError("voxel index must have 3 components")
        if idx.ndim == 1 and _is_grid_index(idx):
            self._check_inside(idx)
        scaled = idx * self.spacing.as_array()
        return self.transform.origin + scaled @ self.transform.direction.T

    def world_to_voxel(self, world: Sequence[float]) -> np.ndarray:
        """Continuous voxel coordinates of a world point (inverse of
        :meth:`voxel_to_world`); callers round if they need grid indices."""
        world = np.asarray(world, dtype=np.float64)
        rel = (world - self.transform.origin) @ self.transform.direction
        return rel / self.spacing.as_array()

    def _check_inside(self, idx: np.ndarray) -> None:
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.dims)):
            raise InputError(f"voxel index {tuple(int(v) for v in idx)} outside dims {self.dims}")

    def is_close(self, other: "VolumeGeometry", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing.as_array(), other.spacing.as_array(), atol=tol)
            and self.transform.is_close(other.transform, tol)
        )


def _is_grid_index(idx: np.ndarray) -> bool:
    return bool(np.all(idx == np.round(idx)))


_SCALAR_DTYPES = (np.uint8, np.int16, np.uint16, np.float32)


@dataclass(frozen=True)
class ScalarVolume:
    """A CT intensity volume (Hounsfield units)."""

    data: np.ndarray
    spacing: Spacing
    transform: WorldTransform = field(default_factory=WorldTransform.identity)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InputError(f"scalar volume must be 3D, got shape {data.shape}")
        if not any(data.dtype == np.dtype(t) for t in _SCALAR_DTYPES):
            raise InputError(f"unsupported scalar dtype {data.dtype}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.data.shape

    @property
    def geometry(self) -> VolumeGeometry:
        return VolumeGeometry(self.dims, self.spacing, self.transform)

    def voxel_to_world(self, idx) -> np.ndarray:
        return self.geometry.voxel_to_world(idx)

    def world_to_voxel(self, world) -> np.ndarray:
        return self.geometry.world_to_voxel(world)

    def identical(self, other: "ScalarVolume", tol: float = 1e-6) -> bool:
        return (
            self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
            and self.geometry.is_close(other.geometry, tol)
        )


@dataclass(frozen=True)
class LabelVolume:
    """A region-label volume: uint8 values in {0} | {1..13}."""

    data: np.ndarray
    spacing: Spacing
    transform: WorldTransform = field(default_factory=WorldTransform.identity)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InputError(f"label volume must be 3D, got shape {data.shape}")
        if data.dtype != np.uint8:
            if not np.issubdtype(data.dtype, np.integer):
                raise InputError(f"unsupported label dtype {data.dtype}")
            if data.size and (data.min() < 0 or data.max() > NUM_REGIONS):
                raise InputError(f"label out of range: {_first_bad_label(data)}")
            data = data.astype(np.uint8)
        elif data.size and data.max() > NUM_REGIONS:
            raise InputError(f"label out of range: {_first_bad_label(data)}")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.data.shape

    @property
    def geometry(self) -> VolumeGeometry:
        return VolumeGeometry(self.dims, self.spacing, self.transform)

    def voxel_to_world(self, idx) -> np.ndarray:
        return self.geometry.voxel_to_world(idx)

    def world_to_voxel(self, world) -> np.ndarray:
        return self.geometry.world_to_voxel(world)

    def foreground(self) -> np.ndarray:
        return self.data > 0

    def identical(self, other: "LabelVolume", tol: float = 1e-6) -> bool:
        return np.array_equal(self.data, other.data) and self.geometry.is_close(
            other.geometry, tol
        )


def _first_bad_label(data: np.ndarray) -> int:
    bad = data[(data < 0) | (data > NUM_REGIONS)]
    return int(bad.flat[0])


def extract_region_mask(lv: LabelVolume, r: "RegionId | int") -> np.ndarray:
    """Binary mask of one region: true where the stored label is ``r + 1``."""
    region = as_region(r)
    return lv.data == region.stored_label


def label_bounding_box(lv: LabelVolume) -> BoundingBox:
    """Tightest box containing every non-background voxel."""
    fg = lv.foreground()
    return mask_bounding_box(fg)


def mask_bounding_box(mask: np.ndarray) -> BoundingBox:
    if not mask.any():
        raise InputError("empty mask: no foreground voxels")
    lo = []
    hi = []
    for axis in range(3):
        proj = np.any(mask, axis=tuple(a for a in range(3) if a != axis))
        nz = np.flatnonzero(proj)
        lo.append(int(nz[0]))
        hi.append(int(nz[-1]))
    return BoundingBox(tuple(lo), tuple(hi))


def voxel_to_world(vol, idx) -> np.ndarray:
    return vol.geometry.voxel_to_world(idx)


def world_to_voxel(vol, world) -> np.ndarray:
    return vol.geometry.world_to_voxel(world)


def require_same_grid(a, b, what: str = "volumes") -> None:
    """Raise unless two volumes/geometries share dims, spacing, and transform."""
    ga = a.geometry if hasattr(a, "geometry") else a
    gb = b.geometry if hasattr(b, "geometry") else b
    if ga.dims != gb.dims:
        raise InputError(f"dims mismatch between {what}: {ga.dims} vs {gb.dims}")
    if not ga.is_close(gb):
        raise InputError(f"{what} do not share spacing/transform")


def label_histogram(lv: LabelVolume) -> np.ndarray:
    """Voxel count per stored label value 0..13."""
    return np.bincount(lv.data.ravel(), minlength=NUM_REGIONS + 1)


def region_voxel_counts(lv: LabelVolume) -> np.ndarray:
    """Voxel count per region id 0..12 (excludes background)."""
    return label_histogram(lv)[1:]


def all_regions() -> Iterable[RegionId]:
    return (RegionId(i) for i in range(NUM_REGIONS))
