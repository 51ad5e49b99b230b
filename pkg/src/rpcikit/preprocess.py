"""Volume preprocessing: mask-bounded cropping and metric label dilation.

Cropping keeps a configurable world-space margin (default 15 mm) around the
labeled extent and updates the grid origin so retained voxels keep their
world coordinates. Dilation grows every labeled region by a metric radius
(default 2 mm, measured between voxel centers with anisotropic spacing
honored): each background voxel within the radius of some foreground voxel
receives the label of the nearest one, with exact-distance ties going to the
smallest region label so outputs are reproducible. Existing labels are never
rewritten.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import backends
from .errors import InputError
from .volume import (
    BoundingBox,
    LabelVolume,
    ScalarVolume,
    WorldTransform,
    label_bounding_box,
    mask_bounding_box,
    require_same_grid,
)


@dataclass(frozen=True)
class CropSpec:
    margin_mm: float = 15.0

    def __post_init__(self):
        if not math.isfinite(self.margin_mm) or self.margin_mm < 0:
            raise InputError(f"margin_mm must be non-negative and finite, got {self.margin_mm}")


@dataclass(frozen=True)
class DilationSpec:
    radius_mm: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.radius_mm) or self.radius_mm < 0:
            raise InputError(f"radius_mm must be non-negative and finite, got {self.radius_mm}")


def compute_crop_box(labels: LabelVolume, spec: CropSpec) -> BoundingBox:
    """Label bounding box expanded per axis by ceil(margin / spacing) voxels,
    clamped to the grid."""
    tight = label_bounding_box(labels)
    spacing = labels.spacing.as_array()
    dims = labels.dims
    lo = []
    hi = []
    for axis in range(3):
        pad = math.ceil(spec.margin_mm / spacing[axis]) if spec.margin_mm > 0 else 0
        lo.append(max(0, tight.lo[axis] - pad))
        hi.append(min(dims[axis] - 1, tight.hi[axis] + pad))
    return BoundingBox(tuple(lo), tuple(hi))


def _shifted_transform(vol, lo: Tuple[int, int, int]) -> WorldTransform:
    new_origin = vol.geometry.voxel_to_world(np.asarray(lo, dtype=np.float64))
    return WorldTransform(origin=new_origin, direction=vol.transform.direction)


def crop_with_margin(
    ct: ScalarVolume, labels: LabelVolume, spec: CropSpec = CropSpec()
) -> Tuple[ScalarVolume, LabelVolume]:
    """Crop a CT/label pair to the labeled extent plus a world-space margin."""
    require_same_grid(ct, labels, "ct/labels")
    box = compute_crop_box(labels, spec)
    sl = box.slices()
    transform = _shifted_transform(labels, box.lo)
    ct_out = ScalarVolume(
        data=np.ascontiguousarray(ct.data[sl]), spacing=ct.spacing, transform=transform
    )
    lab_out = LabelVolume(
        data=np.ascontiguousarray(labels.data[sl]), spacing=labels.spacing, transform=transform
    )
    return ct_out, lab_out


def crop_labels_with_margin(labels: LabelVolume, spec: CropSpec = CropSpec()) -> LabelVolume:
    """Label-only variant of :func:`crop_with_margin`."""
    box = compute_crop_box(labels, spec)
    return LabelVolume(
        data=np.ascontiguousarray(labels.data[box.slices()]),
        spacing=labels.spacing,
        transform=_shifted_transform(labels, box.lo),
    )


def dilate_labels(
    labels: LabelVolume, spec: DilationSpec = DilationSpec(), backend: Optional[str] = None
) -> LabelVolume:
    """Grow every region by ``radius_mm``: background voxels within the radius
    of a foreground voxel take the nearest foreground label (smallest label on
    exact ties). Radius 0 is the identity."""
    if spec.radius_mm == 0:
        return labels
    data = labels.data
    present = [int(v) for v in np.unique(data) if v != 0]
    if not present:
        return labels

    spacing = labels.spacing.as_array()
    r2 = spec.radius_mm * spec.radius_mm
    pads = [math.ceil(spec.radius_mm / spacing[axis]) for axis in range(3)]
    dims = labels.dims

    out = data.copy()
    best_d2 = np.full(dims, np.inf, dtype=np.float64)
    background = data == 0
    for value in present:  # ascending, so strict improvement = smallest-label ties
        mask = data == value
        tight = mask_bounding_box(mask)
        sl = tuple(
            slice(max(0, tight.lo[a] - pads[a]), min(dims[a], tight.hi[a] + pads[a] + 1))
            for a in range(3)
        )
        feats = backends.feature_transform(mask[sl], labels.spacing, backend=backend)
        d2 = backends.squared_distances_from_features(feats, labels.spacing)
        sub = best_d2[sl]
        claim = background[sl] & (d2 <= r2) & (d2 < sub)
        out[sl][claim] = value
        sub[claim] = d2[claim]
    return LabelVolume(data=out, spacing=labels.spacing, transform=labels.transform)
