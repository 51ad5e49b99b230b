"""Per-region overlap and boundary metrics: Dice, HD95, ASD.

Surfaces are foreground voxels with at least one 6-connected background
neighbor (outside the grid counts as background), and surface distances are
exact world-space Euclidean distances between voxel centers. The fast path
runs on the feature transform from :mod:`rpcikit.backends`;
:func:`brute_force_surface_distances` is the all-pairs reference the fast
path is tested against, and the two agree exactly, not approximately.

Empty masks make boundary distances meaningless, so HD95/ASD are reported as
``None`` (never silently 0) whenever either mask is empty, and regions absent
from both volumes are excluded from patient-level means. Dice keeps the usual
conventions: 1.0 when both masks are empty, 0.0 when exactly one is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import backends
from .errors import InputError
from .parallel import run_tasks
from .volume import (
    NUM_REGIONS,
    LabelVolume,
    Spacing,
    as_region,
    extract_region_mask,
    mask_bounding_box,
    require_same_grid,
)


@dataclass(frozen=True)
class SurfaceDistanceSet:
    """Directed boundary-to-boundary distance samples, in mm.

    ``d_ab[i]`` is the distance from the i-th boundary voxel of A to the
    nearest boundary voxel of B; ``d_ba`` is the reverse direction.
    """

    d_ab: np.ndarray
    d_ba: np.ndarray

    def __post_init__(self):
        for name in ("d_ab", "d_ba"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def pooled(self) -> np.ndarray:
        return np.concatenate([self.d_ab, self.d_ba])


@dataclass(frozen=True)
class RegionMetrics:
    """Dice/HD95/ASD for one region; ``None`` marks an undefined value."""

    region: int
    dice: Optional[float]
    hd95_mm: Optional[float]
    asd_mm: Optional[float]


@dataclass(frozen=True)
class PatientMetrics:
    """All 13 per-region metrics for one (reference, prediction) pair."""

    patient: str
    regions: Tuple[RegionMetrics, ...]

    def __post_init__(self):
        if len(self.regions) != NUM_REGIONS:
            raise InputError(f"expected {NUM_REGIONS} region entries, got {len(self.regions)}")
        if tuple(r.region for r in self.regions) != tuple(range(NUM_REGIONS)):
            raise InputError("region entries must be ordered 0..12")

    def overall(self, metric: str) -> Optional[float]:
        """Mean of a metric over regions where it is defined."""
        values = [getattr(r, metric) for r in self.regions if getattr(r, metric) is not None]
        return float(np.mean(values)) if values else None

    def undefined_count(self, metric: str) -> int:
        return sum(1 for r in self.regions if getattr(r, metric) is None)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap coefficient 2|A∩B| / (|A|+|B|); 1.0 for two empty masks, 0.0
    when exactly one is empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise InputError(f"dims mismatch: {a.shape} vs {b.shape}")
    na = int(np.count_nonzero(a))
    nb = int(np.count_nonzero(b))
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a & b))
    return 2.0 * inter / (na + nb)


def _shifted_fg(fg: np.ndarray, axis: int, step: int) -> np.ndarray:
    out = np.zeros_like(fg)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    if step > 0:
        dst[axis], src[axis] = slice(0, -1), slice(1, None)
    else:
        dst[axis], src[axis] = slice(1, None), slice(0, -1)
    out[tuple(dst)] = fg[tuple(src)]
    return out


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a 6-connected background neighbor; voxels beyond
    the grid count as background, so mask voxels on the grid edge are boundary."""
    fg = np.asarray(mask, dtype=bool)
    if fg.ndim != 3:
        raise InputError(f"mask must be 3D, got shape {fg.shape}")
    surrounded = np.ones_like(fg)
    for axis in range(3):
        for step in (1, -1):
            surrounded &= _shifted_fg(fg, axis, step)
    return fg & ~surrounded


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Boundary voxel indices as an (n, 3) array in lexicographic order."""
    return np.argwhere(boundary_mask(mask))


def distance_field(mask: np.ndarray, spacing: Spacing, backend: Optional[str] = None) -> np.ndarray:
    """Exact anisotropic distance (mm) from every voxel center to the nearest
    foreground voxel center."""
    return backends.distance_field_mm(np.asarray(mask, dtype=bool), spacing, backend=backend)


def _crop_pair(a: np.ndarray, b: np.ndarray):
    box_a = mask_bounding_box(a)
    box_b = mask_bounding_box(b)
    lo = tuple(min(x, y) for x, y in zip(box_a.lo, box_b.lo))
    hi = tuple(max(x, y) for x, y in zip(box_a.hi, box_b.hi))
    sl = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
    return a[sl], b[sl]


def surface_distances(
    a: np.ndarray, b: np.ndarray, spacing: Spacing, backend: Optional[str] = None
) -> SurfaceDistanceSet:
    """Distances from each boundary voxel of ``a`` to the nearest boundary
    voxel of ``b`` and vice versa, via the feature transform over each
    boundary. Both masks must be non-empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise InputError(f"dims mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise InputError("empty mask: surface distances undefined")
    # The joint bounding box preserves every boundary voxel and every nearest
    # neighbor, so cropping changes nothing but the work done.
    a, b = _crop_pair(a, b)
    surf_a = boundary_mask(a)
    surf_b = boundary_mask(b)
    d_ab = _distances_to_surface(surf_a, surf_b, spacing, backend)
    d_ba = _distances_to_surface(surf_b, surf_a, spacing, backend)
    return SurfaceDistanceSet(d_ab=d_ab, d_ba=d_ba)


def _distances_to_surface(
    query_surf: np.ndarray, target_surf: np.ndarray, spacing, backend
) -> np.ndarray:
    feats = backends.feature_transform(target_surf, spacing, backend=backend)
    d2 = backends.squared_distances_from_features(feats, spacing)
    return np.sqrt(d2[query_surf])


def hd95(s: SurfaceDistanceSet) -> float:
    """95th percentile (linear interpolation) of the pooled distance multiset."""
    pooled = s.pooled()
    if pooled.size == 0:
        raise InputError("empty surface distance set")
    return float(np.percentile(pooled, 95.0))


def asd(s: SurfaceDistanceSet) -> float:
    """Mean of the pooled distance multiset."""
    pooled = s.pooled()
    if pooled.size == 0:
        raise InputError("empty surface distance set")
    return float(np.mean(pooled))


def region_metrics_from_masks(
    region: int,
    a: np.ndarray,
    b: np.ndarray,
    spacing: Spacing,
    backend: Optional[str] = None,
) -> RegionMetrics:
    """Metrics between two binary masks of one region, applying the
    undefined-value policy: absent from both -> fully undefined; one side
    empty -> Dice 0, distances undefined."""
    a_any = bool(a.any())
    b_any = bool(b.any())
    if not a_any and not b_any:
        return RegionMetrics(region=region, dice=None, hd95_mm=None, asd_mm=None)
    d = dice(a, b)
    if not (a_any and b_any):
        return RegionMetrics(region=region, dice=d, hd95_mm=None, asd_mm=None)
    s = surface_distances(a, b, spacing, backend=backend)
    return RegionMetrics(region=region, dice=d, hd95_mm=hd95(s), asd_mm=asd(s))


def evaluate_pair(
    gt: LabelVolume,
    pred: LabelVolume,
    patient: str = "",
    backend: Optional[str] = None,
    workers: Optional[int] = None,
) -> PatientMetrics:
    """Per-region metrics between a reference and a predicted label volume.

    Regions are independent, so they are evaluated on a thread pool; results
    do not depend on scheduling.
    """
    require_same_grid(gt, pred, "gt/pred")

    def one_region(r: int) -> RegionMetrics:
        return region_metrics_from_masks(
            r,
            extract_region_mask(gt, r),
            extract_region_mask(pred, r),
            gt.spacing,
            backend=backend,
        )

    regions = run_tasks(one_region, list(range(NUM_REGIONS)), workers=workers)
    return PatientMetrics(patient=patient, regions=tuple(regions))


def false_negative_mask(gt: LabelVolume, pred: LabelVolume) -> LabelVolume:
    """Voxels labeled in the reference but not matched by the prediction,
    keeping the reference label. Background everywhere else."""
    if gt.dims != pred.dims:
        raise InputError(f"dims mismatch: {gt.dims} vs {pred.dims}")
    missed = (gt.data > 0) & (pred.data != gt.data)
    out = np.where(missed, gt.data, np.uint8(0)).astype(np.uint8)
    return LabelVolume(data=out, spacing=gt.spacing, transform=gt.transform)


def brute_force_surface_distances(
    a: np.ndarray, b: np.ndarray, spacing: Spacing
) -> SurfaceDistanceSet:
    """All-pairs reference computation. Quadratic, intended for masks up to
    about 32^3; keep it boring and obviously correct."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise InputError(f"dims mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise InputError("empty mask: surface distances undefined")
    surf_a = _scan_boundary(a)
    surf_b = _scan_boundary(b)
    return SurfaceDistanceSet(
        d_ab=_nearest_all_pairs(surf_a, surf_b, spacing),
        d_ba=_nearest_all_pairs(surf_b, surf_a, spacing),
    )


def _scan_boundary(fg: np.ndarray) -> np.ndarray:
    """Boundary voxels by checking the six neighbors one voxel at a time."""
    nx, ny, nz = fg.shape
    out = []
    offsets = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    for x, y, z in np.argwhere(fg):
        for ox, oy, oz in offsets:
            u, v, w = x + ox, y + oy, z + oz
            if not (0 <= u < nx and 0 <= v < ny and 0 <= w < nz) or not fg[u, v, w]:
                out.append((x, y, z))
                break
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def _nearest_all_pairs(points: np.ndarray, targets: np.ndarray, spacing) -> np.ndarray:
    wx, wy, wz = backends.squared_weights(spacing)
    tx = targets[:, 0].astype(np.float64)
    ty = targets[:, 1].astype(np.float64)
    tz = targets[:, 2].astype(np.float64)
    out = np.empty(len(points), dtype=np.float64)
    for i, (x, y, z) in enumerate(points):
        di = tx - x
        dj = ty - y
        dk = tz - z
        d2 = (di * di) * wx + (dj * dj) * wy + (dk * dk) * wz
        out[i] = d2.min()
    return np.sqrt(out)
