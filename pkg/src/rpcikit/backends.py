"""Selectable compute backends for the hot distance-transform kernels.

Two implementations of the exact anisotropic Euclidean feature transform
(nearest-foreground-voxel map) are provided:

* ``"numba"`` — a jitted separable lower-envelope scan, linear time per axis.
* ``"numpy"`` — ``scipy.ndimage.distance_transform_edt`` driving the same
  feature-based distance evaluation.

The environment variable ``RPCIKIT_BACKEND`` picks the default (``numba``
when importable, else ``numpy``); call sites may override per call. Both
backends feed :func:`squared_distances_from_features`, which evaluates
``(dx_vox^2 * sx^2 + dy_vox^2 * sy^2) + dz_vox^2 * sz^2`` in a fixed order so
distances are reproducible bit for bit regardless of backend.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import InputError

BACKEND_ENV = "RPCIKIT_BACKEND"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def available_backends() -> Tuple[str, ...]:
    return ("numba", "numpy") if HAS_NUMBA else ("numpy",)


def active_backend(override: Optional[str] = None) -> str:
    """Resolve the backend name from an explicit override or the environment."""
    name = override or os.environ.get(BACKEND_ENV) or ("numba" if HAS_NUMBA else "numpy")
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise InputError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if name == "numba" and not HAS_NUMBA:
        raise InputError("numba backend requested but numba is not installed")
    return name


def squared_weights(spacing: Sequence[float]) -> Tuple[float, float, float]:
    s = np.asarray(
        spacing.as_array() if hasattr(spacing, "as_array") else spacing, dtype=np.float64
    )
    return float(s[0] * s[0]), float(s[1] * s[1]), float(s[2] * s[2])


@njit(cache=True, nogil=True)
def _envelope_pass(g, w):
    """Lower envelope of parabolas along the last axis of a 2D cost array.

    Returns the per-position minimum ``min_p g[r, p] + w * (q - p)^2`` and the
    arg position ``p``; rows without any finite cost yield inf / -1.
    """
    m, n = g.shape
    h = np.empty((m, n), dtype=np.float64)
    arg = np.empty((m, n), dtype=np.int32)
    v = np.empty(n, dtype=np.int32)
    z = np.empty(n + 1, dtype=np.float64)
    for r in range(m):
        row = g[r]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            fq_total = fq + w * q * q
            s = -np.inf
            while k >= 0:
                p = v[k]
                s = (fq_total - (row[p] + w * p * p)) / (2.0 * w * (q - p))
                if s <= z[k]:
                    k -= 1
                    s = -np.inf
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                h[r, q] = np.inf
                arg[r, q] = -1
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            dq = q - p
            h[r, q] = row[p] + w * (dq * dq)
            arg[r, q] = p
    return h, arg


def _feature_transform_numba(fg: np.ndarray, weights: Tuple[float, float, float]) -> np.ndarray:
    cost = np.where(fg, 0.0, np.inf)
    feats = [None, None, None]
    for ax in range(3):
        moved = np.ascontiguousarray(np.moveaxis(cost, ax, -1))
        lines, n = int(moved.size // moved.shape[-1]), moved.shape[-1]
        h, arg = _envelope_pass(moved.reshape(lines, n), weights[ax])
        h = h.reshape(moved.shape)
        arg = arg.reshape(moved.shape).astype(np.intp)
        for prev in range(ax):
            fmoved = np.moveaxis(feats[prev], ax, -1)
            feats[prev] = np.moveaxis(np.take_along_axis(fmoved, arg, axis=-1), -1, ax)
        feats[ax] = np.moveaxis(arg, -1, ax)
        cost = np.moveaxis(h, -1, ax)
    return np.stack([f.astype(np.int32) for f in feats])


def _feature_transform_scipy(fg: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    inds = ndimage.distance_transform_edt(
        ~fg, sampling=spacing, return_distances=False, return_indices=True
    )
    return np.asarray(inds, dtype=np.int32)


def feature_transform(
    fg: np.ndarray, spacing, backend: Optional[str] = None
) -> np.ndarray:
    """Index of the nearest foreground voxel for every voxel, shape (3, *dims).

    Distances implied by the features are exact world-space Euclidean
    distances between voxel centers under the given anisotropic spacing.
    """
    fg = np.asarray(fg, dtype=bool)
    if fg.ndim != 3:
        raise InputError(f"mask must be 3D, got shape {fg.shape}")
    if not fg.any():
        raise InputError("empty mask: feature transform undefined")
    s = np.asarray(
        spacing.as_array() if hasattr(spacing, "as_array") else spacing, dtype=np.float64
    )
    name = active_backend(backend)
    if name == "numba":
        return _feature_transform_numba(fg, squared_weights(s))
    return _feature_transform_scipy(fg, s)


def squared_distances_from_features(feats: np.ndarray, spacing) -> np.ndarray:
    """Squared mm distance from each voxel center to its feature voxel center."""
    wx, wy, wz = squared_weights(spacing)
    nx, ny, nz = feats.shape[1:]
    di = feats[0].astype(np.float64) - np.arange(nx, dtype=np.float64)[:, None, None]
    dj = feats[1].astype(np.float64) - np.arange(ny, dtype=np.float64)[None, :, None]
    dk = feats[2].astype(np.float64) - np.arange(nz, dtype=np.float64)[None, None, :]
    return (di * di) * wx + (dj * dj) * wy + (dk * dk) * wz


def distance_field_mm(fg: np.ndarray, spacing, backend: Optional[str] = None) -> np.ndarray:
    """Exact distance (mm) from every voxel center to the nearest foreground
    voxel center."""
    feats = feature_transform(fg, spacing, backend=backend)
    return np.sqrt(squared_distances_from_features(feats, spacing))


def warmup(backend: Optional[str] = None) -> None:
    """Trigger JIT compilation on a tiny volume so timed runs measure compute."""
    tiny = np.zeros((3, 3, 3), dtype=bool)
    tiny[1, 1, 1] = True
    feature_transform(tiny, (1.0, 1.0, 1.0), backend=backend)
