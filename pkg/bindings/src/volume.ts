/** @file Voxel volume types shared by every binding operation.

Volumes are axis-aligned grids. `data` holds the voxels in Fortran (column
major) linear order, matching the NIfTI data section: the voxel at grid index
(i, j, k) lives at `data[i + dims[0] * (j + dims[1] * k)]`.
*/

import { InputError } from "./errors.js";

/** Number of anatomical regions; stored labels are region id + 1, 0 is background. */
export const NUM_REGIONS = 13;

/** Largest stored label value: region 12 is stored as 13. */
export const MAX_LABEL = NUM_REGIONS;

export type Triple = [number, number, number];

/** Grid placement: voxel (i, j, k) sits at origin + (i, j, k) * spacing in mm. */
export interface Geometry {
    dims: Triple;
    spacing: Triple;
    origin: Triple;
}

export type ScalarData = Uint8Array | Int16Array | Uint16Array | Float32Array;

/** A scalar image, e.g. CT intensities. */
export interface ScalarVolume {
    geometry: Geometry;
    data: ScalarData;
}

/** A label image over the 0..13 alphabet, always uint8. */
export interface LabelVolume {
    geometry: Geometry;
    data: Uint8Array;
}

function checkTriple(value: Triple, what: string, positive: boolean): void {
    if (!Array.isArray(value) || value.length !== 3) {
        throw new InputError(`${what} needs three components, got ${JSON.stringify(value)}`);
    }
    for (const v of value) {
        if (typeof v !== "number" || !Number.isFinite(v)) {
            throw new InputError(`${what} components must be finite numbers, got ${v}`);
        }
        if (positive && v <= 0) {
            throw new InputError(`${what} components must be positive, got ${v}`);
        }
    }
}

/** Validate and assemble a geometry; dims must be positive integers. */
export function makeGeometry(dims: Triple, spacing: Triple, origin: Triple = [0, 0, 0]): Geometry {
    checkTriple(dims, "dims", true);
    for (const d of dims) {
        if (!Number.isInteger(d)) {
            throw new InputError(`dims must be integers, got ${d}`);
        }
    }
    checkTriple(spacing, "spacing", true);
    checkTriple(origin, "origin", false);
    return { dims: [...dims], spacing: [...spacing], origin: [...origin] };
}

/** Number of voxels on a grid. */
export function voxelCount(dims: Triple): number {
    return dims[0] * dims[1] * dims[2];
}

function checkLength(data: { length: number }, dims: Triple): void {
    const n = voxelCount(dims);
    if (data.length !== n) {
        throw new InputError(`data length ${data.length} does not match dims ${dims} (${n} voxels)`);
    }
}

/**
 * Build a label volume, validating every voxel against the 0..13 alphabet.
 * The array is used as-is (not copied); it must be in Fortran linear order.
 */
export function makeLabelVolume(data: Uint8Array, geometry: Geometry): LabelVolume {
    checkLength(data, geometry.dims);
    for (let i = 0; i < data.length; i++) {
        if (data[i] > MAX_LABEL) {
            throw new InputError(`label out of range: ${data[i]}`);
        }
    }
    return { geometry, data };
}

/** Build a scalar volume; the array is used as-is, in Fortran linear order. */
export function makeScalarVolume(data: ScalarData, geometry: Geometry): ScalarVolume {
    checkLength(data, geometry.dims);
    return { geometry, data };
}

/**
 * Build a binary mask as a label volume: any nonzero input voxel becomes
 * stored label 1 (region 0). Accepts plain arrays or typed arrays.
 */
export function makeMaskVolume(data: ArrayLike<number>, geometry: Geometry): LabelVolume {
    checkLength(data, geometry.dims);
    const out = new Uint8Array(data.length);
    for (let i = 0; i < data.length; i++) {
        out[i] = data[i] !== 0 ? 1 : 0;
    }
    return { geometry, data: out };
}

/** Fortran linear index of grid position (i, j, k). */
export function linearIndex(dims: Triple, i: number, j: number, k: number): number {
    return i + dims[0] * (j + dims[1] * k);
}
