/** @file Deterministic fixture builders shared by the test modules. */

import {
    Geometry,
    LabelVolume,
    Triple,
    linearIndex,
    makeGeometry,
    makeLabelVolume,
    voxelCount,
} from "../src/index.js";

export function grid(
    dims: Triple,
    spacing: Triple = [1, 1, 1],
    origin: Triple = [0, 0, 0],
): Geometry {
    return makeGeometry(dims, spacing, origin);
}

/** Small deterministic PRNG (mulberry32), uniform on [0, 1). */
export function rng(seed: number): () => number {
    let a = seed >>> 0;
    return () => {
        a = (a + 0x6d2b79f5) >>> 0;
        let t = Math.imul(a ^ (a >>> 15), 1 | a);
        t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

/** Binary mask with ones on the half-open box [lo, hi). */
export function cubeMask(geometry: Geometry, lo: Triple, hi: Triple): LabelVolume {
    const data = new Uint8Array(voxelCount(geometry.dims));
    for (let k = lo[2]; k < hi[2]; k++) {
        for (let j = lo[1]; j < hi[1]; j++) {
            for (let i = lo[0]; i < hi[0]; i++) {
                data[linearIndex(geometry.dims, i, j, k)] = 1;
            }
        }
    }
    return makeLabelVolume(data, geometry);
}

/** Random labels over 0..13: each voxel is foreground with the given density. */
export function randomLabels(geometry: Geometry, density: number, seed: number): LabelVolume {
    const next = rng(seed);
    const data = new Uint8Array(voxelCount(geometry.dims));
    for (let i = 0; i < data.length; i++) {
        if (next() < density) {
            data[i] = 1 + Math.floor(next() * 13);
        }
    }
    return makeLabelVolume(data, geometry);
}

/** Copy of a label volume with a fraction of voxels re-rolled. */
export function perturbLabels(labels: LabelVolume, fraction: number, seed: number): LabelVolume {
    const next = rng(seed);
    const data = new Uint8Array(labels.data);
    for (let i = 0; i < data.length; i++) {
        if (next() < fraction) {
            data[i] = Math.floor(next() * 14);
        }
    }
    return makeLabelVolume(data, labels.geometry);
}

/**
 * Labels containing an upper half-disc of the given stored value: voxels in
 * the xz plane within `radius` of the disc centre, restricted to z at or
 * above the centre, extruded `thickness` voxels along y.
 */
export function halfDiscLabels(radius: number, thickness: number, value: number): {
    labels: LabelVolume;
    centre: Triple;
} {
    const n = 2 * radius + 9;
    const geometry = grid([n, thickness + 6, n]);
    const c = Math.floor(n / 2);
    const data = new Uint8Array(voxelCount(geometry.dims));
    for (let k = c; k < n; k++) {
        for (let i = 0; i < n; i++) {
            const du = i - c;
            const dv = k - c;
            if (du * du + dv * dv <= radius * radius) {
                for (let j = 3; j < 3 + thickness; j++) {
                    data[linearIndex(geometry.dims, i, j, k)] = value;
                }
            }
        }
    }
    return { labels: makeLabelVolume(data, geometry), centre: [c, 4, c] };
}
