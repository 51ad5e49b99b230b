/** @file Bindings over the rpcikit command line.

Every operation round-trips through the tool itself: volumes are written as
NIfTI files into a scratch directory, one subcommand runs, and the results
are read back from its JSON output or output volumes. Values are therefore
exactly the tool's own, bit for bit.
*/

import * as fs from "node:fs";
import * as path from "node:path";

import { InputError } from "./errors.js";
import { readLabels, readScalar, writeVolume } from "./nifti.js";
import { runCli, withWorkspace } from "./runner.js";
import { LabelVolume, ScalarVolume } from "./volume.js";

export { InputError, IoError } from "./errors.js";
export {
    readLabels,
    readScalar,
    volumeToBytes,
    writeVolume,
} from "./nifti.js";
export { CLI_ENV, runCli, withWorkspace } from "./runner.js";
export type { CliResult } from "./runner.js";
export {
    MAX_LABEL,
    NUM_REGIONS,
    linearIndex,
    makeGeometry,
    makeLabelVolume,
    makeMaskVolume,
    makeScalarVolume,
    voxelCount,
} from "./volume.js";
export type {
    Geometry,
    LabelVolume,
    ScalarData,
    ScalarVolume,
    Triple,
} from "./volume.js";

/** Per-region scores as stored in a metrics record; null marks undefined. */
export interface RegionRecord {
    region: number;
    name: string;
    dice: number | null;
    hd95_mm: number | null;
    asd_mm: number | null;
}

/** One evaluated (reference, prediction) pair: 13 region entries in order. */
export interface PatientRecord {
    patient: string;
    label_encoding: string;
    regions: RegionRecord[];
}

/** A balanced fan split of the small-bowel mask, as reported by the tool. */
export interface FanPartition {
    label_encoding: string;
    root_world: [number, number, number];
    plane: string;
    start_angle: number;
    sweep: number;
    region_order: number[];
    cut_angles: number[];
    achieved_fractions: number[];
}

export interface EvaluateOptions {
    /** Patient id recorded in the result. */
    patient?: string;
    /** Worker threads for the distance transforms. */
    workers?: number;
}

export interface FanOptions {
    /** Fan apex in world coordinates (mm). */
    rootWorld: [number, number, number];
    /** Projection plane; the default is coronal. */
    plane?: "coronal" | "axial" | "sagittal";
    /** Angle measured as zero, in degrees; the default is 90 (superior). */
    startAngleDeg?: number;
    /** Angular direction; the default is counterclockwise. */
    sweep?: "ccw" | "cw";
    /** Regions treated as small bowel; the default is 9,10,11,12. */
    bowelRegions?: number[];
    /** Regions assigned to the sectors in angular order; default 9,10,11,12. */
    regionOrder?: number[];
}

export interface FanResult {
    partition: FanPartition;
    /** Input labels with the bowel regions replaced by the balanced sectors. */
    labels: LabelVolume;
}

function finite(value: number, what: string): number {
    if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new InputError(`${what} must be a finite number, got ${value}`);
    }
    return value;
}

function threadArgs(workers?: number): string[] {
    if (workers === undefined) {
        return [];
    }
    if (!Number.isInteger(workers) || workers < 1) {
        throw new InputError(`workers must be a positive integer, got ${workers}`);
    }
    return [`--threads=${workers}`];
}

/**
 * Score a prediction against reference labels: Dice, 95th percentile
 * Hausdorff distance, and average surface distance for each of the 13
 * regions. Regions empty in both volumes score null throughout; regions
 * empty in exactly one score Dice 0 with null distances.
 */
export function evaluatePair(
    gt: LabelVolume,
    pred: LabelVolume,
    options: EvaluateOptions = {},
): PatientRecord {
    return withWorkspace((dir) => {
        const gtPath = path.join(dir, "gt.nii");
        const predPath = path.join(dir, "pred.nii");
        writeVolume(gt, gtPath);
        writeVolume(pred, predPath);
        const args = [
            "evaluate",
            `--gt=${gtPath}`,
            `--pred=${predPath}`,
            `--patient=${options.patient ?? ""}`,
            ...threadArgs(options.workers),
        ];
        return JSON.parse(runCli(args).stdout) as PatientRecord;
    });
}

function checkMask(mask: LabelVolume, what: string): void {
    for (let i = 0; i < mask.data.length; i++) {
        if (mask.data[i] > 1) {
            throw new InputError(`${what} must be binary, got value ${mask.data[i]}`);
        }
    }
}

function maskMetrics(a: LabelVolume, b: LabelVolume): RegionRecord {
    checkMask(a, "first mask");
    checkMask(b, "second mask");
    return evaluatePair(a, b).regions[0];
}

/**
 * Dice overlap between two binary masks on a shared grid. Null when both
 * masks are empty.
 */
export function dice(a: LabelVolume, b: LabelVolume): number | null {
    return maskMetrics(a, b).dice;
}

/**
 * Symmetric 95th percentile Hausdorff distance in mm between two binary
 * masks. Null when either mask is empty.
 */
export function hd95(a: LabelVolume, b: LabelVolume): number | null {
    return maskMetrics(a, b).hd95_mm;
}

/**
 * Symmetric average surface distance in mm between two binary masks. Null
 * when either mask is empty.
 */
export function asd(a: LabelVolume, b: LabelVolume): number | null {
    return maskMetrics(a, b).asd_mm;
}

/**
 * Grow every labeled region by a metric radius. Background voxels within
 * `radiusMm` of any region take the label of the nearest labeled voxel;
 * labeled voxels are left untouched.
 */
export function dilateLabels(labels: LabelVolume, radiusMm: number): LabelVolume {
    finite(radiusMm, "radius_mm");
    return withWorkspace((dir) => {
        const inPath = path.join(dir, "labels.nii");
        const outDir = path.join(dir, "out");
        writeVolume(labels, inPath);
        runCli([
            "preprocess",
            `--labels=${inPath}`,
            `--out-dir=${outDir}`,
            "--skip-crop",
            `--radius-mm=${radiusMm}`,
        ]);
        return readLabels(path.join(outDir, "labels.nii.gz"));
    });
}

export interface CropResult {
    labels: LabelVolume;
    /** Present when a CT volume was cropped alongside the labels. */
    ct?: ScalarVolume;
}

/**
 * Crop to the bounding box of all labeled voxels plus a metric margin,
 * clamped to the grid. The world placement of the kept voxels is preserved.
 * A CT volume on the same grid is cropped identically when given.
 */
export function cropWithMargin(
    labels: LabelVolume,
    marginMm: number,
    ct?: ScalarVolume,
): CropResult {
    finite(marginMm, "margin_mm");
    return withWorkspace((dir) => {
        const labelsPath = path.join(dir, "labels.nii");
        const outDir = path.join(dir, "out");
        writeVolume(labels, labelsPath);
        const args = [
            "preprocess",
            `--labels=${labelsPath}`,
            `--out-dir=${outDir}`,
            "--skip-dilate",
            `--margin-mm=${marginMm}`,
        ];
        if (ct) {
            const ctPath = path.join(dir, "ct.nii");
            writeVolume(ct, ctPath);
            args.splice(2, 0, `--ct=${ctPath}`);
        }
        runCli(args);
        const result: CropResult = { labels: readLabels(path.join(outDir, "labels.nii.gz")) };
        if (ct) {
            result.ct = readScalar(path.join(outDir, "ct.nii.gz"));
        }
        return result;
    });
}

/**
 * Re-split the small-bowel regions into four sectors of a fan around a root
 * point so that each sector holds as close to a quarter of the bowel voxels
 * as the angular order allows. Non-bowel labels pass through unchanged.
 */
export function balanceFan(labels: LabelVolume, options: FanOptions): FanResult {
    const root = options.rootWorld;
    if (!Array.isArray(root) || root.length !== 3) {
        throw new InputError(`root_world needs three components, got ${JSON.stringify(root)}`);
    }
    for (const v of root) {
        finite(v, "root_world");
    }
    return withWorkspace((dir) => {
        const inPath = path.join(dir, "labels.nii");
        const outLabels = path.join(dir, "fanned.nii");
        const outJson = path.join(dir, "fan.json");
        writeVolume(labels, inPath);
        const args = [
            "fan-partition",
            `--labels=${inPath}`,
            `--root=${root.join(",")}`,
            `--out-labels=${outLabels}`,
            `--out-json=${outJson}`,
        ];
        if (options.plane) {
            args.push(`--plane=${options.plane}`);
        }
        if (options.startAngleDeg !== undefined) {
            args.push(`--start-angle-deg=${finite(options.startAngleDeg, "start_angle_deg")}`);
        }
        if (options.sweep) {
            args.push(`--sweep=${options.sweep}`);
        }
        if (options.bowelRegions) {
            args.push(`--bowel-regions=${options.bowelRegions.join(",")}`);
        }
        if (options.regionOrder) {
            args.push(`--region-order=${options.regionOrder.join(",")}`);
        }
        runCli(args);
        const partition = JSON.parse(fs.readFileSync(outJson, "utf-8")) as FanPartition;
        return { partition, labels: readLabels(outLabels) };
    });
}
