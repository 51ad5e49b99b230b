/** @file Minimal single-file NIfTI-1 reader/writer.

Covers the subset the toolkit exchanges: little-endian `.nii` / `.nii.gz`,
3D, axis-aligned grids, datatypes uint8/int16/uint16/float32. The grid
placement is read from the sform (diagonal direction only) and written as an
sform. Unused header fields are zeroed on write so identical volumes produce
identical files.
*/

import * as fs from "node:fs";
import * as path from "node:path";
import * as zlib from "node:zlib";

import { InputError, IoError } from "./errors.js";
import {
    Geometry,
    LabelVolume,
    MAX_LABEL,
    ScalarData,
    ScalarVolume,
    Triple,
    makeGeometry,
    voxelCount,
} from "./volume.js";

const HEADER_SIZE = 348;
const VOX_OFFSET = HEADER_SIZE + 4;
const MAGIC = "n+1\0";
const DESCRIP = "rpcikit";
const UNITS_MM = 2;

interface DtypeSpec {
    code: number;
    bytes: number;
    ctor: new (buffer: ArrayBuffer, byteOffset: number, length: number) => ScalarData;
    integer: boolean;
}

const DTYPES: DtypeSpec[] = [
    { code: 2, bytes: 1, ctor: Uint8Array, integer: true },
    { code: 4, bytes: 2, ctor: Int16Array, integer: true },
    { code: 16, bytes: 4, ctor: Float32Array, integer: false },
    { code: 512, bytes: 2, ctor: Uint16Array, integer: true },
];

function dtypeByCode(code: number): DtypeSpec | undefined {
    return DTYPES.find((d) => d.code === code);
}

function dtypeFor(data: ScalarData): DtypeSpec {
    const spec = DTYPES.find((d) => data instanceof d.ctor);
    if (!spec) {
        throw new InputError(`unsupported array type ${data.constructor.name}`);
    }
    return spec;
}

const LITTLE_ENDIAN_HOST = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

function readFileBytes(file: string): Uint8Array {
    let raw: Buffer;
    try {
        raw = fs.readFileSync(file);
    } catch (err) {
        throw new IoError(`cannot read ${file}: ${(err as Error).message}`);
    }
    if (raw.length >= 2 && raw[0] === 0x1f && raw[1] === 0x8b) {
        return zlib.gunzipSync(raw);
    }
    return raw;
}

function parseGeometry(view: DataView, file: string): Geometry {
    const dims: Triple = [
        view.getInt16(42, true),
        view.getInt16(44, true),
        view.getInt16(46, true),
    ];
    const spacing: Triple = [
        view.getFloat32(80, true),
        view.getFloat32(84, true),
        view.getFloat32(88, true),
    ];
    const sformCode = view.getInt16(254, true);
    const qformCode = view.getInt16(252, true);
    let origin: Triple = [0, 0, 0];
    if (sformCode > 0) {
        // srow_x/y/z are 4-vectors at 280/296/312; only diagonal direction
        // matrices are supported, so off-diagonals must vanish.
        const srow: number[][] = [];
        for (let r = 0; r < 3; r++) {
            const base = 280 + 16 * r;
            srow.push([
                view.getFloat32(base, true),
                view.getFloat32(base + 4, true),
                view.getFloat32(base + 8, true),
                view.getFloat32(base + 12, true),
            ]);
        }
        for (let r = 0; r < 3; r++) {
            for (let c = 0; c < 3; c++) {
                if (r !== c && srow[r][c] !== 0) {
                    throw new InputError(`${file}: unsupported non-diagonal direction matrix`);
                }
            }
            const diag = srow[r][r];
            if (!(diag > 0) || Math.abs(diag - spacing[r]) > 1e-4 * spacing[r]) {
                throw new InputError(
                    `${file}: sform diagonal ${diag} disagrees with pixdim ${spacing[r]}`,
                );
            }
        }
        origin = [srow[0][3], srow[1][3], srow[2][3]];
    } else if (qformCode > 0) {
        const b = view.getFloat32(256, true);
        const c = view.getFloat32(260, true);
        const d = view.getFloat32(264, true);
        if (b !== 0 || c !== 0 || d !== 0) {
            throw new InputError(`${file}: unsupported rotated qform`);
        }
        origin = [
            view.getFloat32(268, true),
            view.getFloat32(272, true),
            view.getFloat32(276, true),
        ];
    }
    try {
        return makeGeometry(dims, spacing, origin);
    } catch (err) {
        throw new InputError(`${file}: invalid grid: ${(err as Error).message}`);
    }
}

function parseVolume(raw: Uint8Array, file: string): ScalarVolume & { dtype: DtypeSpec } {
    if (raw.length < HEADER_SIZE) {
        throw new InputError(`${file}: file shorter than the ${HEADER_SIZE}-byte header`);
    }
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    if (view.getInt32(0, true) !== HEADER_SIZE) {
        throw new InputError(`${file}: malformed header (sizeof_hdr=${view.getInt32(0, true)})`);
    }
    const magic = String.fromCharCode(raw[344], raw[345], raw[346], raw[347]);
    if (magic !== MAGIC) {
        throw new InputError(`${file}: not a single-file NIfTI-1 volume`);
    }
    const ndim = view.getInt16(40, true);
    if (ndim !== 3) {
        throw new InputError(`${file}: only 3D volumes are supported, got dim[0]=${ndim}`);
    }
    const geometry = parseGeometry(view, file);
    const code = view.getInt16(70, true);
    const dtype = dtypeByCode(code);
    if (!dtype) {
        throw new InputError(`${file}: unsupported datatype code ${code}`);
    }
    let voxOffset = Math.trunc(view.getFloat32(108, true));
    if (voxOffset < HEADER_SIZE) {
        voxOffset = HEADER_SIZE;
    }
    const count = voxelCount(geometry.dims);
    const nbytes = count * dtype.bytes;
    if (raw.length < voxOffset + nbytes) {
        throw new InputError(`${file}: truncated data section`);
    }
    let data: ScalarData;
    if (LITTLE_ENDIAN_HOST) {
        // Typed arrays need an aligned offset; copy into a fresh buffer.
        const section = new Uint8Array(nbytes);
        section.set(raw.subarray(voxOffset, voxOffset + nbytes));
        data = new dtype.ctor(section.buffer, 0, count);
    } else {
        data = new dtype.ctor(new ArrayBuffer(nbytes), 0, count);
        const section = new DataView(raw.buffer, raw.byteOffset + voxOffset, nbytes);
        for (let i = 0; i < count; i++) {
            data[i] = readElement(section, dtype.code, i);
        }
    }
    return { geometry, data, dtype };
}

function readElement(view: DataView, code: number, index: number): number {
    switch (code) {
        case 2:
            return view.getUint8(index);
        case 4:
            return view.getInt16(index * 2, true);
        case 16:
            return view.getFloat32(index * 4, true);
        default:
            return view.getUint16(index * 2, true);
    }
}

/** Read a `.nii`/`.nii.gz` file as a scalar volume. */
export function readScalar(file: string): ScalarVolume {
    const { geometry, data } = parseVolume(readFileBytes(file), file);
    return { geometry, data };
}

/**
 * Read a `.nii`/`.nii.gz` file as a label volume, validating the 0..13
 * alphabet.
 */
export function readLabels(file: string): LabelVolume {
    const { geometry, data, dtype } = parseVolume(readFileBytes(file), file);
    if (!dtype.integer) {
        throw new InputError(`${file}: unsupported datatype code ${dtype.code} for labels`);
    }
    const out = new Uint8Array(data.length);
    for (let i = 0; i < data.length; i++) {
        const v = data[i];
        if (v < 0 || v > MAX_LABEL) {
            throw new InputError(`${file}: label out of range: ${v}`);
        }
        out[i] = v;
    }
    return { geometry, data: out };
}

/** Serialize a volume to uncompressed NIfTI-1 bytes. */
export function volumeToBytes(volume: ScalarVolume | LabelVolume): Uint8Array {
    const { geometry, data } = volume;
    const count = voxelCount(geometry.dims);
    if (data.length !== count) {
        throw new InputError(`data length ${data.length} does not match dims ${geometry.dims}`);
    }
    const dtype = dtypeFor(data);
    const out = new Uint8Array(VOX_OFFSET + count * dtype.bytes);
    const view = new DataView(out.buffer);

    view.setInt32(0, HEADER_SIZE, true);
    view.setInt16(40, 3, true);
    for (let a = 0; a < 3; a++) {
        view.setInt16(42 + 2 * a, geometry.dims[a], true);
    }
    for (let a = 3; a < 7; a++) {
        view.setInt16(42 + 2 * a, 1, true);
    }
    view.setInt16(70, dtype.code, true);
    view.setInt16(72, dtype.bytes * 8, true);
    for (let a = 0; a < 3; a++) {
        view.setFloat32(80 + 4 * a, geometry.spacing[a], true);
    }
    view.setFloat32(108, VOX_OFFSET, true);
    view.setUint8(123, UNITS_MM);
    for (let i = 0; i < DESCRIP.length; i++) {
        out[148 + i] = DESCRIP.charCodeAt(i);
    }
    view.setInt16(254, 1, true);
    for (let r = 0; r < 3; r++) {
        const base = 280 + 16 * r;
        view.setFloat32(base + 4 * r, geometry.spacing[r], true);
        view.setFloat32(base + 12, geometry.origin[r], true);
    }
    for (let i = 0; i < MAGIC.length; i++) {
        out[344 + i] = MAGIC.charCodeAt(i);
    }

    if (LITTLE_ENDIAN_HOST) {
        out.set(new Uint8Array(data.buffer, data.byteOffset, count * dtype.bytes), VOX_OFFSET);
    } else {
        const section = new DataView(out.buffer, VOX_OFFSET);
        for (let i = 0; i < count; i++) {
            writeElement(section, dtype.code, i, data[i]);
        }
    }
    return out;
}

function writeElement(view: DataView, code: number, index: number, value: number): void {
    switch (code) {
        case 2:
            view.setUint8(index, value);
            break;
        case 4:
            view.setInt16(index * 2, value, true);
            break;
        case 16:
            view.setFloat32(index * 4, value, true);
            break;
        default:
            view.setUint16(index * 2, value, true);
    }
}

/**
 * Write a volume to `.nii` or `.nii.gz` (chosen by suffix). The write is
 * atomic and gzip output carries no timestamp, so identical volumes yield
 * identical files.
 */
export function writeVolume(volume: ScalarVolume | LabelVolume, file: string): void {
    let blob: Uint8Array = volumeToBytes(volume);
    if (file.endsWith(".gz")) {
        blob = zlib.gzipSync(blob);
    }
    const dir = path.dirname(file);
    const tmp = path.join(dir, `${path.basename(file)}.tmp${process.pid}`);
    try {
        fs.mkdirSync(dir, { recursive: true });
        fs.writeFileSync(tmp, blob);
        fs.renameSync(tmp, file);
    } catch (err) {
        fs.rmSync(tmp, { force: true });
        throw new IoError(`cannot write ${file}: ${(err as Error).message}`);
    }
}
