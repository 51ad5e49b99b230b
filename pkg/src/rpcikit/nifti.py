"""Single-file NIfTI-1 reader/writer for the volume types.

Covers exactly the subset this toolkit needs: little-endian ``.nii`` /
``.nii.gz``, 3D only, datatypes uint8/int16/uint16/float32 for intensities and
uint8 (or another integer type within the label alphabet) for labels. The
grid placement is taken from the sform when ``sform_code > 0``, else from the
quaternion fields; files are always written with an sform. Header fields the
toolkit does not use (intent codes, slope/intercept, ...) are ignored on read
and zeroed on write, which also keeps outputs byte-reproducible.
"""

from __future__ import annotations

import gzip
import io
import os
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError
from .volume import (
    NUM_REGIONS,
    LabelVolume,
    ScalarVolume,
    Spacing,
    WorldTransform,
)

HEADER_SIZE = 348
MAGIC = b"n+1\x00"

_HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", 8),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", 8),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", 4),
        ("srow_y", "<f4", 4),
        ("srow_z", "<f4", 4),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert _HEADER_DTYPE.itemsize == HEADER_SIZE

_DTYPE_CODES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    16: np.dtype("<f4"),
    512: np.dtype("<u2"),
}
_CODE_FOR_DTYPE = {np.dtype(d.str.lstrip("<|=")): code for code, d in _DTYPE_CODES.items()}
_INTEGER_CODES = {2, 4, 512}
_UNITS_MM = 2

Volume = Union[ScalarVolume, LabelVolume]


def _read_file_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _quaternion_direction(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a_sq) if a_sq > 0 else 0.0
    direction = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    direction[:, 2] *= 1.0 if qfac == 0 else qfac
    return direction


def _parse_header(raw: bytes, path: Path):
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE)[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        # 1543569408 is 348 byte-swapped: a big-endian file.
        raise FormatError(f"{path}: malformed header (sizeof_hdr={int(hdr['sizeof_hdr'])})")
    magic = raw[344:HEADER_SIZE]  # hdr["magic"] would NUL-strip the S4 field
    if magic != MAGIC:
        raise FormatError(f"{path}: not a single-file NIfTI-1 volume (magic={magic!r})")
    ndim = int(hdr["dim"][0])
    if ndim != 3:
        raise FormatError(f"{path}: only 3D volumes are supported, got dim[0]={ndim}")
    dims = tuple(int(v) for v in hdr["dim"][1:4])
    if any(d <= 0 for d in dims):
        raise FormatError(f"{path}: non-positive dims {dims}")
    code = int(hdr["datatype"])
    if code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unsupported datatype code {code}")
    pixdim = np.asarray(hdr["pixdim"], dtype=np.float64)
    try:
        spacing = Spacing(*pixdim[1:4])
    except Exception as exc:
        raise FormatError(f"{path}: invalid pixdim {pixdim[1:4]}: {exc}") from exc

    if int(hdr["sform_code"]) > 0:
        affine = np.vstack([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]]).astype(np.float64)
        direction = affine[:, :3] / spacing.as_array()[None, :]
        origin = affine[:, 3]
    elif int(hdr["qform_code"]) > 0:
        direction = _quaternion_direction(
            float(hdr["quatern_b"]),
            float(hdr["quatern_c"]),
            float(hdr["quatern_d"]),
            float(pixdim[0]),
        )
        origin = np.array(
            [float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"])]
        )
    else:
        direction = np.eye(3)
        origin = np.zeros(3)
    try:
        transform = WorldTransform(origin=origin, direction=direction)
    except Exception as exc:
        raise FormatError(f"{path}: invalid grid transform: {exc}") from exc

    vox_offset = int(float(hdr["vox_offset"]))
    if vox_offset < HEADER_SIZE:
        vox_offset = HEADER_SIZE
    return dims, spacing, transform, code, vox_offset


def read_volume(path: "str | os.PathLike", kind: str = "scalar") -> Volume:
    """Read a ``.nii``/``.nii.gz`` file as a scalar or label volume.

    ``kind`` is ``"scalar"`` or ``"label"``; label data is validated against
    the 0..13 alphabet and returned as uint8.
    """
    if kind not in ("scalar", "label"):
        raise FormatError(f"unknown volume kind {kind!r}")
    path = Path(path)
    raw = _read_file_bytes(path)
    dims, spacing, transform, code, vox_offset = _parse_header(raw, path)
    dtype = _DTYPE_CODES[code]
    count = dims[0] * dims[1] * dims[2]
    nbytes = count * dtype.itemsize
    if len(raw) < vox_offset + nbytes:
        raise FormatError(f"{path}: truncated data section")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = np.ascontiguousarray(flat.reshape(dims, order="F"))

    if kind == "label":
        if code not in _INTEGER_CODES:
            raise FormatError(f"{path}: unsupported datatype code {code} for labels")
        if data.size and (int(data.min()) < 0 or int(data.max()) > NUM_REGIONS):
            bad = data[(data < 0) | (data > NUM_REGIONS)].flat[0]
            raise FormatError(f"{path}: label out of range: {int(bad)}")
        return LabelVolume(data=data.astype(np.uint8), spacing=spacing, transform=transform)
    return ScalarVolume(data=data, spacing=spacing, transform=transform)


def read_scalar(path) -> ScalarVolume:
    return read_volume(path, kind="scalar")


def read_labels(path) -> LabelVolume:
    return read_volume(path, kind="label")


def volume_to_bytes(v: Volume) -> bytes:
    """Serialize a volume to uncompressed NIfTI-1 bytes."""
    data = np.asarray(v.data)
    dtype = np.dtype(data.dtype)
    if dtype not in _CODE_FOR_DTYPE:
        raise FormatError(f"unsupported datatype {dtype}")
    code = _CODE_FOR_DTYPE[dtype]

    hdr = np.zeros(1, dtype=_HEADER_DTYPE)[0]
    hdr["sizeof_hdr"] = HEADER_SIZE
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = v.dims
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = dtype.itemsize * 8
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[1:4] = v.spacing.as_array()
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = float(HEADER_SIZE + 4)
    hdr["xyzt_units"] = _UNITS_MM
    hdr["descrip"] = b"rpcikit"
    hdr["sform_code"] = 1
    affine = v.transform.direction * v.spacing.as_array()[None, :]
    hdr["srow_x"] = np.append(affine[0], v.transform.origin[0]).astype(np.float32)
    hdr["srow_y"] = np.append(affine[1], v.transform.origin[1]).astype(np.float32)
    hdr["srow_z"] = np.append(affine[2], v.transform.origin[2]).astype(np.float32)
    hdr["magic"] = MAGIC

    payload = np.asfortranarray(data).tobytes(order="F")
    return hdr.tobytes() + b"\x00" * 4 + payload


def write_volume(v: Volume, path: "str | os.PathLike") -> None:
    """Write a volume; ``.gz`` suffix selects gzip. Writes are atomic and the
    gzip stream carries no timestamp, so identical volumes yield identical
    files."""
    path = Path(path)
    blob = volume_to_bytes(v)
    if path.name.endswith(".gz"):
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
            gz.write(blob)
        blob = buf.getvalue()
    write_bytes_atomic(path, blob)


def write_bytes_atomic(path: Path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(blob)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink(missing_ok=True)
