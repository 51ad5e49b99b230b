"""Cohort-level plumbing: manifests, folds, aggregation, and report tables.

A study manifest is a JSON file listing patients with their volume paths
(reference labels, model predictions keyed by model name, observer labels
keyed by observer id). Aggregation turns per-patient metrics into the
mean/std plus boxplot five-number summaries used in the result tables, with
undefined values counted and excluded, never imputed. Tables render to CSV
(human-facing, fixed precision) or JSON (full precision, lossless round
trip); every report repeats the label encoding so files stay
self-describing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .agreement import AgreementReport
from .errors import InputError
from .metrics import PatientMetrics, RegionMetrics
from .volume import (
    LABEL_ENCODING_NOTE,
    NUM_REGIONS,
    REGION_NAMES,
    LabelVolume,
    region_voxel_counts,
)

_METRIC_KEYS = ("dice", "hd95_mm", "asd_mm")


# ---------------------------------------------------------------------------
# dispersion summaries


@dataclass(frozen=True)
class Summary:
    """Mean/std plus the Tukey boxplot five-number summary of one sample set.

    ``std`` is the sample standard deviation (ddof=1), 0.0 for a single
    sample. Quartiles use linear interpolation; whiskers are the most extreme
    samples inside the 1.5*IQR fences and ``outliers`` counts samples beyond
    them.
    """

    n: int
    mean: float
    std: float
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: int


def summarize(values: Sequence[float]) -> Summary:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InputError("summarize needs a non-empty 1-D sample set")
    if not np.all(np.isfinite(v)):
        raise InputError("summarize got non-finite samples")
    n = int(v.size)
    mean = float(np.mean(v))
    std = 0.0 if n == 1 else float(np.std(v, ddof=1))
    q1, median, q3 = (float(q) for q in np.percentile(v, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return Summary(
        n=n,
        mean=mean,
        std=std,
        q1=q1,
        median=median,
        q3=q3,
        whisker_lo=float(inside.min()),
        whisker_hi=float(inside.max()),
        outliers=int(n - inside.size),
    )


@dataclass(frozen=True)
class AggregateRow:
    """One (region, metric) sample pool; ``region`` None is the overall pool
    across regions."""

    region: Optional[int]
    metric: str
    summary: Optional[Summary]
    undefined: int


@dataclass(frozen=True)
class Aggregate:
    rows: Tuple[AggregateRow, ...]
    warnings: Tuple[str, ...]
    n_patients: int

    def row(self, region: Optional[int], metric: str) -> Optional[AggregateRow]:
        for r in self.rows:
            if r.region == region and r.metric == metric:
                return r
        return None


def aggregate(per_patient: Sequence[PatientMetrics]) -> Aggregate:
    """Pool per-patient metrics per region, plus an overall pool over every
    (patient, region) sample. Regions with zero defined samples for a metric
    get no row, only a warning."""
    if not per_patient:
        raise InputError("no patient metrics to aggregate")
    rows: List[AggregateRow] = []
    warnings: List[str] = []
    for metric in _METRIC_KEYS:
        for region in range(NUM_REGIONS):
            values = [getattr(pm.regions[region], metric) for pm in per_patient]
            defined = [v for v in values if v is not None]
            undefined = len(values) - len(defined)
            if not defined:
                warnings.append(
                    f"region {region}: no defined {metric} samples "
                    f"({undefined} undefined), row omitted"
                )
                continue
            rows.append(
                AggregateRow(
                    region=region, metric=metric, summary=summarize(defined), undefined=undefined
                )
            )
        pooled = [
            getattr(rm, metric)
            for pm in per_patient
            for rm in pm.regions
            if getattr(rm, metric) is not None
        ]
        pooled_undef = len(per_patient) * NUM_REGIONS - len(pooled)
        if not pooled:
            raise InputError(f"no defined {metric} samples in the whole cohort")
        rows.append(
            AggregateRow(
                region=None, metric=metric, summary=summarize(pooled), undefined=pooled_undef
            )
        )
    return Aggregate(rows=tuple(rows), warnings=tuple(warnings), n_patients=len(per_patient))


def voxel_distribution(volumes: Sequence[LabelVolume]) -> np.ndarray:
    """Percentage of all foreground voxels per region, pooled over volumes."""
    counts = np.zeros(NUM_REGIONS, dtype=np.int64)
    for vol in volumes:
        counts += region_voxel_counts(vol)
    total = int(counts.sum())
    if total == 0:
        raise InputError("empty mask: no labeled voxels in any volume")
    return counts / total * 100.0


# ---------------------------------------------------------------------------
# cross-validation folds


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(self.assignment))
        if self.k < 2:
            raise InputError(f"k must be at least 2, got {self.k}")
        for pid, f in self.assignment.items():
            if not 0 <= f < self.k:
                raise InputError(f"fold index {f} for {pid!r} outside 0..{self.k - 1}")

    def fold_sizes(self) -> List[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes

    def folds(self) -> List[List[str]]:
        out: List[List[str]] = [[] for _ in range(self.k)]
        for pid in sorted(self.assignment):
            out[self.assignment[pid]].append(pid)
        return out


def make_folds(ids: Sequence[str], k: int, seed: int) -> FoldAssignment:
    """Deterministic near-equal folds: ids are sorted, shuffled with
    PCG64(seed), and dealt round-robin, so the result is independent of the
    input order."""
    ids = [str(i) for i in ids]
    if not ids:
        raise InputError("no ids to split into folds")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})[0]
        raise InputError(f"duplicate id: {dup!r}")
    if k < 2:
        raise InputError(f"k must be at least 2, got {k}")
    if k > len(ids):
        raise InputError(f"k={k} exceeds the {len(ids)} available ids")
    ordered = sorted(ids)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(len(ordered))
    assignment = {ordered[int(perm[j])]: j % k for j in range(len(ordered))}
    return FoldAssignment(k=k, assignment=assignment)


# ---------------------------------------------------------------------------
# study manifest


@dataclass(frozen=True)
class PatientEntry:
    id: str
    ct: Optional[Path] = None
    reference: Optional[Path] = None
    predictions: Mapping[str, Path] = field(default_factory=dict)
    observers: Mapping[str, Path] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "predictions", dict(self.predictions))
        object.__setattr__(self, "observers", dict(self.observers))


@dataclass(frozen=True)
class StudyManifest:
    path: Path
    patients: Tuple[PatientEntry, ...]

    def ids(self) -> List[str]:
        return [p.id for p in self.patients]

    def entry(self, pid: str) -> PatientEntry:
        for p in self.patients:
            if p.id == pid:
                return p
        raise InputError(f"unknown patient id: {pid!r}")

    def model_names(self) -> List[str]:
        names = {m for p in self.patients for m in p.predictions}
        return sorted(names)


def _resolve(base: Path, rel: str, pid: str) -> Path:
    p = Path(rel)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise InputError(f"missing file for patient {pid!r}: {p}")
    return p


def load_manifest(path) -> StudyManifest:
    """Read and validate a study manifest; all relative paths resolve against
    the manifest's directory and must exist."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"malformed manifest {path}: {e}") from e
    if not isinstance(raw, dict) or not isinstance(raw.get("patients"), list):
        raise InputError(f"malformed manifest {path}: expected an object with a 'patients' list")
    if not raw["patients"]:
        raise InputError(f"malformed manifest {path}: empty patient list")
    base = path.parent
    seen = set()
    patients: List[PatientEntry] = []
    for item in raw["patients"]:
        if not isinstance(item, dict) or not isinstance(item.get("id"), str) or not item["id"]:
            raise InputError(f"malformed manifest {path}: every patient needs a string id")
        pid = item["id"]
        if pid in seen:
            raise InputError(f"duplicate patient id: {pid!r}")
        seen.add(pid)

        def maybe(key: str) -> Optional[Path]:
            return _resolve(base, item[key], pid) if item.get(key) else None

        def mapping(key: str) -> Dict[str, Path]:
            sub = item.get(key) or {}
            if not isinstance(sub, dict):
                raise InputError(f"malformed manifest {path}: {key!r} of {pid!r} must be a map")
            return {str(k): _resolve(base, v, pid) for k, v in sub.items()}

        patients.append(
            PatientEntry(
                id=pid,
                ct=maybe("ct"),
                reference=maybe("reference"),
                predictions=mapping("predictions"),
                observers=mapping("observers"),
            )
        )
    return StudyManifest(path=path, patients=tuple(patients))


# ---------------------------------------------------------------------------
# per-patient metric records (JSON)


def patient_metrics_to_dict(pm: PatientMetrics) -> dict:
    return {
        "patient": pm.patient,
        "label_encoding": LABEL_ENCODING_NOTE,
        "regions": [
            {
                "region": rm.region,
                "name": REGION_NAMES[rm.region],
                "dice": rm.dice,
                "hd95_mm": rm.hd95_mm,
                "asd_mm": rm.asd_mm,
            }
            for rm in pm.regions
        ],
    }


def patient_metrics_from_dict(d: Mapping) -> PatientMetrics:
    try:
        regions = tuple(
            RegionMetrics(
                region=int(r["region"]),
                dice=None if r["dice"] is None else float(r["dice"]),
                hd95_mm=None if r["hd95_mm"] is None else float(r["hd95_mm"]),
                asd_mm=None if r["asd_mm"] is None else float(r["asd_mm"]),
            )
            for r in d["regions"]
        )
        return PatientMetrics(patient=str(d["patient"]), regions=regions)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed metrics record: {e}") from e


# ---------------------------------------------------------------------------
# report tables


@dataclass(frozen=True)
class TableCell:
    """One metric column entry: sample count, mean/std, excluded-sample count,
    and (JSON only) the boxplot summary when available."""

    n: int
    mean: Optional[float]
    std: Optional[float]
    excluded: int
    q1: Optional[float] = None
    median: Optional[float] = None
    q3: Optional[float] = None
    whisker_lo: Optional[float] = None
    whisker_hi: Optional[float] = None
    outliers: Optional[int] = None


@dataclass(frozen=True)
class TableRow:
    region: Optional[int]  # None = pooled overall row
    cells: Tuple[TableCell, ...]
    voxel_pct: Optional[float] = None

    @property
    def label(self) -> str:
        return "Overall" if self.region is None else str(self.region)

    @property
    def name(self) -> str:
        return "" if self.region is None else REGION_NAMES[self.region]


@dataclass(frozen=True)
class Table:
    """A rendered-ready result table (performance or agreement layout)."""

    kind: str
    columns: Tuple[str, ...]
    rows: Tuple[TableRow, ...]
    has_voxel_pct: bool
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "metadata", dict(self.metadata))
        for row in self.rows:
            if len(row.cells) != len(self.columns):
                raise InputError("table row does not match column count")


_PERF_COLUMNS = ("Dice", "HD95 (mm)", "ASD (mm)")


def _cell_from_aggregate(row: Optional[AggregateRow]) -> TableCell:
    if row is None or row.summary is None:
        return TableCell(n=0, mean=None, std=None, excluded=0 if row is None else row.undefined)
    s = row.summary
    return TableCell(
        n=s.n,
        mean=s.mean,
        std=s.std,
        excluded=row.undefined,
        q1=s.q1,
        median=s.median,
        q3=s.q3,
        whisker_lo=s.whisker_lo,
        whisker_hi=s.whisker_hi,
        outliers=s.outliers,
    )


def build_performance_table(
    agg: Aggregate, voxel_pct: Optional[np.ndarray] = None, metadata: Optional[dict] = None
) -> Table:
    """Per-region Dice/HD95/ASD table; regions with no defined samples at all
    are dropped (they are already in ``agg.warnings``)."""
    if voxel_pct is not None and len(voxel_pct) != NUM_REGIONS:
        raise InputError(f"voxel distribution needs {NUM_REGIONS} entries")
    rows: List[TableRow] = []
    for region in list(range(NUM_REGIONS)) + [None]:
        per_metric = [agg.row(region, m) for m in _METRIC_KEYS]
        if region is not None and all(r is None for r in per_metric):
            continue
        pct: Optional[float] = None
        if voxel_pct is not None:
            pct = 100.0 if region is None else float(voxel_pct[region])
        rows.append(
            TableRow(
                region=region,
                cells=tuple(_cell_from_aggregate(r) for r in per_metric),
                voxel_pct=pct,
            )
        )
    meta = {"patients": agg.n_patients}
    if metadata:
        meta.update(metadata)
    return Table(
        kind="performance",
        columns=_PERF_COLUMNS,
        rows=tuple(rows),
        has_voxel_pct=voxel_pct is not None,
        metadata=meta,
    )


def _agreement_columns(has_model: bool) -> Tuple[Tuple[str, str], ...]:
    # (header, cell key) pairs, human/model interleaved per metric
    cols = []
    for base, unit, key in (("Dice", "", "dice"), ("HD95", " (mm)", "hd95"), ("ASD", " (mm)", "asd")):
        cols.append((f"{base}_H{unit}", f"{key}_h"))
        if has_model:
            cols.append((f"{base}_M{unit}", f"{key}_m"))
    return tuple(cols)


def build_agreement_table(report: AgreementReport, metadata: Optional[dict] = None) -> Table:
    """Table-shaped view of an agreement report: one column pair per metric
    (human, then model when present)."""
    cols = _agreement_columns(report.has_model)
    rows: List[TableRow] = []
    for arow in report.rows:
        cells = []
        for _, key in cols:
            c = arow.cells[key]
            cells.append(TableCell(n=c.n, mean=c.mean, std=c.std, excluded=c.undefined))
        if arow.region is not None and all(c.n == 0 for c in cells):
            continue
        rows.append(TableRow(region=arow.region, cells=tuple(cells)))
    meta = {
        "patients": report.n_patients,
        "observer_samples": report.n_observer_samples,
    }
    if metadata:
        meta.update(metadata)
    return Table(
        kind="agreement",
        columns=tuple(h for h, _ in cols),
        rows=tuple(rows),
        has_voxel_pct=False,
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# rendering and parsing


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def _cell_text(c: TableCell) -> str:
    if c.n == 0 or c.mean is None:
        return "n/a"
    return f"{_fmt(c.mean)} ± {_fmt(c.std if c.std is not None else 0.0)}"


def render_report(table: Table, fmt: str) -> str:
    """Render a table: ``csv`` is the fixed-precision human artifact, ``json``
    the lossless one (``parse_report`` inverts it exactly)."""
    if fmt == "csv":
        return _render_csv(table)
    if fmt == "json":
        return _render_json(table)
    raise InputError(f"unknown report format: {fmt!r}")


def _render_csv(table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"# {LABEL_ENCODING_NOTE}\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    header = ["Region", "Name"]
    if table.has_voxel_pct:
        header.append("Voxel %")
    for col in table.columns:
        header.extend([col, f"{col} n", f"{col} excluded"])
    writer.writerow(header)
    for row in table.rows:
        rec = [row.label, row.name]
        if table.has_voxel_pct:
            rec.append("" if row.voxel_pct is None else f"{row.voxel_pct:.2f}")
        for c in row.cells:
            rec.extend([_cell_text(c), str(c.n), str(c.excluded)])
        writer.writerow(rec)
    return buf.getvalue()


def _cell_to_json(c: TableCell) -> dict:
    return {
        "n": c.n,
        "mean": c.mean,
        "std": c.std,
        "excluded": c.excluded,
        "q1": c.q1,
        "median": c.median,
        "q3": c.q3,
        "whisker_lo": c.whisker_lo,
        "whisker_hi": c.whisker_hi,
        "outliers": c.outliers,
    }


def _render_json(table: Table) -> str:
    obj = {
        "kind": table.kind,
        "label_encoding": LABEL_ENCODING_NOTE,
        "columns": list(table.columns),
        "has_voxel_pct": table.has_voxel_pct,
        "metadata": dict(table.metadata),
        "rows": [
            {
                "region": row.region,
                "label": row.label,
                "name": row.name,
                "voxel_pct": row.voxel_pct,
                "cells": {col: _cell_to_json(c) for col, c in zip(table.columns, row.cells)},
            }
            for row in table.rows
        ],
    }
    return json.dumps(obj, indent=2) + "\n"


def parse_report(text: str, fmt: str) -> Table:
    """Inverse of :func:`render_report`. For JSON the round trip is exact; for
    CSV it is exact at the rendered-text level (the CSV carries no boxplot
    fields or metadata)."""
    if fmt == "csv":
        return _parse_csv(text)
    if fmt == "json":
        return _parse_json(text)
    raise InputError(f"unknown report format: {fmt!r}")


def _parse_region(label: str) -> Optional[int]:
    if label == "Overall":
        return None
    try:
        region = int(label)
    except ValueError:
        raise InputError(f"malformed report: bad region label {label!r}")
    if not 0 <= region < NUM_REGIONS:
        raise InputError(f"malformed report: region {region} out of range")
    return region


def _parse_cell_text(text: str, n: int, excluded: int) -> TableCell:
    if text == "n/a":
        return TableCell(n=n, mean=None, std=None, excluded=excluded)
    parts = text.split(" ± ")
    if len(parts) != 2:
        raise InputError(f"malformed report cell: {text!r}")
    try:
        return TableCell(n=n, mean=float(parts[0]), std=float(parts[1]), excluded=excluded)
    except ValueError as e:
        raise InputError(f"malformed report cell: {text!r}") from e


def _parse_csv(text: str) -> Table:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("malformed report: empty CSV")
    if header[:2] != ["Region", "Name"]:
        raise InputError("malformed report: unexpected CSV header")
    rest = header[2:]
    has_voxel = bool(rest) and rest[0] == "Voxel %"
    if has_voxel:
        rest = rest[1:]
    if len(rest) % 3 != 0:
        raise InputError("malformed report: ragged CSV header")
    columns = tuple(rest[i] for i in range(0, len(rest), 3))
    rows: List[TableRow] = []
    for rec in reader:
        expected = 2 + (1 if has_voxel else 0) + 3 * len(columns)
        if len(rec) != expected:
            raise InputError(f"malformed report: row has {len(rec)} fields, expected {expected}")
        region = _parse_region(rec[0])
        pos = 2
        pct = None
        if has_voxel:
            pct = float(rec[pos]) if rec[pos] else None
            pos += 1
        cells = []
        for _ in columns:
            cells.append(_parse_cell_text(rec[pos], int(rec[pos + 1]), int(rec[pos + 2])))
            pos += 3
        rows.append(TableRow(region=region, cells=tuple(cells), voxel_pct=pct))
    if not rows:
        raise InputError("malformed report: no data rows")
    kind = "agreement" if any("_H" in c for c in columns) else "performance"
    return Table(kind=kind, columns=columns, rows=tuple(rows), has_voxel_pct=has_voxel)


def _cell_from_json(d: Mapping) -> TableCell:
    try:
        return TableCell(
            n=int(d["n"]),
            mean=None if d["mean"] is None else float(d["mean"]),
            std=None if d["std"] is None else float(d["std"]),
            excluded=int(d["excluded"]),
            q1=None if d.get("q1") is None else float(d["q1"]),
            median=None if d.get("median") is None else float(d["median"]),
            q3=None if d.get("q3") is None else float(d["q3"]),
            whisker_lo=None if d.get("whisker_lo") is None else float(d["whisker_lo"]),
            whisker_hi=None if d.get("whisker_hi") is None else float(d["whisker_hi"]),
            outliers=None if d.get("outliers") is None else int(d["outliers"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed report cell: {e}") from e


def _parse_json(text: str) -> Table:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed report: {e}") from e
    try:
        columns = tuple(str(c) for c in obj["columns"])
        rows = []
        for r in obj["rows"]:
            cells = tuple(_cell_from_json(r["cells"][col]) for col in columns)
            rows.append(
                TableRow(
                    region=None if r["region"] is None else int(r["region"]),
                    cells=cells,
                    voxel_pct=None if r["voxel_pct"] is None else float(r["voxel_pct"]),
                )
            )
        return Table(
            kind=str(obj["kind"]),
            columns=columns,
            rows=tuple(rows),
            has_voxel_pct=bool(obj["has_voxel_pct"]),
            metadata=obj.get("metadata") or {},
        )
    except (KeyError, TypeError) as e:
        raise InputError(f"malformed report: {e}") from e
