"""Interobserver agreement on multi-observer label sets.

Because a region outline drawn by one observer rarely matches another
voxel-for-voxel, each observer is scored against the union of the remaining
observers' masks for that region, one region at a time. A model is scored
against each observer individually and the per-region values are averaged, so
human and model numbers live on comparable scales.

Aggregate tables pool (observer, patient) samples per region for the human
columns and (observer, patient) model-vs-observer samples for the model
columns, with undefined values counted and excluded rather than imputed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError
from .metrics import PatientMetrics, RegionMetrics, region_metrics_from_masks
from .parallel import run_tasks
from .volume import (
    NUM_REGIONS,
    LabelVolume,
    as_region,
    extract_region_mask,
    require_same_grid,
)

_METRIC_FIELDS = ("dice", "hd95_mm", "asd_mm")


@dataclass(frozen=True)
class ObserverSet:
    """Label volumes drawn independently by several observers on one scan."""

    patient: str
    observers: Mapping[str, LabelVolume]

    def __post_init__(self):
        ids = sorted(self.observers)
        if len(ids) < 2:
            raise InputError(f"need at least 2 observers, got {len(ids)}")
        first = self.observers[ids[0]]
        for oid in ids[1:]:
            require_same_grid(first, self.observers[oid], f"observers {ids[0]}/{oid}")
        object.__setattr__(self, "observers", dict(self.observers))

    def ids(self) -> List[str]:
        return sorted(self.observers)


def region_union(volumes: Sequence[LabelVolume], r) -> np.ndarray:
    """Union of one region's masks across several label volumes."""
    if not volumes:
        raise InputError("region union of zero volumes")
    region = as_region(r)
    out = extract_region_mask(volumes[0], region)
    for vol in volumes[1:]:
        if vol.dims != volumes[0].dims:
            raise InputError(f"dims mismatch: {vol.dims} vs {volumes[0].dims}")
        out = out | extract_region_mask(vol, region)
    return out


def observer_vs_rest(
    obs: ObserverSet, backend: Optional[str] = None, workers: Optional[int] = None
) -> Dict[str, PatientMetrics]:
    """Score each observer against the union of the others, per region."""
    ids = obs.ids()
    spacing = obs.observers[ids[0]].spacing

    def one(task: Tuple[str, int]) -> Tuple[str, RegionMetrics]:
        oid, r = task
        rest = [obs.observers[other] for other in ids if other != oid]
        return oid, region_metrics_from_masks(
            r,
            extract_region_mask(obs.observers[oid], r),
            region_union(rest, r),
            spacing,
            backend=backend,
        )

    tasks = [(oid, r) for oid in ids for r in range(NUM_REGIONS)]
    results = run_tasks(one, tasks, workers=workers)
    grouped: Dict[str, List[RegionMetrics]] = {oid: [] for oid in ids}
    for oid, rm in results:
        grouped[oid].append(rm)
    return {
        oid: PatientMetrics(patient=obs.patient, regions=tuple(grouped[oid])) for oid in ids
    }


def model_observer_pairs(
    pred: LabelVolume,
    obs: ObserverSet,
    backend: Optional[str] = None,
    workers: Optional[int] = None,
) -> Dict[str, PatientMetrics]:
    """Score a prediction against each observer separately."""
    ids = obs.ids()
    require_same_grid(pred, obs.observers[ids[0]], "prediction/observers")
    spacing = pred.spacing

    def one(task: Tuple[str, int]) -> Tuple[str, RegionMetrics]:
        oid, r = task
        return oid, region_metrics_from_masks(
            r,
            extract_region_mask(obs.observers[oid], r),
            extract_region_mask(pred, r),
            spacing,
            backend=backend,
        )

    tasks = [(oid, r) for oid in ids for r in range(NUM_REGIONS)]
    results = run_tasks(one, tasks, workers=workers)
    grouped: Dict[str, List[RegionMetrics]] = {oid: [] for oid in ids}
    for oid, rm in results:
        grouped[oid].append(rm)
    return {
        oid: PatientMetrics(patient=obs.patient, regions=tuple(grouped[oid])) for oid in ids
    }


def _mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def model_vs_observers(
    pred: LabelVolume,
    obs: ObserverSet,
    backend: Optional[str] = None,
    workers: Optional[int] = None,
) -> PatientMetrics:
    """Prediction scored against each observer, averaged per region. A value
    is undefined only when it is undefined against every observer."""
    pairs = model_observer_pairs(pred, obs, backend=backend, workers=workers)
    regions = []
    for r in range(NUM_REGIONS):
        per_field = {
            f: _mean_defined([pairs[oid].regions[r].__getattribute__(f) for oid in sorted(pairs)])
            for f in _METRIC_FIELDS
        }
        regions.append(RegionMetrics(region=r, dice=per_field["dice"],
                                     hd95_mm=per_field["hd95_mm"], asd_mm=per_field["asd_mm"]))
    return PatientMetrics(patient=obs.patient, regions=tuple(regions))


@dataclass(frozen=True)
class AgreementCell:
    """Mean and spread of one metric series; ``undefined`` counts excluded
    samples."""

    n: int
    mean: Optional[float]
    std: Optional[float]
    undefined: int


@dataclass(frozen=True)
class AgreementRow:
    region: Optional[int]  # None for the pooled overall row
    label: str
    cells: Mapping[str, AgreementCell]


@dataclass(frozen=True)
class AgreementReport:
    """Per-region agreement table: human columns, model columns when present."""

    rows: Tuple[AgreementRow, ...]
    has_model: bool
    n_patients: int
    n_observer_samples: int

    def row(self, region: Optional[int]) -> AgreementRow:
        for r in self.rows:
            if r.region == region:
                return r
        raise InputError(f"no such region row: {region}")


def _cell(values: List[Optional[float]]) -> AgreementCell:
    defined = np.asarray([v for v in values if v is not None], dtype=np.float64)
    undefined = len(values) - defined.size
    if defined.size == 0:
        return AgreementCell(n=0, mean=None, std=None, undefined=undefined)
    std = 0.0 if defined.size == 1 else float(np.std(defined, ddof=1))
    return AgreementCell(n=int(defined.size), mean=float(np.mean(defined)), std=std,
                         undefined=undefined)


def aggregate_agreement(
    human: Sequence[Mapping[str, PatientMetrics]],
    model: Optional[Sequence[Mapping[str, PatientMetrics]]] = None,
) -> AgreementReport:
    """Pool per-(observer, patient) samples into the 13-region + overall table.

    ``human`` holds one observer-vs-rest result per patient; ``model``, when
    given, holds the matching model-vs-observer pairwise results.
    """
    if not human:
        raise InputError("no agreement samples to aggregate")
    if model is not None and len(model) != len(human):
        raise InputError(
            f"model results cover {len(model)} patients, human results {len(human)}"
        )

    def series(results, region: Optional[int], field: str) -> List[Optional[float]]:
        out: List[Optional[float]] = []
        for per_patient in results:
            for oid in sorted(per_patient):
                pm = per_patient[oid]
                if region is None:
                    out.extend(getattr(rm, field) for rm in pm.regions)
                else:
                    out.append(getattr(pm.regions[region], field))
        return out

    rows = []
    for region in list(range(NUM_REGIONS)) + [None]:
        cells = {}
        for field, key in (("dice", "dice"), ("hd95_mm", "hd95"), ("asd_mm", "asd")):
            cells[f"{key}_h"] = _cell(series(human, region, field))
            if model is not None:
                cells[f"{key}_m"] = _cell(series(model, region, field))
        label = "Overall" if region is None else str(region)
        rows.append(AgreementRow(region=region, label=label, cells=cells))

    n_observer_samples = sum(len(per_patient) for per_patient in human)
    return AgreementReport(
        rows=tuple(rows),
        has_model=model is not None,
        n_patients=len(human),
        n_observer_samples=n_observer_samples,
    )
