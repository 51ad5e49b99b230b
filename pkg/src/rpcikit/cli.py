"""Command-line front end.

Subcommands map one-to-one onto the library stages: ``phantom`` makes
synthetic data, ``preprocess`` crops and dilates label volumes, ``evaluate``
scores predictions (single pair or a whole manifest), ``agreement`` runs the
multi-observer comparison, ``fan-partition`` rebalances the small-bowel
sectors, ``folds`` deals cross-validation splits, and ``report`` re-renders
aggregate tables from stored per-patient records.

Exit codes: 0 success, 1 for anything wrong with inputs or flags, 2 for I/O
failures. All file outputs are written atomically and are byte-identical for
identical invocations.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, agreement, metrics, nifti, preprocess, priors, study
from .backends import BACKEND_ENV, active_backend, available_backends
from .errors import InputError
from .parallel import THREADS_ENV, worker_count
from .phantom import PhantomSpec, generate_phantom, perturb_labels
from .volume import LABEL_ENCODING_NOTE, NUM_REGIONS, LabelVolume

log = logging.getLogger("rpcikit")


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the normal error path (exit 1)
    instead of its built-in exit(2)."""

    def error(self, message):
        raise InputError(message)


def _triple(text: str, cast, what: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise InputError(f"{what} needs three comma-separated values, got {text!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as e:
        raise InputError(f"bad {what}: {text!r}") from e


def _int_list(text: str, what: str) -> List[int]:
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError as e:
        raise InputError(f"bad {what}: {text!r}") from e


def _write_text(path: Path, text: str) -> None:
    nifti.write_bytes_atomic(Path(path), text.encode("utf-8"))


def _log_config(cmd: str, **kv) -> None:
    pairs = " ".join(f"{k}={v}" for k, v in kv.items())
    log.info("%s: backend=%s threads=%d %s", cmd, active_backend(), worker_count(), pairs)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(
        dims=_triple(args.dims, int, "--dims"),
        spacing=_triple(args.spacing, float, "--spacing"),
        seed=args.seed,
        bowel_fraction=args.bowel_fraction,
    )
    _log_config("phantom", dims=spec.dims, spacing=spec.spacing, seed=spec.seed)
    ct, labels, config = generate_phantom(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nifti.write_volume(ct, out / "ct.nii.gz")
    nifti.write_volume(labels, out / "labels.nii.gz")

    bowel = np.isin(labels.data, [r + 1 for r in config.region_order])
    partition = priors.balance_fan(bowel, labels.geometry, config)
    _write_text(out / "fan.json", _fan_json(partition))

    if args.perturb_mm is not None:
        perturbed = perturb_labels(labels, args.perturb_mm, args.perturb_seed)
        nifti.write_volume(perturbed, out / "labels_perturbed.nii.gz")
    return 0


def _fan_json(partition: priors.FanPartition) -> str:
    cfg = partition.config
    obj = {
        "label_encoding": LABEL_ENCODING_NOTE,
        "root_world": list(cfg.root_world),
        "plane": cfg.plane,
        "start_angle": cfg.start_angle,
        "sweep": cfg.sweep,
        "region_order": list(cfg.region_order),
        "cut_angles": list(partition.cut_angles),
        "achieved_fractions": list(partition.achieved_fractions),
    }
    return json.dumps(obj, indent=2) + "\n"


def _cmd_preprocess(args) -> int:
    _log_config(
        "preprocess",
        labels=args.labels,
        ct=args.ct,
        margin_mm=args.margin_mm,
        radius_mm=args.radius_mm,
        skip_crop=args.skip_crop,
        skip_dilate=args.skip_dilate,
    )
    labels = nifti.read_labels(args.labels)
    ct = nifti.read_scalar(args.ct) if args.ct else None

    if not args.skip_crop:
        crop = preprocess.CropSpec(margin_mm=args.margin_mm)
        if ct is not None:
            ct, labels = preprocess.crop_with_margin(ct, labels, crop)
        else:
            labels = preprocess.crop_labels_with_margin(labels, crop)
    if not args.skip_dilate:
        labels = preprocess.dilate_labels(labels, preprocess.DilationSpec(radius_mm=args.radius_mm))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nifti.write_volume(labels, out / "labels.nii.gz")
    if ct is not None:
        nifti.write_volume(ct, out / "ct.nii.gz")
    return 0


def _pick_model(manifest: study.StudyManifest, requested: Optional[str]) -> str:
    names = manifest.model_names()
    if requested:
        if requested not in names:
            raise InputError(f"manifest has no predictions for model {requested!r} "
                             f"(available: {', '.join(names) or 'none'})")
        return requested
    if len(names) == 1:
        return names[0]
    if not names:
        raise InputError("manifest lists no predictions")
    raise InputError(f"manifest lists several models ({', '.join(names)}); pick one with --model")


def _cmd_evaluate(args) -> int:
    if args.manifest:
        if args.gt or args.pred:
            raise InputError("--manifest cannot be combined with --gt/--pred")
        return _evaluate_manifest(args)
    if not (args.gt and args.pred):
        raise InputError("evaluate needs either --gt and --pred, or --manifest")
    _log_config("evaluate", gt=args.gt, pred=args.pred)
    gt = nifti.read_labels(args.gt)
    pred = nifti.read_labels(args.pred)
    pm = metrics.evaluate_pair(gt, pred, patient=args.patient, workers=args.threads)
    text = json.dumps(study.patient_metrics_to_dict(pm), indent=2) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _evaluate_manifest(args) -> int:
    manifest = study.load_manifest(args.manifest)
    model = _pick_model(manifest, args.model)
    _log_config("evaluate", manifest=args.manifest, model=model, format=args.format)
    out = Path(args.out_dir) if args.out_dir else None
    if out is None:
        raise InputError("evaluate --manifest needs --out-dir")
    records_dir = out / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    results: List[metrics.PatientMetrics] = []
    references: List[LabelVolume] = []
    for entry in manifest.patients:
        if entry.reference is None:
            raise InputError(f"patient {entry.id!r} has no reference labels")
        if model not in entry.predictions:
            raise InputError(f"patient {entry.id!r} has no prediction for model {model!r}")
        gt = nifti.read_labels(entry.reference)
        pred = nifti.read_labels(entry.predictions[model])
        pm = metrics.evaluate_pair(gt, pred, patient=entry.id, workers=args.threads)
        results.append(pm)
        references.append(gt)
        _write_text(
            records_dir / f"{entry.id}.json",
            json.dumps(study.patient_metrics_to_dict(pm), indent=2) + "\n",
        )
        log.info("evaluated %s: overall dice %s", entry.id, pm.overall("dice"))

    agg = study.aggregate(results)
    for w in agg.warnings:
        log.warning("%s", w)
    pct = study.voxel_distribution(references)
    table = study.build_performance_table(agg, voxel_pct=pct, metadata={"model": model})
    _write_text(out / f"report.{args.format}", study.render_report(table, args.format))
    return 0


def _cmd_agreement(args) -> int:
    manifest = study.load_manifest(args.manifest)
    _log_config("agreement", manifest=args.manifest, model=args.model, format=args.format)
    suitable = [p for p in manifest.patients if len(p.observers) >= 2]
    if not suitable:
        raise InputError("manifest has no patients with at least 2 observers")

    human: List[Dict[str, metrics.PatientMetrics]] = []
    model_pairs: Optional[List[Dict[str, metrics.PatientMetrics]]] = [] if args.model else None
    for entry in suitable:
        volumes = {oid: nifti.read_labels(path) for oid, path in entry.observers.items()}
        obs = agreement.ObserverSet(patient=entry.id, observers=volumes)
        human.append(agreement.observer_vs_rest(obs, workers=args.threads))
        if args.model:
            if args.model not in entry.predictions:
                raise InputError(
                    f"patient {entry.id!r} has no prediction for model {args.model!r}"
                )
            pred = nifti.read_labels(entry.predictions[args.model])
            model_pairs.append(
                agreement.model_observer_pairs(pred, obs, workers=args.threads)
            )
        log.info("agreement on %s: %d observers", entry.id, len(volumes))

    report = agreement.aggregate_agreement(human, model_pairs)
    table = study.build_agreement_table(
        report, metadata={"model": args.model} if args.model else None
    )
    text = study.render_report(table, args.format)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_fan_partition(args) -> int:
    labels = nifti.read_labels(args.labels)
    bowel_regions = _int_list(args.bowel_regions, "--bowel-regions")
    if not bowel_regions or any(not 0 <= r < NUM_REGIONS for r in bowel_regions):
        raise InputError(f"bad --bowel-regions: {args.bowel_regions!r}")
    order = _int_list(args.region_order, "--region-order")
    config = priors.FanConfig(
        root_world=_triple(args.root, float, "--root"),
        plane=args.plane,
        start_angle=float(np.deg2rad(args.start_angle_deg)),
        sweep=1 if args.sweep == "ccw" else -1,
        region_order=tuple(order),
    )
    _log_config("fan-partition", labels=args.labels, root=config.root_world,
                plane=config.plane, sweep=config.sweep)
    bowel = np.isin(labels.data, [r + 1 for r in bowel_regions])
    partition = priors.balance_fan(bowel, labels.geometry, config)
    fanned = priors.apply_fan(bowel, partition)

    # carry the non-bowel labels through unchanged
    merged = labels.data.copy()
    merged[bowel] = fanned.data[bowel]
    out_labels = LabelVolume(data=merged, spacing=labels.spacing, transform=labels.transform)
    if args.out_labels:
        nifti.write_volume(out_labels, Path(args.out_labels))
    if args.out_json:
        _write_text(Path(args.out_json), _fan_json(partition))
    if not args.out_labels and not args.out_json:
        sys.stdout.write(_fan_json(partition))
    return 0


def _cmd_folds(args) -> int:
    if bool(args.ids) == bool(args.manifest):
        raise InputError("folds needs exactly one of --ids or --manifest")
    if args.ids:
        text = Path(args.ids).read_text()
        ids = [line.strip() for line in text.splitlines() if line.strip()]
    else:
        ids = study.load_manifest(args.manifest).ids()
    _log_config("folds", n=len(ids), k=args.k, seed=args.seed)
    fa = study.make_folds(ids, args.k, args.seed)
    obj = {
        "k": fa.k,
        "seed": args.seed,
        "sizes": fa.fold_sizes(),
        "folds": {pid: fa.assignment[pid] for pid in sorted(fa.assignment)},
    }
    text = json.dumps(obj, indent=2) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    paths: List[Path] = []
    for item in args.records:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        else:
            paths.append(p)
    if not paths:
        raise InputError("no record files found")
    _log_config("report", records=len(paths), format=args.format)
    results = []
    for p in paths:
        try:
            obj = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"malformed metrics record {p}: {e}") from e
        results.append(study.patient_metrics_from_dict(obj))
    agg = study.aggregate(results)
    for w in agg.warnings:
        log.warning("%s", w)
    table = study.build_performance_table(agg)
    text = study.render_report(table, args.format)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def _add_threads(p: _Parser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: {THREADS_ENV} or the CPU count)")


def build_parser() -> _Parser:
    parser = _Parser(prog="rpcikit", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"rpcikit {__version__} "
            f"(backend={active_backend()}, available={','.join(available_backends())}; "
            f"select with {BACKEND_ENV})"
        ),
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("phantom", help="generate a synthetic CT/label phantom")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dims", default="64,64,64")
    p.add_argument("--spacing", default="1,1,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bowel-fraction", type=float, default=0.2)
    p.add_argument("--perturb-mm", type=float, default=None,
                   help="also write labels_perturbed.nii.gz, warped by this magnitude")
    p.add_argument("--perturb-seed", type=int, default=1)
    p.set_defaults(fn=_cmd_phantom)

    p = sub.add_parser("preprocess", help="crop to the labeled extent and dilate labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--ct", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--margin-mm", type=float, default=preprocess.CropSpec().margin_mm)
    p.add_argument("--radius-mm", type=float, default=preprocess.DilationSpec().radius_mm)
    p.add_argument("--skip-crop", action="store_true")
    p.add_argument("--skip-dilate", action="store_true")
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("evaluate", help="score predictions against reference labels")
    p.add_argument("--gt", default=None)
    p.add_argument("--pred", default=None)
    p.add_argument("--patient", default="")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_threads(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("agreement", help="interobserver agreement over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_threads(p)
    p.set_defaults(fn=_cmd_agreement)

    p = sub.add_parser("fan-partition", help="split the small bowel into balanced sectors")
    p.add_argument("--labels", required=True)
    p.add_argument("--root", required=True, help="world coordinates x,y,z in mm")
    p.add_argument("--plane", choices=("coronal", "axial", "sagittal"), default="coronal")
    p.add_argument("--start-angle-deg", type=float, default=90.0)
    p.add_argument("--sweep", choices=("ccw", "cw"), default="ccw")
    p.add_argument("--bowel-regions", default="9,10,11,12")
    p.add_argument("--region-order", default="9,10,11,12")
    p.add_argument("--out-labels", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(fn=_cmd_fan_partition)

    p = sub.add_parser("folds", help="deterministic cross-validation folds")
    p.add_argument("--ids", default=None, help="file with one id per line")
    p.add_argument("--manifest", default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_folds)

    p = sub.add_parser("report", help="aggregate stored per-patient records into a table")
    p.add_argument("--records", nargs="+", required=True,
                   help="record files and/or directories of them")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_report)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(levelname)s %(message)s",
        )
        return args.fn(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
