"""Region-wise evaluation toolkit for 13-region abdominal label volumes.

The package covers the workflow around a segmentation model, not the model
itself: preprocessing (cropping, label dilation), exact surface-distance
metrics (Dice, HD95, ASD), the balanced fan partition of the small bowel,
interobserver agreement, cohort aggregation with report tables, synthetic
phantoms for testing, and a CLI over NIfTI files.
"""

__version__ = "0.1.0"

from .agreement import (
    AgreementReport,
    ObserverSet,
    aggregate_agreement,
    model_observer_pairs,
    model_vs_observers,
    observer_vs_rest,
    region_union,
)
from .backends import active_backend, available_backends, distance_field_mm, feature_transform
from .errors import FormatError, InputError
from .metrics import (
    PatientMetrics,
    RegionMetrics,
    SurfaceDistanceSet,
    asd,
    boundary_mask,
    brute_force_surface_distances,
    dice,
    evaluate_pair,
    false_negative_mask,
    hd95,
    region_metrics_from_masks,
    surface_distances,
)
from .nifti import read_labels, read_scalar, read_volume, write_volume
from .phantom import PhantomSpec, generate_phantom, perturb_labels
from .preprocess import (
    CropSpec,
    DilationSpec,
    compute_crop_box,
    crop_labels_with_margin,
    crop_with_margin,
    dilate_labels,
)
from .priors import FanConfig, FanPartition, apply_fan, balance_fan, fan_angles, voxel_fan_angle
from .study import (
    Aggregate,
    AggregateRow,
    FoldAssignment,
    StudyManifest,
    Summary,
    Table,
    aggregate,
    build_agreement_table,
    build_performance_table,
    load_manifest,
    make_folds,
    parse_report,
    render_report,
    summarize,
    voxel_distribution,
)
from .volume import (
    LABEL_ENCODING_NOTE,
    NUM_REGIONS,
    REGION_NAMES,
    BoundingBox,
    LabelVolume,
    RegionId,
    ScalarVolume,
    Spacing,
    VolumeGeometry,
    WorldTransform,
    extract_region_mask,
    label_bounding_box,
    region_voxel_counts,
)

__all__ = [name for name in dir() if not name.startswith("_")]
