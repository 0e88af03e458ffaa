"""Chest-CT diagnosis, severity quantification, progression tracking and
treatment assessment pipeline."""

__version__ = "0.1.0"

from .diagnose import DiagnosisPipeline, DiagnosisResult, scan_decision
from .preprocess import PreprocConfig, augment, extract_thorax, resize_normalize, select_slices, wiener_filter
from .quantify import (
    UndefinedBaselineError,
    cam_weights,
    correlate_medications,
    forecast,
    quantify,
    quantify_scan,
    quantify_segment,
    severity,
)
from .scans import CTScan, MedicationEvent, PatientRecord, ROISegment, SeverityPoint, Slice, load_manifest, validate_scan
from .segment import SegmenterSpec, segment, segment_scan
from .store import PatientStore
from .synth import SynthSpec, generate
from .training import (
    BlockId,
    BlockwiseClassifier,
    SplitConfig,
    TrainConfig,
    blockwise_sweep,
    finetune,
    hpo_sample,
    lr_at,
    make_splits,
    should_stop,
    trainable_set,
)
