from datetime import datetime, timedelta
from types import SimpleNamespace

import numpy as np
import pytest

from ctpipe.diagnose import DiagnosisPipeline, DiagnosisResult, SegmentResult
from ctpipe.model import build_base_model
from ctpipe.preprocess import PreprocConfig
from ctpipe.scans import load_manifest
from ctpipe.segment import SegmenterSpec
from ctpipe.synth import SynthSpec, generate
from ctpipe.training import BlockId, SplitConfig, TrainConfig, build_training_set, finetune, make_splits

T0 = datetime(2020, 4, 1, 9, 0, 0)


def day(n):
    return T0 + timedelta(days=n)


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(n_patients=40, slices_per_scan=3, image_size=160, seed=11)
    paths = generate(spec, out)
    scans = load_manifest(paths["manifest"])
    return SimpleNamespace(paths=paths, scans=scans, dir=out, spec=spec)


@pytest.fixture(scope="session")
def trained_setup(synth_dataset):
    """A small trained pipeline shared by diagnosis/store/service tests."""
    preproc = PreprocConfig()
    seg_spec = SegmenterSpec()
    train_s, test_s, val_s = make_splits(synth_dataset.scans, SplitConfig(seed=3))
    X_tr, y_tr = build_training_set(train_s, preproc, seg_spec, seed=5)
    X_va, y_va = build_training_set(val_s, preproc, seg_spec, seed=6)
    model = build_base_model(width=8, seed=1)
    model, history = finetune(
        model, BlockId.FC, (X_tr, y_tr), (X_va, y_va), TrainConfig(max_epochs=8, seed=2)
    )
    pipeline = DiagnosisPipeline(model=model, preproc=preproc, segmenter=seg_spec)
    return SimpleNamespace(
        pipeline=pipeline,
        model=model,
        preproc=preproc,
        seg_spec=seg_spec,
        train_scans=train_s,
        test_scans=test_s,
        history=history,
    )


class StubPipeline:
    """Canned diagnosis outcomes keyed off the scan label; no torch involved."""

    def __init__(self, outcome=None):
        # outcome: callable scan -> (scan_label, q) or None for label-derived
        self.outcome = outcome

    def diagnose(self, scan, timestamp=None):
        if self.outcome is not None:
            label, q = self.outcome(scan)
        elif scan.label == "covid_positive":
            label, q = "positive", 10.0
        else:
            label, q = "negative", 0.0
        seg = SegmentResult(segment_id=f"{scan.scan_id}/s0/r0", label=label, probability=0.9, q=q)
        return DiagnosisResult(
            scan_id=scan.scan_id,
            timestamp=timestamp or scan.acquired_at,
            segment_results=[seg],
            positive_ratio=1.0 if label == "positive" else 0.0,
            scan_label=label,
            quantification_q=q,
        )


class FaultyPipeline:
    def diagnose(self, scan, timestamp=None):
        raise RuntimeError("injected fault: segmentation stage exploded")


@pytest.fixture
def stub_pipeline():
    return StubPipeline()


def make_scan(scan_id="scan-x", patient_id="pt-x", label="covid_positive", when=None, size=32):
    """A minimal in-memory scan for store-level tests."""
    from ctpipe.scans import CTScan, Slice

    pixels = np.full((size, size), 0.3, dtype=np.float32)
    return CTScan(
        scan_id=scan_id,
        patient_id=patient_id,
        acquired_at=when or T0,
        slices=(Slice(pixels=pixels, index=0),),
        label=label,
    )
