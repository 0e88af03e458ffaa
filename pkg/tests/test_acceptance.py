"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; tolerances are stated inline next to each assertion.
"""

import time

import numpy as np
import pytest
import torch
from conftest import FaultyPipeline, StubPipeline, day, make_scan
from helpers import brute_force_quantify

from ctpipe.diagnose import DiagnosisPipeline, SegmentResult, scan_decision
from ctpipe.model import build_base_model
from ctpipe.preprocess import PreprocConfig, augment, sample_augment_params
from ctpipe.quantify import UndefinedBaselineError, forecast, quantify, quantify_segment, severity
from ctpipe.scans import MedicationEvent, SeverityPoint, load_manifest
from ctpipe.segment import SegmenterSpec
from ctpipe.store import PatientStore, StoreError
from ctpipe.synth import SynthSpec, generate
from ctpipe.training import (
    BlockId,
    SplitConfig,
    TrainConfig,
    build_training_set,
    finetune,
    lr_at,
    make_splits,
    should_stop,
    trainable_set,
)


def _pass(line):
    print(f"\nPASS: {line}")


def test_algorithm1_oracle_equivalence():
    """quantify == brute-force triple loop, bitwise, 1000 instances, < 5 s."""
    rng = np.random.default_rng(12345)
    start = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        maps = rng.normal(scale=rng.uniform(0.1, 10.0), size=(n, h, w))
        weights = rng.normal(scale=rng.uniform(0.1, 10.0), size=n)
        result = quantify(maps, weights)
        q_oracle, contrib_oracle = brute_force_quantify(maps, weights)
        assert result.q == q_oracle  # bitwise for double precision
        assert list(result.per_map_contributions) == contrib_oracle
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"
    _pass(f"Algorithm-1 oracle equivalence (1000 instances, bitwise, {elapsed:.2f}s)")


class _TinyCaptureModel(torch.nn.Module):
    """Hand-built fixture: identity feature map, known linear head."""

    def __init__(self):
        super().__init__()
        self.fc = torch.nn.Linear(4, 2, bias=True).double()
        with torch.no_grad():
            self.fc.weight.copy_(
                torch.tensor([[0.2, -0.4, 0.6, 0.1], [0.1, 0.2, 0.3, 0.4]], dtype=torch.float64)
            )
            self.fc.bias.copy_(torch.tensor([0.05, -0.02], dtype=torch.float64))

    def forward_features(self, x):
        return x

    def head(self, a):
        return self.fc(a.flatten(1))


def test_gradient_correctness_vs_finite_differences():
    """Captured d(y^c)/dA matches central differences, max rel err < 1e-3."""
    model = _TinyCaptureModel()
    A = torch.tensor([[[[0.7, -1.3], [0.4, 2.1]]]], dtype=torch.float64)
    feats = A.detach().requires_grad_(True)
    score = model.head(feats)[0, 1]
    (grads,) = torch.autograd.grad(score, feats)
    eps = 1e-6
    max_rel = 0.0
    for i in range(2):
        for j in range(2):
            ap, am = A.clone(), A.clone()
            ap[0, 0, i, j] += eps
            am[0, 0, i, j] -= eps
            with torch.no_grad():
                fd = (model.head(ap)[0, 1] - model.head(am)[0, 1]).item() / (2 * eps)
            g = grads[0, 0, i, j].item()
            max_rel = max(max_rel, abs(fd - g) / max(abs(fd), abs(g), 1e-12))
    assert max_rel < 1e-3
    # and the quantifier consumes exactly these gradients
    result = quantify_segment(model, A, class_index=1)
    w = float(np.mean([0.1, 0.2, 0.3, 0.4]))
    expected = max(0.0, max(w * v for v in [0.7, -1.3, 0.4, 2.1]))
    assert abs(result.q - expected) < 1e-12
    _pass(f"gradient correctness vs finite differences (max rel err {max_rel:.2e} < 1e-3)")


def test_eq1_severity_suite():
    rng = np.random.default_rng(99)
    for _ in range(100):
        q = float(rng.uniform(1e-9, 1e9))
        assert severity(q, q) == 100.0  # exact
    assert severity(50.0, 200.0) == 25.0  # exact
    with pytest.raises(UndefinedBaselineError):
        severity(3.0, 0.0)
    _pass("Eq.1 suite (severity(Q,Q)=100 x100, severity(50,200)=25, zero-baseline error)")


def test_split_fidelity_table2():
    """4,050 positive + 3,169 healthy, image-level stratified: exact counts."""
    items = [{"id": i, "label": "covid_positive", "patient_id": f"p{i}"} for i in range(4050)]
    items += [{"id": 4050 + i, "label": "healthy", "patient_id": f"h{i}"} for i in range(3169)]
    config = SplitConfig(ratios=(0.70, 0.15, 0.15), stratify_by_label=True, group_by_patient=False, seed=0)
    train, test, val = make_splits(items, config)
    assert (len(train), len(test), len(val)) == (5055, 1082, 1082)  # exact
    for part, pos, healthy in ((train, 2836, 2219), (test, 607, 475), (val, 607, 475)):
        labels = [x["label"] for x in part]
        assert labels.count("covid_positive") == pos
        assert labels.count("healthy") == healthy
    ids = sorted(x["id"] for x in train + test + val)
    assert ids == list(range(7219))  # disjoint and exhaustive
    _pass("split fidelity (5,055/1,082/1,082 with per-class 2,836+2,219 / 607+475 / 607+475, exact)")


def test_schedule_fidelity():
    cfg = TrainConfig()
    assert [lr_at(e, cfg) for e in range(6)] == [0.01, 0.01, 0.001, 0.001, 0.0001, 0.0001]  # exact
    assert should_stop([1.0], patience=3) is False
    assert should_stop([1.0, 0.9, 0.95, 0.95, 0.95], patience=3) is True
    assert should_stop([1.0, 0.9, 0.8, 0.7], patience=3) is False
    _pass("schedule fidelity (lr_at epochs 0-5 exact, patience-3 traces)")


def test_freeze_invariance_every_block():
    rng = np.random.default_rng(3)
    X = rng.random((8, 3, 224, 224), dtype=np.float32)
    y = rng.integers(0, 2, size=8).astype(np.int64)
    Xv = rng.random((4, 3, 224, 224), dtype=np.float32)
    yv = rng.integers(0, 2, size=4).astype(np.int64)
    for block in BlockId:
        model = build_base_model(width=4, seed=11)
        before = {k: v.clone() for k, v in model.state_dict().items()}
        model, _ = finetune(model, block, (X, y), (Xv, yv), TrainConfig(max_epochs=1, seed=12))
        after = model.state_dict()
        frozen_names = {b.module_name for b in BlockId} - {b.module_name for b in trainable_set(block)}
        for key, value in before.items():
            prefix = key.split(".")[0]
            if prefix in frozen_names:
                assert torch.equal(value, after[key]), f"{key} drifted with block={block.label}"
    _pass("freeze invariance (all six blocks, frozen parameters bit-identical after one epoch)")


def test_decision_rule():
    def results(p, n):
        return [SegmentResult(f"s{i}", "positive" if i < p else "negative", 0.5) for i in range(p + n)]

    d = scan_decision(results(3, 2))
    assert (d.label, round(d.positive_ratio, 12)) == ("positive", 0.6)
    d = scan_decision(results(1, 1))
    assert (d.label, d.positive_ratio) == ("negative", 0.5)  # strict exceedance
    d = scan_decision(results(0, 0))
    assert (d.label, d.positive_ratio, d.note) == ("negative", 0.0, "no-findings")
    rng = np.random.default_rng(17)
    for _ in range(1000):
        p = int(rng.integers(0, 10))
        n = int(rng.integers(0, 10))
        base = scan_decision(results(p, n))
        if base.label == "positive":
            assert scan_decision(results(p + 1, n)).label == "positive"
        else:
            assert scan_decision(results(p, n + 1)).label == "negative"
    _pass("decision rule (0.6 positive, 0.5 tie negative, no-findings; monotone over 1000 multisets)")


def test_synthetic_end_to_end(tmp_path):
    """200 scans -> preprocess -> segment -> finetune(FC) -> diagnose, seed pinned."""
    start = time.perf_counter()
    spec = SynthSpec(n_patients=200, slices_per_scan=3, seed=2024)
    paths = generate(spec, tmp_path / "data")
    scans = load_manifest(paths["manifest"])
    assert len(scans) == 200
    preproc = PreprocConfig()
    seg_spec = SegmenterSpec()
    train_s, test_s, val_s = make_splits(scans, SplitConfig(seed=7))
    X_tr, y_tr = build_training_set(train_s, preproc, seg_spec, seed=7)
    X_va, y_va = build_training_set(val_s, preproc, seg_spec, seed=8)
    model = build_base_model(width=8, seed=7)
    model, history = finetune(model, BlockId.FC, (X_tr, y_tr), (X_va, y_va), TrainConfig(seed=7))
    pipeline = DiagnosisPipeline(model=model, preproc=preproc, segmenter=seg_spec)

    correct = 0
    first_positive = None
    for scan in test_s:
        result = pipeline.diagnose(scan)
        truth = "positive" if scan.label == "covid_positive" else "negative"
        correct += result.scan_label == truth
        if first_positive is None and result.scan_label == "positive":
            first_positive = scan
    accuracy = correct / len(test_s)
    assert accuracy >= 0.9, f"held-out scan accuracy {accuracy:.3f} < 0.9"

    # first positive ingest sets the baseline at S = 100
    store = PatientStore(tmp_path / "store")
    pid = store.register_patient({"age": 55, "sex": "F"})
    _, point = store.ingest_and_diagnose(pid, first_positive, pipeline)
    assert point is not None and point.s == 100.0

    # declining series forecasts (40, 20) at +2 days within 1e-9
    timeline = [SeverityPoint(timestamp=day(d), q=None, s=s) for d, s in enumerate((100.0, 80.0, 60.0))]
    predicted = forecast(timeline, horizon_days=2)
    assert abs(predicted[0].s - 40.0) < 1e-9
    assert abs(predicted[1].s - 20.0) < 1e-9

    elapsed = time.perf_counter() - start
    assert elapsed < 900.0, f"end-to-end took {elapsed:.0f}s (budget 15 min)"
    _pass(
        f"synthetic end-to-end (accuracy {accuracy:.3f} >= 0.9 over {len(test_s)} scans, "
        f"S=100 at baseline, forecast (40, 20) within 1e-9, {elapsed:.0f}s < 900s)"
    )


def test_augmentation_bounds():
    config = PreprocConfig()
    rng = np.random.default_rng(4321)
    for _ in range(1000):
        p = sample_augment_params((96, 96), config, rng)
        assert abs(p.rotation_deg) <= 15.0
        assert abs(p.dx) <= 20.0 and abs(p.dy) <= 20.0
    identity = PreprocConfig(max_rotation_deg=0.0, max_translation_px=0.0, crop_fraction=1.0, hflip_prob=0.0)
    img = np.random.default_rng(5).random((64, 64))
    out = augment(img, identity, seed=77)
    assert out.dtype == img.dtype and (out == img).all()  # bit-exact
    _pass("augmentation bounds (1000 draws within |15 deg|/|20 px|; identity reproduces input bit-exactly)")


def test_service_atomicity_and_audit():
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        store = PatientStore(tmp)
        pid = store.register_patient({"age": 70, "sex": "M"})
        store.ingest_and_diagnose(pid, make_scan(scan_id="ok", when=day(0)), StubPipeline())
        path = store._path(pid)
        before = path.read_bytes()
        with pytest.raises(RuntimeError):
            store.ingest_and_diagnose(pid, make_scan(scan_id="boom", when=day(1)), FaultyPipeline())
        assert path.read_bytes() == before  # byte-identical after injected fault

        rng = np.random.default_rng(6)
        audit_len = {pid: len(store.get(pid).audit)}
        t = 0
        for _ in range(100):
            op = int(rng.integers(0, 4))
            try:
                if op == 0:
                    new_pid = store.register_patient({"age": 30, "sex": "F"})
                    audit_len[new_pid] = len(store.get(new_pid).audit)
                elif op == 1:
                    target = sorted(audit_len)[int(rng.integers(0, len(audit_len)))]
                    store.add_medication(target, MedicationEvent(name="m", start=day(int(rng.integers(0, 50)))))
                elif op == 2:
                    t += 1
                    store.ingest_and_diagnose(pid, make_scan(scan_id=f"s{t}", when=day(t + 1)), StubPipeline())
                else:
                    store.get_timeline(pid, include_forecast=True)
            except StoreError:
                pass
            for known, previous in list(audit_len.items()):
                current = len(store.get(known).audit)
                assert current >= previous, f"audit shrank for {known}"
                audit_len[known] = current
    _pass("service atomicity (fault leaves store byte-identical; audit non-decreasing over 100 ops)")
