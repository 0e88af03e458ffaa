"""Per-segment inference and the scan-level positive/negative decision.

A scan is declared positive when the fraction of positively classified
segments strictly exceeds the decision threshold (ties are negative); a scan
with no segments at all is negative with a "no-findings" annotation.
"""

import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np
import torch

from .preprocess import resize_normalize
from .quantify import quantify_scan, quantify_segment
from .segment import segment_scan

POSITIVE = "positive"
NEGATIVE = "negative"

NO_FINDINGS = "no-findings"

DEFAULT_THRESHOLD = 0.5


@dataclass
class SegmentResult:
    segment_id: str
    label: str
    probability: float  # positive-class probability
    q: float = 0.0

    def to_json(self):
        return {
            "segment_id": self.segment_id,
            "label": self.label,
            "probability": self.probability,
            "Q": self.q,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            segment_id=d["segment_id"],
            label=d["label"],
            probability=d["probability"],
            q=d.get("Q", 0.0),
        )


@dataclass
class ScanDecision:
    label: str
    positive_ratio: float
    note: str = ""


@dataclass
class DiagnosisResult:
    scan_id: str
    timestamp: datetime
    segment_results: list = field(default_factory=list)
    positive_ratio: float = 0.0
    scan_label: str = NEGATIVE
    decision_threshold: float = DEFAULT_THRESHOLD
    quantification_q: float = 0.0
    note: str = ""
    diagnosis_id: str = ""

    def __post_init__(self):
        if not self.diagnosis_id:
            self.diagnosis_id = uuid.uuid4().hex

    def to_json(self):
        return {
            "diagnosis_id": self.diagnosis_id,
            "scan_id": self.scan_id,
            "timestamp": self.timestamp.isoformat(),
            "segment_results": [r.to_json() for r in self.segment_results],
            "positive_ratio": self.positive_ratio,
            "scan_label": self.scan_label,
            "decision_threshold": self.decision_threshold,
            "Q": self.quantification_q,
            "note": self.note,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            scan_id=d["scan_id"],
            timestamp=datetime.fromisoformat(d["timestamp"]),
            segment_results=[SegmentResult.from_json(r) for r in d.get("segment_results", [])],
            positive_ratio=d.get("positive_ratio", 0.0),
            scan_label=d.get("scan_label", NEGATIVE),
            decision_threshold=d.get("decision_threshold", DEFAULT_THRESHOLD),
            quantification_q=d.get("Q", 0.0),
            note=d.get("note", ""),
            diagnosis_id=d.get("diagnosis_id", ""),
        )


def classify_segments(model, segments, config):
    """Classify each segment's masked crop; returns one result per segment,
    in segment order.

    Raises on an empty segment list: "no lung findings" is a scan-level
    condition the caller must decide (see ``scan_decision``).
    """
    if not segments:
        raise ValueError("no segments to classify; handle the no-findings case at scan level")
    model.eval()
    results = []
    with torch.no_grad():
        for seg in segments:
            masked = seg.crop * seg.mask_crop()
            x = torch.from_numpy(resize_normalize(masked, config))[None]
            probs = torch.softmax(model(x), dim=1)[0]
            p_pos = float(probs[1])
            label = POSITIVE if probs.argmax().item() == 1 else NEGATIVE
            results.append(SegmentResult(segment_id=seg.segment_id, label=label, probability=p_pos))
    return results


def scan_decision(segment_results, threshold=DEFAULT_THRESHOLD):
    """Scan-level rule: positive iff the positive-segment ratio strictly
    exceeds the threshold; no segments at all is negative with a note."""
    total = len(segment_results)
    if total == 0:
        return ScanDecision(label=NEGATIVE, positive_ratio=0.0, note=NO_FINDINGS)
    positives = sum(1 for r in segment_results if r.label == POSITIVE)
    ratio = positives / total
    label = POSITIVE if ratio > threshold else NEGATIVE
    return ScanDecision(label=label, positive_ratio=ratio)


@dataclass
class DiagnosisPipeline:
    """Bundles the trained classifier with preprocessing and segmentation
    choices; the unit the EHR service and CLI run per scan."""

    model: object
    preproc: object
    segmenter: object
    threshold: float = DEFAULT_THRESHOLD
    quant_mode: str = "max"
    seed: Optional[int] = None

    def diagnose(self, scan, timestamp=None):
        ts = timestamp or scan.acquired_at or datetime.now(timezone.utc)
        segments = segment_scan(scan, self.preproc, self.segmenter, seed=self.seed)
        if segments:
            results = classify_segments(self.model, segments, self.preproc)
            decision = scan_decision(results, self.threshold)
            by_id = {s.segment_id: s for s in segments}
            for r in results:
                if r.label == POSITIVE:
                    seg = by_id[r.segment_id]
                    masked = seg.crop * seg.mask_crop()
                    x = resize_normalize(masked, self.preproc)
                    r.q = quantify_segment(
                        self.model, x, class_index=1, segment_id=r.segment_id, mode=self.quant_mode
                    ).q
            q_scan = quantify_scan(results)
        else:
            results = []
            decision = scan_decision(results, self.threshold)
            q_scan = 0.0
        return DiagnosisResult(
            scan_id=scan.scan_id,
            timestamp=ts,
            segment_results=results,
            positive_ratio=decision.positive_ratio,
            scan_label=decision.label,
            decision_threshold=self.threshold,
            quantification_q=q_scan,
            note=decision.note,
        )
