"""Core domain types and dataset-manifest ingestion.

The manifest is a CSV file with one record per slice image:

    scan_id,patient_id,acquired_at,slice_index,label,image_path

``acquired_at`` is ISO-8601, ``image_path`` is relative to the manifest
location and points at an 8-bit grayscale PNG.  A companion ``patients.json``
holds demographics and medication events (see ``load_patients``).
"""

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

LABELS = ("covid_positive", "cap", "healthy", "unknown")

MIN_SLICE_SIDE = 8

MANIFEST_FIELDS = ("scan_id", "patient_id", "acquired_at", "slice_index", "label", "image_path")


class ManifestError(ValueError):
    """Raised when a manifest (or a record in it) cannot be ingested."""


@dataclass(frozen=True)
class Slice:
    """One cross-sectional image of a scan; intensities are floats in [0, 1]."""

    pixels: np.ndarray
    index: int

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class CTScan:
    scan_id: str
    patient_id: str
    acquired_at: datetime
    slices: tuple
    label: str = "unknown"


@dataclass(frozen=True)
class ROISegment:
    """A segmented region of interest in the coordinate frame of its source image.

    ``crop`` carries the bounding-box pixel data so downstream classification
    does not need to re-resolve the source image.
    """

    segment_id: str
    source_slice: int
    mask: np.ndarray
    bbox: tuple  # (row, col, height, width)
    area_px: int
    crop: Optional[np.ndarray] = None

    @classmethod
    def from_mask(cls, segment_id, source_slice, mask, image=None):
        """Build a segment with the tight bounding box and pixel count of ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        rows = np.any(mask, axis=1)
        cols = np.any(mask, axis=0)
        if not rows.any():
            raise ValueError("mask is empty")
        r0, r1 = np.where(rows)[0][[0, -1]]
        c0, c1 = np.where(cols)[0][[0, -1]]
        bbox = (int(r0), int(c0), int(r1 - r0 + 1), int(c1 - c0 + 1))
        crop = None if image is None else np.array(image[r0 : r1 + 1, c0 : c1 + 1])
        return cls(
            segment_id=segment_id,
            source_slice=source_slice,
            mask=mask,
            bbox=bbox,
            area_px=int(mask.sum()),
            crop=crop,
        )

    def mask_crop(self):
        """The mask restricted to the bounding box."""
        r, c, h, w = self.bbox
        return self.mask[r : r + h, c : c + w]


@dataclass
class MedicationEvent:
    name: str
    start: datetime
    end: Optional[datetime] = None
    dosage_note: str = ""

    def __post_init__(self):
        if self.end is not None and self.end < self.start:
            raise ValueError("medication end precedes start")

    def to_json(self):
        return {
            "name": self.name,
            "start": self.start.isoformat(),
            "end": self.end.isoformat() if self.end else None,
            "dosage_note": self.dosage_note,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            name=d["name"],
            start=datetime.fromisoformat(d["start"]),
            end=datetime.fromisoformat(d["end"]) if d.get("end") else None,
            dosage_note=d.get("dosage_note", ""),
        )


@dataclass
class SeverityPoint:
    """A dated (Q, S) observation; forecast points carry no Q of their own."""

    timestamp: datetime
    q: Optional[float]
    s: float
    is_forecast: bool = False
    diagnosis_id: Optional[str] = None

    def to_json(self):
        return {
            "timestamp": self.timestamp.isoformat(),
            "Q": self.q,
            "S": self.s,
            "is_forecast": self.is_forecast,
            "diagnosis_id": self.diagnosis_id,
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            timestamp=datetime.fromisoformat(d["timestamp"]),
            q=d.get("Q"),
            s=d["S"],
            is_forecast=d.get("is_forecast", False),
            diagnosis_id=d.get("diagnosis_id"),
        )


@dataclass
class PatientRecord:
    patient_id: str
    age: int
    sex: str
    prior_history: list = field(default_factory=list)
    medications: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    diagnoses: list = field(default_factory=list)  # diagnosis ids

    def to_json(self):
        return {
            "patient_id": self.patient_id,
            "age": self.age,
            "sex": self.sex,
            "prior_history": list(self.prior_history),
            "medications": [m.to_json() for m in self.medications],
            "timeline": [p.to_json() for p in self.timeline],
            "diagnoses": list(self.diagnoses),
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            patient_id=d["patient_id"],
            age=d["age"],
            sex=d["sex"],
            prior_history=list(d.get("prior_history", [])),
            medications=[MedicationEvent.from_json(m) for m in d.get("medications", [])],
            timeline=[SeverityPoint.from_json(p) for p in d.get("timeline", [])],
            diagnoses=list(d.get("diagnoses", [])),
        )


def validate_scan(scan):
    """Return a list of violated invariants; empty means the scan is well-formed."""
    violations = []
    if not scan.slices:
        violations.append("scan has no slices")
        return violations
    prev = None
    for sl in scan.slices:
        px = np.asarray(sl.pixels)
        tag = f"slice {sl.index}"
        if px.ndim != 2:
            violations.append(f"{tag}: pixels not 2-D")
            continue
        if px.shape[0] < MIN_SLICE_SIDE or px.shape[1] < MIN_SLICE_SIDE:
            violations.append(f"{tag}: undersized image {px.shape}")
        if not np.all(np.isfinite(px)):
            violations.append(f"{tag}: non-finite pixel")
        elif px.size and (px.min() < 0.0 or px.max() > 1.0):
            violations.append(f"{tag}: intensity outside [0, 1]")
        if prev is not None and sl.index <= prev:
            violations.append(f"{tag}: non-increasing index")
        prev = sl.index
    if scan.slices[0].index != 0:
        violations.append("first slice index is not 0")
    if scan.label not in LABELS:
        violations.append(f"label '{scan.label}' outside taxonomy {LABELS}")
    return violations


def _load_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return arr / 255.0


def load_manifest(path):
    """Load a slice manifest into validated ``CTScan`` objects.

    Scans keep manifest order (order of first appearance); every record-level
    problem is reported with its manifest line number.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    errors = []
    rows_by_scan = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames)
        if missing:
            raise ManifestError(f"manifest header missing fields: {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                rec = _parse_record(row, root, line)
            except ManifestError as exc:
                errors.append(str(exc))
                continue
            rows_by_scan.setdefault(rec["scan_id"], []).append(rec)

    scans = []
    for scan_id, recs in rows_by_scan.items():
        head = recs[0]
        for rec in recs[1:]:
            for key in ("patient_id", "acquired_at", "label"):
                if rec[key] != head[key]:
                    errors.append(f"line {rec['line']}: {key} differs within scan '{scan_id}'")
        slices = tuple(Slice(pixels=r["pixels"], index=r["slice_index"]) for r in recs)
        scan = CTScan(
            scan_id=scan_id,
            patient_id=head["patient_id"],
            acquired_at=head["acquired_at"],
            slices=slices,
            label=head["label"],
        )
        bad = validate_scan(scan)
        if bad:
            errors.extend(f"line {head['line']}: scan '{scan_id}': {b}" for b in bad)
        else:
            scans.append(scan)
    if errors:
        raise ManifestError("; ".join(errors))
    return scans


def _parse_record(row, root, line):
    label = (row.get("label") or "").strip()
    if label not in LABELS:
        raise ManifestError(f"line {line}: label '{label}' outside taxonomy {LABELS}")
    try:
        slice_index = int(row["slice_index"])
    except (KeyError, TypeError, ValueError):
        raise ManifestError(f"line {line}: bad slice_index {row.get('slice_index')!r}")
    try:
        acquired_at = datetime.fromisoformat(row["acquired_at"])
    except (KeyError, TypeError, ValueError):
        raise ManifestError(f"line {line}: bad acquired_at {row.get('acquired_at')!r}")
    image_path = root / row["image_path"]
    if not image_path.exists():
        raise ManifestError(f"line {line}: missing image file {row['image_path']}")
    pixels = _load_png(image_path)
    if pixels.shape[0] < MIN_SLICE_SIDE or pixels.shape[1] < MIN_SLICE_SIDE:
        raise ManifestError(f"line {line}: undersized image {pixels.shape}")
    return {
        "scan_id": row["scan_id"],
        "patient_id": row["patient_id"],
        "acquired_at": acquired_at,
        "slice_index": slice_index,
        "label": label,
        "pixels": pixels,
        "line": line,
    }


def write_manifest(scans, out_dir, image_dir="images"):
    """Write scans back out as manifest + PNGs; inverse of ``load_manifest``.

    Returns the manifest path.  Pixels are quantized to 8 bits, so the image
    round trip is exact only for data that was loaded from 8-bit sources.
    """
    out_dir = Path(out_dir)
    (out_dir / image_dir).mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for scan in scans:
            for sl in scan.slices:
                rel = f"{image_dir}/{scan.scan_id}_{sl.index:03d}.png"
                arr = np.clip(np.rint(np.asarray(sl.pixels) * 255.0), 0, 255).astype(np.uint8)
                Image.fromarray(arr, mode="L").save(out_dir / rel)
                writer.writerow(
                    [scan.scan_id, scan.patient_id, scan.acquired_at.isoformat(), sl.index, scan.label, rel]
                )
    return manifest


def load_patients(path):
    """Load the companion patients file into ``PatientRecord`` objects."""
    with open(path) as fh:
        doc = json.load(fh)
    return [PatientRecord.from_json(p) for p in doc.get("patients", [])]


def write_patients(records, path):
    with open(path, "w") as fh:
        json.dump({"patients": [r.to_json() for r in records]}, fh, indent=2)
