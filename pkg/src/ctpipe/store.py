"""Embedded, file-backed patient-record store.

One JSON document per patient under ``<root>/patients/<patient_id>.json``::

    {"patient": <PatientRecord>, "diagnoses": [<DiagnosisResult>, ...],
     "baseline_q": float | null, "registered_seq": int,
     "audit": [{"timestamp", "actor", "action"}, ...]}

Writes are atomic (temp file + rename) and serialized per patient, so a
failed ingest leaves the on-disk record byte-identical.  Reads parse the
current snapshot and never mutate it.
"""

import json
import os
import threading
import uuid
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from .diagnose import POSITIVE, DiagnosisResult
from .quantify import correlate_medications, forecast, severity, trend_slope
from .scans import MedicationEvent, PatientRecord, SeverityPoint


class StoreError(ValueError):
    pass


class NotFoundError(StoreError):
    pass


@dataclass
class AuditEntry:
    timestamp: datetime
    actor: str
    action: str

    def to_json(self):
        return {"timestamp": self.timestamp.isoformat(), "actor": self.actor, "action": self.action}

    @classmethod
    def from_json(cls, d):
        return cls(timestamp=datetime.fromisoformat(d["timestamp"]), actor=d["actor"], action=d["action"])


@dataclass
class StoreRecord:
    patient: PatientRecord
    diagnoses: list = field(default_factory=list)
    baseline_q: Optional[float] = None
    registered_seq: int = 0
    audit: list = field(default_factory=list)

    def to_json(self):
        return {
            "patient": self.patient.to_json(),
            "diagnoses": [d.to_json() for d in self.diagnoses],
            "baseline_q": self.baseline_q,
            "registered_seq": self.registered_seq,
            "audit": [a.to_json() for a in self.audit],
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            patient=PatientRecord.from_json(d["patient"]),
            diagnoses=[DiagnosisResult.from_json(x) for x in d.get("diagnoses", [])],
            baseline_q=d.get("baseline_q"),
            registered_seq=d.get("registered_seq", 0),
            audit=[AuditEntry.from_json(a) for a in d.get("audit", [])],
        )


class PatientStore:
    """Desk-scale document store driving the diagnosis/progression workflow."""

    def __init__(self, root):
        self.root = Path(root)
        self.patients_dir = self.root / "patients"
        self.patients_dir.mkdir(parents=True, exist_ok=True)
        self._locks = defaultdict(threading.Lock)
        self._registry_lock = threading.Lock()

    # -- paths / io ---------------------------------------------------------

    def _path(self, patient_id):
        if "/" in patient_id or patient_id in ("", ".", ".."):
            raise StoreError(f"invalid patient id {patient_id!r}")
        return self.patients_dir / f"{patient_id}.json"

    def _load(self, patient_id):
        path = self._path(patient_id)
        if not path.exists():
            raise NotFoundError(f"unknown patient '{patient_id}'")
        with open(path) as fh:
            return StoreRecord.from_json(json.load(fh))

    def _save(self, record):
        path = self._path(record.patient.patient_id)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w") as fh:
            json.dump(record.to_json(), fh, indent=1)
        os.replace(tmp, path)

    def patient_ids(self):
        return sorted(p.stem for p in self.patients_dir.glob("*.json"))

    # -- operations ---------------------------------------------------------

    def register_patient(self, demographics, prior_history=(), actor="api", patient_id=None):
        """Create an empty record; returns the new patient id.

        ``demographics`` must carry ``age`` and ``sex``.  An explicit
        ``patient_id`` (external identifier) must be unused.
        """
        for key in ("age", "sex"):
            if demographics.get(key) in (None, ""):
                raise StoreError(f"missing demographic field '{key}'")
        with self._registry_lock:
            pid = patient_id or uuid.uuid4().hex[:12]
            if self._path(pid).exists():
                raise StoreError(f"duplicate patient id '{pid}'")
            record = StoreRecord(
                patient=PatientRecord(
                    patient_id=pid,
                    age=int(demographics["age"]),
                    sex=str(demographics["sex"]),
                    prior_history=list(prior_history),
                ),
                registered_seq=len(self.patient_ids()),
            )
            record.audit.append(AuditEntry(datetime.now(), actor, "register_patient"))
            self._save(record)
        return pid

    def get(self, patient_id):
        return self._load(patient_id)

    def add_medication(self, patient_id, event, actor="api"):
        """Insert a medication event keeping start-time order; duplicates are
        allowed (re-prescription is real)."""
        if not isinstance(event, MedicationEvent):
            event = MedicationEvent(**event)
        with self._locks[patient_id]:
            record = self._load(patient_id)
            meds = record.patient.medications
            meds.append(event)
            meds.sort(key=lambda m: m.start)
            record.audit.append(AuditEntry(datetime.now(), actor, f"add_medication:{event.name}"))
            self._save(record)
        return record

    def ingest_and_diagnose(self, patient_id, scan, pipeline, actor="api"):
        """Run the full diagnosis pipeline for one scan and persist the result.

        The first positive quantification sets the severity baseline (S=100);
        once a baseline exists every ingest appends a severity point.  The
        operation is atomic per patient: any pipeline failure leaves the
        stored record untouched.
        """
        with self._locks[patient_id]:
            record = self._load(patient_id)
            ts = scan.acquired_at
            observed = [p for p in record.patient.timeline if not p.is_forecast]
            if observed and ts <= observed[-1].timestamp:
                raise StoreError(
                    f"non-monotone timeline: scan at {ts.isoformat()} not after "
                    f"{observed[-1].timestamp.isoformat()}"
                )
            result = pipeline.diagnose(scan, timestamp=ts)
            point = None
            q = result.quantification_q
            if record.baseline_q is None and result.scan_label == POSITIVE and q > 0:
                record.baseline_q = q
            if record.baseline_q is not None:
                s = severity(q, record.baseline_q)
                point = SeverityPoint(timestamp=ts, q=q, s=s, diagnosis_id=result.diagnosis_id)
                record.patient.timeline.append(point)
            record.diagnoses.append(result)
            record.patient.diagnoses.append(result.diagnosis_id)
            record.audit.append(AuditEntry(datetime.now(), actor, f"ingest_scan:{scan.scan_id}"))
            self._save(record)
        return result, point

    def get_timeline(self, patient_id, include_forecast=False, horizon_days=3):
        """Severity timeline plus optional forecast and medication overlay."""
        record = self._load(patient_id)
        points = record.patient.timeline
        payload = {
            "patient_id": patient_id,
            "points": [p.to_json() for p in points],
            "medications": [m.to_json() for m in record.patient.medications],
            "forecast": [],
            "correlations": [],
            "notes": [],
        }
        if include_forecast:
            if len(points) >= 2:
                payload["forecast"] = [p.to_json() for p in forecast(points, horizon_days)]
            else:
                payload["notes"].append("insufficient-data: forecast needs >= 2 points")
        if points and record.patient.medications:
            payload["correlations"] = [
                e.to_json() for e in correlate_medications(points, record.patient.medications)
            ]
        return payload

    def triage_queue(self, horizon_days=3):
        """Patients ordered by forecast severity (descending).

        Key preference: forecast S at +``horizon_days``; else the latest
        observed S; patients with no severity data sort last in registration
        order.  Ties break by ascending patient id.
        """
        entries = []
        no_data = []
        for pid in self.patient_ids():
            record = self._load(pid)
            points = [p for p in record.patient.timeline if not p.is_forecast]
            if not points:
                no_data.append((record.registered_seq, pid))
                continue
            current = points[-1].s
            slope = 0.0
            forecast_s = current
            if len(points) >= 2:
                forecast_s = forecast(points, horizon_days)[-1].s
                slope = trend_slope(points)
            entries.append(
                {
                    "patient_id": pid,
                    "current_s": current,
                    "trend_slope": slope,
                    "forecast_s": forecast_s,
                }
            )
        entries.sort(key=lambda e: (-e["forecast_s"], e["patient_id"]))
        for _, pid in sorted(no_data):
            entries.append({"patient_id": pid, "current_s": None, "trend_slope": None, "forecast_s": None})
        return entries
