"""HTTP API over the patient store and the diagnosis pipeline.

Endpoints (JSON payloads documented in the README):

    POST /patients
    GET  /patients/{id}
    POST /patients/{id}/scans          multipart: manifest fragment + PNGs
    POST /patients/{id}/medications
    GET  /patients/{id}/timeline?forecast=true&horizon=3
    GET  /triage
    GET  /healthz

Authentication is a static bearer token: set API_TOKEN and requests must send
``Authorization: Bearer <token>`` (``/healthz`` stays open).  Environment:
STORE_DIR, API_TOKEN, MODEL_PATH.
"""

import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, File, Header, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .diagnose import DiagnosisPipeline
from .model import load_model
from .preprocess import PreprocConfig
from .scans import ManifestError, MedicationEvent, load_manifest
from .segment import SegmenterSpec
from .store import NotFoundError, PatientStore, StoreError


class PatientIn(BaseModel):
    age: int
    sex: str
    prior_history: list[str] = []
    patient_id: Optional[str] = None


class MedicationIn(BaseModel):
    name: str
    start: datetime
    end: Optional[datetime] = None
    dosage_note: str = ""


def create_app(store_dir=None, model_path=None, api_token=None, pipeline=None):
    store_dir = store_dir or os.environ.get("STORE_DIR", "./store")
    model_path = model_path or os.environ.get("MODEL_PATH")
    token = api_token if api_token is not None else os.environ.get("API_TOKEN")

    store = PatientStore(store_dir)
    if pipeline is None and model_path and Path(model_path).exists():
        pipeline = DiagnosisPipeline(
            model=load_model(model_path), preproc=PreprocConfig(), segmenter=SegmenterSpec()
        )

    app = FastAPI(title="ctpipe", version="0.1.0")
    app.state.store = store
    app.state.pipeline = pipeline
    # the dashboard is served from its own origin; auth stays on the token
    app.add_middleware(
        CORSMiddleware,
        allow_origins=os.environ.get("CORS_ORIGINS", "*").split(","),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_auth(authorization: Optional[str] = Header(default=None)):
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    auth = Depends(require_auth)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": app.state.pipeline is not None}

    @app.post("/patients", dependencies=[auth], status_code=201)
    def register_patient(body: PatientIn):
        try:
            pid = store.register_patient(
                {"age": body.age, "sex": body.sex},
                prior_history=body.prior_history,
                patient_id=body.patient_id,
            )
        except StoreError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"patient_id": pid}

    @app.get("/patients/{patient_id}", dependencies=[auth])
    def get_patient(patient_id: str):
        try:
            return store.get(patient_id).to_json()
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/patients/{patient_id}/medications", dependencies=[auth], status_code=201)
    def add_medication(patient_id: str, body: MedicationIn):
        try:
            event = MedicationEvent(
                name=body.name, start=body.start, end=body.end, dosage_note=body.dosage_note
            )
            record = store.add_medication(patient_id, event)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"medications": [m.to_json() for m in record.patient.medications]}

    @app.post("/patients/{patient_id}/scans", dependencies=[auth], status_code=201)
    async def ingest_scan(patient_id: str, manifest: UploadFile = File(...), images: list[UploadFile] = File(...)):
        if app.state.pipeline is None:
            raise HTTPException(status_code=503, detail="no model loaded (set MODEL_PATH)")
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "images").mkdir()
            (tmp / "manifest.csv").write_bytes(await manifest.read())
            for up in images:
                name = Path(up.filename).name
                (tmp / "images" / name).write_bytes(await up.read())
            try:
                scans = load_manifest(tmp / "manifest.csv")
            except ManifestError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        if not scans:
            raise HTTPException(status_code=422, detail="manifest fragment contains no scans")
        out = []
        for scan in sorted(scans, key=lambda s: s.acquired_at):
            try:
                result, point = store.ingest_and_diagnose(patient_id, scan, app.state.pipeline)
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            except StoreError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            out.append(
                {"diagnosis": result.to_json(), "severity_point": point.to_json() if point else None}
            )
        return {"results": out}

    @app.get("/patients/{patient_id}/timeline", dependencies=[auth])
    def get_timeline(patient_id: str, forecast: bool = False, horizon: int = 3):
        try:
            return store.get_timeline(patient_id, include_forecast=forecast, horizon_days=horizon)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/triage", dependencies=[auth])
    def triage():
        return {"queue": store.triage_queue()}

    return app
