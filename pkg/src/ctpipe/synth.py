"""Deterministic synthetic CT-like fixtures.

Phantoms are two dark lung ellipses inside a bright torso ellipse on a dark
background; positive scans carry mid-intensity lesion blobs inside the lung
fields.  Realism is explicitly not a goal: the images exist to exercise the
segmentation, decision-rule and severity contracts end to end, with the
lesion intensity band co-designed against the baseline segmenter band.

Output layout under ``out_dir``::

    manifest.csv       slice records (see scans module)
    patients.json      demographics + (empty) medication lists
    images/*.png       8-bit grayscale slices
    ground_truth/*.png lesion masks (255 = lesion), one per slice
"""

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from PIL import Image

from .scans import MANIFEST_FIELDS, PatientRecord, write_patients


@dataclass
class SynthSpec:
    n_patients: int = 10
    slices_per_scan: int = 3
    image_size: int = 192
    lesion_count_range: tuple = (1, 3)
    lesion_intensity_band: tuple = (0.45, 0.65)
    positive_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1 or self.slices_per_scan < 1:
            raise ValueError("n_patients and slices_per_scan must be positive")
        if self.image_size < 64:
            raise ValueError("image_size must be >= 64")
        lo, hi = self.lesion_count_range
        if not (1 <= lo <= hi):
            raise ValueError("lesion_count_range must satisfy 1 <= lo <= hi")
        blo, bhi = self.lesion_intensity_band
        if not (0.0 < blo < bhi < 1.0):
            raise ValueError("lesion_intensity_band must be inside (0, 1)")


_BACKGROUND = 0.02
_TORSO = 0.85
_LUNG = 0.06
_NOISE_SIGMA = 0.006


def _ellipse_mask(size, center, semi_axes):
    rr, cc = np.mgrid[0:size, 0:size]
    (cr, cc0), (ar, ac) = center, semi_axes
    return ((rr - cr) / ar) ** 2 + ((cc - cc0) / ac) ** 2 <= 1.0


def _lung_geometry(size):
    lungs = []
    for side in (-1, 1):
        center = (0.52 * size, (0.5 + side * 0.17) * size)
        semi = (0.24 * size, 0.13 * size)
        lungs.append((center, semi))
    return lungs


def _phantom_slice(size, rng, lesion_specs):
    img = np.full((size, size), _BACKGROUND, dtype=np.float64)
    torso = _ellipse_mask(size, (0.5 * size, 0.5 * size), (0.42 * size, 0.38 * size))
    img[torso] = _TORSO
    lesion_mask = np.zeros((size, size), dtype=bool)
    for center, semi in _lung_geometry(size):
        img[_ellipse_mask(size, center, semi)] = _LUNG
    for center, semi, intensity in lesion_specs:
        blob = _ellipse_mask(size, center, semi)
        img[blob] = intensity
        lesion_mask |= blob
    img += rng.normal(0.0, _NOISE_SIGMA, img.shape)
    return np.clip(img, 0.0, 1.0), lesion_mask


def _draw_lesions(size, spec, rng):
    """Place 1..k disjoint lesion blobs inside the lung fields."""
    lo, hi = spec.lesion_count_range
    count = int(rng.integers(lo, hi + 1))
    blo, bhi = spec.lesion_intensity_band
    lungs = _lung_geometry(size)
    placed = []
    attempts = 0
    while len(placed) < count and attempts < 200:
        attempts += 1
        (lc, ls) = lungs[int(rng.integers(0, 2))]
        ar = float(rng.uniform(0.026 * size, 0.05 * size))
        ac = float(rng.uniform(0.026 * size, 0.05 * size))
        # keep the blob well inside the lung so it never touches the lung wall
        max_dr = ls[0] - ar - 4
        max_dc = ls[1] - ac - 4
        if max_dr <= 0 or max_dc <= 0:
            continue
        cr = lc[0] + float(rng.uniform(-max_dr, max_dr)) * 0.8
        cc = lc[1] + float(rng.uniform(-max_dc, max_dc)) * 0.8
        # enforce separation so smoothing cannot merge neighbouring blobs
        ok = True
        for (pr, pc), (par, pac), _ in placed:
            if np.hypot(pr - cr, pc - cc) < (max(par, pac) + max(ar, ac) + 6):
                ok = False
                break
        if ok:
            placed.append(((cr, cc), (ar, ac), float(rng.uniform(blo, bhi))))
    return placed


def _save_png(arr01, path):
    data = np.clip(np.rint(arr01 * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def generate(spec, out_dir):
    """Write a synthetic dataset; byte-identical output for equal specs."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    gt_dir = out_dir / "ground_truth"
    images_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    n_positive = int(round(spec.positive_fraction * spec.n_patients))
    base_time = datetime(2020, 3, 1, 12, 0, 0)

    manifest = out_dir / "manifest.csv"
    patients = []
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for i in range(spec.n_patients):
            positive = i < n_positive
            patient_id = f"pt-{i:04d}"
            scan_id = f"scan-{i:04d}"
            label = "covid_positive" if positive else "healthy"
            acquired = (base_time + timedelta(hours=i)).isoformat()
            for s in range(spec.slices_per_scan):
                lesions = _draw_lesions(spec.image_size, spec, rng) if positive else []
                img, gt = _phantom_slice(spec.image_size, rng, lesions)
                name = f"{scan_id}_{s:03d}.png"
                _save_png(img, images_dir / name)
                _save_png(gt.astype(np.float64), gt_dir / name)
                writer.writerow([scan_id, patient_id, acquired, s, label, f"images/{name}"])
            patients.append(
                PatientRecord(
                    patient_id=patient_id,
                    age=int(rng.integers(20, 90)),
                    sex=str(rng.choice(["F", "M"])),
                )
            )
    patients_path = out_dir / "patients.json"
    write_patients(patients, patients_path)
    return {"manifest": manifest, "patients": patients_path, "ground_truth": gt_dir}
