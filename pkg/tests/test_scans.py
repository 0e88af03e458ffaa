import math
from datetime import datetime

import numpy as np
import pytest

from ctpipe.scans import (
    CTScan,
    ManifestError,
    ROISegment,
    Slice,
    load_manifest,
    load_patients,
    validate_scan,
    write_manifest,
)
from ctpipe.synth import SynthSpec, generate


def _write_rows(path, rows):
    header = "scan_id,patient_id,acquired_at,slice_index,label,image_path\n"
    path.write_text(header + "".join(rows))


def _png(path, value=128, size=16):
    from PIL import Image

    arr = np.full((size, size), value, dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def test_empty_manifest_gives_empty_list(tmp_path):
    path = tmp_path / "manifest.csv"
    _write_rows(path, [])
    assert load_manifest(path) == []


def test_missing_manifest_file_errors(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "nope.csv")


def test_label_outside_taxonomy_names_line(tmp_path):
    _png(tmp_path / "a.png")
    path = tmp_path / "manifest.csv"
    _write_rows(path, ["s1,p1,2020-04-01T09:00:00,0,flu,a.png\n"])
    with pytest.raises(ManifestError, match="line 2.*flu"):
        load_manifest(path)


def test_undersized_image_rejected(tmp_path):
    _png(tmp_path / "small.png", size=4)
    path = tmp_path / "manifest.csv"
    _write_rows(path, ["s1,p1,2020-04-01T09:00:00,0,healthy,small.png\n"])
    with pytest.raises(ManifestError, match="line 2.*undersized"):
        load_manifest(path)


def test_missing_image_file_names_line(tmp_path):
    _png(tmp_path / "a.png")
    path = tmp_path / "manifest.csv"
    _write_rows(
        path,
        [
            "s1,p1,2020-04-01T09:00:00,0,healthy,a.png\n",
            "s2,p1,2020-04-01T09:00:00,0,healthy,missing.png\n",
        ],
    )
    with pytest.raises(ManifestError, match="line 3.*missing image"):
        load_manifest(path)


def test_synthetic_manifest_counts(tmp_path):
    # 10 scans x 3 slices by construction of the generator spec
    generate(SynthSpec(n_patients=10, slices_per_scan=3, image_size=64, seed=0), tmp_path)
    scans = load_manifest(tmp_path / "manifest.csv")
    assert len(scans) == 10
    assert sum(len(s.slices) for s in scans) == 30


def test_loader_output_is_normalized_and_valid(tmp_path):
    generate(SynthSpec(n_patients=4, slices_per_scan=2, image_size=64, seed=1), tmp_path)
    for scan in load_manifest(tmp_path / "manifest.csv"):
        assert validate_scan(scan) == []
        for sl in scan.slices:
            assert sl.pixels.min() >= 0.0 and sl.pixels.max() <= 1.0


def test_manifest_round_trip(tmp_path):
    generate(SynthSpec(n_patients=3, slices_per_scan=2, image_size=64, seed=2), tmp_path / "a")
    scans = load_manifest(tmp_path / "a" / "manifest.csv")
    manifest2 = write_manifest(scans, tmp_path / "b")
    reloaded = load_manifest(manifest2)
    assert len(reloaded) == len(scans)
    for s1, s2 in zip(scans, reloaded):
        assert (s1.scan_id, s1.patient_id, s1.acquired_at, s1.label) == (
            s2.scan_id,
            s2.patient_id,
            s2.acquired_at,
            s2.label,
        )
        assert [a.index for a in s1.slices] == [b.index for b in s2.slices]
        for a, b in zip(s1.slices, s2.slices):
            np.testing.assert_array_equal(a.pixels, b.pixels)  # loader-quantized data


def test_validate_scan_clean():
    px = np.full((16, 16), 0.5, dtype=np.float32)
    scan = CTScan("s", "p", datetime(2020, 4, 1), (Slice(px, 0), Slice(px, 1)), "healthy")
    assert validate_scan(scan) == []


def test_validate_scan_non_increasing_index():
    px = np.full((16, 16), 0.5, dtype=np.float32)
    scan = CTScan("s", "p", datetime(2020, 4, 1), (Slice(px, 0), Slice(px, 0), Slice(px, 1)), "healthy")
    assert any("non-increasing index" in v for v in validate_scan(scan))


def test_validate_scan_non_finite_pixel():
    px = np.full((16, 16), 0.5, dtype=np.float32)
    bad = px.copy()
    bad[3, 3] = math.nan
    scan = CTScan("s", "p", datetime(2020, 4, 1), (Slice(px, 0), Slice(bad, 1)), "healthy")
    assert any("non-finite pixel" in v for v in validate_scan(scan))


def test_validate_scan_label_taxonomy():
    px = np.full((16, 16), 0.5, dtype=np.float32)
    scan = CTScan("s", "p", datetime(2020, 4, 1), (Slice(px, 0),), "flu")
    assert any("taxonomy" in v for v in validate_scan(scan))


def test_roisegment_from_mask_tight_bbox_and_area():
    mask = np.zeros((10, 12), dtype=bool)
    mask[2:5, 3:7] = True
    seg = ROISegment.from_mask("id", 0, mask)
    assert seg.bbox == (2, 3, 3, 4)
    assert seg.area_px == 12
    assert seg.mask_crop().all()


def test_patients_companion_file(tmp_path):
    generate(SynthSpec(n_patients=5, slices_per_scan=1, image_size=64, seed=3), tmp_path)
    records = load_patients(tmp_path / "patients.json")
    assert len(records) == 5
    assert all(r.age >= 20 and r.sex in ("F", "M") for r in records)
