"""Pluggable ROI extraction behind a single interface.

The deterministic classical baseline picks in-band intensities and takes
8-connected components; a learned segmenter (e.g. a UNet-family model exported
as TorchScript) plugs in through the same ``SegmenterSpec``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .preprocess import extract_thorax, select_slices, wiener_filter
from .scans import ROISegment
from .validation import as_image, check_band

_EIGHT_CONN = np.ones((3, 3), dtype=bool)


class SegmenterError(RuntimeError):
    """Raised when a learned segmenter reference cannot be loaded."""


@dataclass
class SegmenterSpec:
    kind: str = "baseline"  # "baseline" | "learned"
    model_ref: Optional[str] = None
    min_area_px: int = 32
    intensity_band: tuple = (0.25, 0.75)

    def __post_init__(self):
        if self.kind not in ("baseline", "learned"):
            raise ValueError(f"unknown segmenter kind '{self.kind}'")
        if self.min_area_px < 1:
            raise ValueError("min_area_px must be >= 1")
        check_band(self.intensity_band)

    def to_json(self):
        return {
            "kind": self.kind,
            "model_ref": self.model_ref,
            "min_area_px": self.min_area_px,
            "intensity_band": list(self.intensity_band),
        }

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "intensity_band" in d:
            d["intensity_band"] = tuple(d["intensity_band"])
        return cls(**d)


def _load_learned(model_ref):
    import warnings

    import torch

    if model_ref is None:
        raise SegmenterError("learned segmenter requires model_ref")
    try:
        with warnings.catch_warnings():
            # TorchScript is deprecated upstream but remains the interchange
            # format documented for segmenter models
            warnings.simplefilter("ignore", DeprecationWarning)
            module = torch.jit.load(str(model_ref), map_location="cpu")
    except Exception as exc:
        raise SegmenterError(f"cannot load segmenter model '{model_ref}': {exc}") from exc
    module.eval()
    return module


def _candidate_mask(image, spec, model=None):
    if spec.kind == "baseline":
        low, high = spec.intensity_band
        return (image >= low) & (image <= high)
    import torch

    module = model if model is not None else _load_learned(spec.model_ref)
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None, None]
        out = module(x)
    return (out[0, 0].numpy() > 0.5)


def segment(image, spec, slice_index=0, scan_id="", _model=None):
    """Extract ROI segments from one (thorax-cropped) image.

    Returns pairwise-disjoint segments sorted by descending area; components
    smaller than ``min_area_px`` are dropped.  Segment ids encode
    (scan id, slice index, component rank).
    """
    img = as_image(image)
    candidates = _candidate_mask(img, spec, model=_model)
    labels, n = ndimage.label(candidates, structure=_EIGHT_CONN)
    if n == 0:
        return []
    areas = ndimage.sum_labels(candidates, labels, index=np.arange(1, n + 1))
    objects = ndimage.find_objects(labels)
    comps = []
    for i in range(1, n + 1):
        if areas[i - 1] < spec.min_area_px:
            continue
        sl = objects[i - 1]
        comps.append((-int(areas[i - 1]), sl[0].start, sl[1].start, i))
    comps.sort()
    segments = []
    for rank, (_, _, _, i) in enumerate(comps):
        mask = labels == i
        seg_id = f"{scan_id}/s{slice_index}/r{rank}" if scan_id else f"s{slice_index}/r{rank}"
        segments.append(ROISegment.from_mask(seg_id, slice_index, mask, image=img))
    return segments


def _offset_segment(seg, offset, full_shape):
    """Re-express a crop-frame segment in the coordinates of the full slice."""
    r0, c0 = offset
    mask = np.zeros(full_shape, dtype=bool)
    ch, cw = seg.mask.shape
    mask[r0 : r0 + ch, c0 : c0 + cw] = seg.mask
    r, c, h, w = seg.bbox
    return ROISegment(
        segment_id=seg.segment_id,
        source_slice=seg.source_slice,
        mask=mask,
        bbox=(r + r0, c + c0, h, w),
        area_px=seg.area_px,
        crop=seg.crop,
    )


def segment_scan(scan, preproc_config, spec, seed=None):
    """Select slices, denoise, crop to the lung fields and segment each crop.

    Returned masks/bboxes are in full-slice coordinates so they line up with
    ground-truth masks and the original images.
    """
    model = _load_learned(spec.model_ref) if spec.kind == "learned" else None
    segments = []
    for sl in select_slices(scan, 2, seed=seed):
        filtered = wiener_filter(sl.pixels, preproc_config.wiener_window)
        thorax = extract_thorax(filtered)
        segs = segment(thorax.cropped, spec, slice_index=sl.index, scan_id=scan.scan_id, _model=model)
        r0, c0 = thorax.bbox[0], thorax.bbox[1]
        segments.extend(_offset_segment(s, (r0, c0), filtered.shape) for s in segs)
    return segments


class BaselineLesionSegmenter(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: list of images in, list of segment lists out."""

    def __init__(self, intensity_band=(0.25, 0.75), min_area_px=32):
        self.intensity_band = intensity_band
        self.min_area_px = min_area_px

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        spec = SegmenterSpec(
            kind="baseline", min_area_px=self.min_area_px, intensity_band=self.intensity_band
        )
        return [segment(img, spec, slice_index=i) for i, img in enumerate(X)]
