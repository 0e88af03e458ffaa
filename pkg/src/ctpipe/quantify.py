"""Severity quantification from final-convolution activations and
class-score gradients, plus the normalized severity score, progression
forecasting and the descriptive medication-association summary.

The quantifier weights each feature map by the spatial mean of the class
gradient, takes the per-map spatial maximum of (weight x activation) and sums
the maxima through a final ReLU.  The weight multiplies before the spatial
max, so a negative weight selects that map's minimum activation; the more
common activation-map variant is available as ``mode="cam_sum"``.
"""

from dataclasses import dataclass
from datetime import timedelta
from typing import Optional

import numpy as np

ASSOCIATION_DISCLAIMER = "association, not causation"

_DAY_SECONDS = 86400.0


class UndefinedBaselineError(ValueError):
    """Current score is positive but the baseline score is zero; the caller
    must re-baseline before a severity percentage is meaningful."""


class CapturePointError(AttributeError):
    """The model does not expose a final-convolution capture point."""


@dataclass
class QuantificationResult:
    q: float
    per_map_contributions: np.ndarray
    segment_id: str = ""


def cam_weights(grads):
    """Per-map weights: the spatial mean of the class gradient.

    ``grads`` has shape (N, h, w) holding d(class score)/d(activation).
    """
    g = np.asarray(grads, dtype=np.float64)
    if g.ndim != 3:
        raise ValueError(f"gradients must be (N, h, w), got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradients contain non-finite values")
    return g.mean(axis=(1, 2))


def quantify(maps, weights, segment_id="", mode="max"):
    """Quantification score from activation maps and per-map weights.

    mode "max" (default): contribution_k = max_ij(w_k * A_k[i, j]) and
    Q = ReLU(sum_k contribution_k), with the sum accumulated in map order.
    mode "cam_sum": the weighted activation map is ReLU-ed pixelwise and
    summed, giving an area-like magnitude.
    """
    A = np.asarray(maps, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if A.ndim != 3:
        raise ValueError(f"maps must be (N, h, w), got shape {A.shape}")
    if w.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} weights, got shape {w.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(w))):
        raise ValueError("activations and weights must be finite")
    if mode == "max":
        contributions = np.empty(A.shape[0], dtype=np.float64)
        total = 0.0
        for k in range(A.shape[0]):
            contributions[k] = np.max(w[k] * A[k])
            total += contributions[k]
        q = total if total > 0.0 else 0.0
    elif mode == "cam_sum":
        cam = np.tensordot(w, A, axes=1)
        q = float(np.maximum(cam, 0.0).sum())
        contributions = (w[:, None, None] * A).sum(axis=(1, 2))
    else:
        raise ValueError(f"unknown quantification mode '{mode}'")
    return QuantificationResult(q=float(q), per_map_contributions=contributions, segment_id=segment_id)


def quantify_segment(model, x, class_index=1, segment_id="", mode="max"):
    """Run a forward pass, capture the last-convolution activations, and
    differentiate the class score with respect to them.

    ``model`` must expose ``forward_features``/``head``; ``x`` is one
    normalized input of shape (3, H, W) or (1, 3, H, W).
    """
    import torch

    if not (hasattr(model, "forward_features") and hasattr(model, "head")):
        raise CapturePointError("model lacks forward_features/head capture points")
    if hasattr(model, "eval"):
        model.eval()
    arr = x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))
    if arr.dim() == 3:
        arr = arr[None]
    with torch.no_grad():
        feats = model.forward_features(arr)
    feats = feats.detach().requires_grad_(True)
    score = model.head(feats)[0, class_index]
    (grads,) = torch.autograd.grad(score, feats)
    maps = feats.detach()[0].numpy().astype(np.float64)
    g = grads[0].numpy().astype(np.float64)
    return quantify(maps, cam_weights(g), segment_id=segment_id, mode=mode)


def quantify_scan(segment_results):
    """Scan-level score: the sum of Q over positively classified segments."""
    return float(sum(r.q for r in segment_results if r.label == "positive"))


def severity(q_current, q_initial):
    """Severity percentage of the current score relative to the baseline.

    Both zero means recovered/never-quantified (S = 0); a zero baseline with a
    positive current score has no defined percentage.
    """
    if q_current < 0 or q_initial < 0:
        raise ValueError("quantification scores must be nonnegative")
    if q_initial == 0:
        if q_current == 0:
            return 0.0
        raise UndefinedBaselineError("baseline score is zero; re-baseline required")
    return (q_current / q_initial) * 100.0


def _days_since(t0, t):
    return (t - t0).total_seconds() / _DAY_SECONDS


def _ols_line(xs, ys):
    """Least-squares slope and intercept for y = slope * x + intercept."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x_mean, y_mean = xs.mean(), ys.mean()
    denom = np.sum((xs - x_mean) ** 2)
    if denom == 0.0:
        return 0.0, float(y_mean)
    slope = float(np.sum((xs - x_mean) * (ys - y_mean)) / denom)
    return slope, float(y_mean - slope * x_mean)


def forecast(timeline, horizon_days):
    """Extrapolate the severity score one point per day over the horizon.

    Fits a least-squares line through the most recent ``min(3, available)``
    observed points and clamps predictions at zero.
    """
    points = [p for p in timeline if not p.is_forecast]
    if len(points) < 2:
        raise ValueError("forecast requires at least 2 observed points")
    if horizon_days < 1:
        raise ValueError("horizon_days must be positive")
    recent = points[-min(3, len(points)) :]
    t0 = points[0].timestamp
    xs = [_days_since(t0, p.timestamp) for p in recent]
    ys = [p.s for p in recent]
    slope, intercept = _ols_line(xs, ys)
    last = points[-1].timestamp
    out = []
    for d in range(1, horizon_days + 1):
        t = last + timedelta(days=d)
        s = slope * _days_since(t0, t) + intercept
        out.append(_forecast_point(t, max(0.0, s)))
    return out


def _forecast_point(timestamp, s):
    from .scans import SeverityPoint

    return SeverityPoint(timestamp=timestamp, q=None, s=s, is_forecast=True)


def trend_slope(timeline):
    """Severity slope (per day) of the least-squares line through the most
    recent ``min(3, available)`` observed points; None with fewer than 2."""
    points = [p for p in timeline if not p.is_forecast]
    if len(points) < 2:
        return None
    recent = points[-min(3, len(points)) :]
    t0 = points[0].timestamp
    slope, _ = _ols_line([_days_since(t0, p.timestamp) for p in recent], [p.s for p in recent])
    return slope


@dataclass
class MedicationEffect:
    """Severity-slope change around one medication start; descriptive only."""

    name: str
    start: object
    status: str  # "ok" | "insufficient-data"
    slope_before: Optional[float] = None
    slope_after: Optional[float] = None
    slope_delta: Optional[float] = None
    disclaimer: str = ASSOCIATION_DISCLAIMER

    def to_json(self):
        return {
            "name": self.name,
            "start": self.start.isoformat(),
            "status": self.status,
            "slope_before": self.slope_before,
            "slope_after": self.slope_after,
            "slope_delta": self.slope_delta,
            "disclaimer": self.disclaimer,
        }


def correlate_medications(timeline, medications):
    """Per-medication before/after severity-slope deltas.

    Windows are the ``min(3, available)`` observed points strictly before and
    at-or-after each medication start; fewer than two points on either side
    yields an "insufficient-data" entry.
    """
    points = [p for p in timeline if not p.is_forecast]
    if not points:
        raise ValueError("timeline is empty")
    t0 = points[0].timestamp
    out = []
    for med in medications:
        before = [p for p in points if p.timestamp < med.start][-3:]
        after = [p for p in points if p.timestamp >= med.start][:3]
        if len(before) < 2 or len(after) < 2:
            out.append(MedicationEffect(name=med.name, start=med.start, status="insufficient-data"))
            continue
        slope_b, _ = _ols_line([_days_since(t0, p.timestamp) for p in before], [p.s for p in before])
        slope_a, _ = _ols_line([_days_since(t0, p.timestamp) for p in after], [p.s for p in after])
        out.append(
            MedicationEffect(
                name=med.name,
                start=med.start,
                status="ok",
                slope_before=slope_b,
                slope_after=slope_a,
                slope_delta=slope_a - slope_b,
            )
        )
    return out
