"""Input validation helpers shared across the pipeline modules."""

import numpy as np


def as_image(x, name="image"):
    """Coerce to a 2-D float array and check it is finite.

    Returns a float64/float32 ndarray; raises ValueError on anything that is
    not a finite 2-D grid.
    """
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_unit_range(arr, name="image"):
    """Raise if any value falls outside [0, 1]."""
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} intensities must lie in [0, 1]")


def check_window(window, shape):
    """Validate an odd square filter window against an image shape."""
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window < 3:
        raise ValueError(f"window must be >= 3, got {window}")
    if window > min(shape):
        raise ValueError(f"window {window} exceeds image extent {shape}")


def check_band(band, name="intensity_band"):
    """Validate a (low, high) sub-interval of [0, 1]."""
    low, high = band
    if not (0.0 <= low < high <= 1.0):
        raise ValueError(f"{name} must satisfy 0 <= low < high <= 1, got {band}")
    return float(low), float(high)


def check_probability(p, name):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return float(p)
