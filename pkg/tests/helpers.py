"""Test helpers: independent oracles and phantom builders.

The oracles here are deliberately naive (BFS flood fill, explicit loops) so
they stay independent of the scipy/numpy paths used by the implementation.
"""

from collections import deque

import numpy as np


def flood_components(mask):
    """8-connected components by BFS; returns a list of pixel-index sets."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            comp = set()
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                rr, cc = queue.popleft()
                comp.add((rr, cc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = rr + dr, cc + dc
                        if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            queue.append((nr, nc))
            comps.append(comp)
    return comps


def total_variation(img):
    """Anisotropic TV computed with explicit differences."""
    img = np.asarray(img, dtype=np.float64)
    tv = 0.0
    for r in range(img.shape[0]):
        for c in range(img.shape[1] - 1):
            tv += abs(img[r, c + 1] - img[r, c])
    for c in range(img.shape[1]):
        for r in range(img.shape[0] - 1):
            tv += abs(img[r + 1, c] - img[r, c])
    return tv


def brute_force_quantify(maps, weights):
    """Triple-loop Algorithm-1 oracle: per-map max of weight*activation,
    summed in map order, then ReLU."""
    total = 0.0
    contributions = []
    for k in range(len(maps)):
        best = None
        for i in range(maps.shape[1]):
            for j in range(maps.shape[2]):
                v = weights[k] * maps[k, i, j]
                if best is None or v > best:
                    best = v
        contributions.append(best)
        total += best
    q = total if total > 0.0 else 0.0
    return q, contributions


def brute_force_mean(grid):
    acc = 0.0
    n = 0
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            acc += grid[i, j]
            n += 1
    return acc / n


def disk_pair_phantom(size=96, disk_radius=None):
    """Bright field with two interior dark disks; returns (image, disk mask)."""
    radius = disk_radius or size // 8
    img = np.full((size, size), 0.85, dtype=np.float64)
    rr, cc = np.mgrid[0:size, 0:size]
    disks = np.zeros((size, size), dtype=bool)
    for ccol in (size // 3, 2 * size // 3):
        d = (rr - size // 2) ** 2 + (cc - ccol) ** 2 <= radius**2
        disks |= d
    img[disks] = 0.1
    return img, disks


def blob_image(size=64, blobs=(), background=0.05, value=0.5):
    """Flat background with filled rectangles: blobs = [(r, c, h, w), ...]."""
    img = np.full((size, size), background, dtype=np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for r, c, h, w in blobs:
        img[r : r + h, c : c + w] = value
        mask[r : r + h, c : c + w] = True
    return img, mask
