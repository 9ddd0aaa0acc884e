"""Hot pixel loops: square erosion, RLE runs, point-to-mask distance, IoU counts.

Every kernel has a pure-numpy implementation and, when numba is importable,
an @njit twin. The public wrappers pick the backend once at import time;
set CHARTFORGE_NO_NUMBA=1 to force the numpy path. Both implementations
stay importable so tests and benchmarks can compare them directly.
"""

import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("CHARTFORGE_NO_NUMBA") != "1"


# --- square (Chebyshev) erosion -------------------------------------------
# Separable: a pixel survives iff the full (2r+1) window along each axis is
# foreground and inside the image. Out-of-image counts as background, so
# anything within r of the border erodes away.

def _erode_square_np(mask, radius):
    if radius <= 0:
        return mask.copy()
    src = mask
    for axis in (0, 1):
        dst = src.copy()
        for s in range(1, radius + 1):
            if axis == 0:
                dst[s:, :] &= src[:-s, :]
                dst[:s, :] = False
                dst[:-s, :] &= src[s:, :]
                dst[-s:, :] = False
            else:
                dst[:, s:] &= src[:, :-s]
                dst[:, :s] = False
                dst[:, :-s] &= src[:, s:]
                dst[:, -s:] = False
        src = dst
    return src


if HAS_NUMBA:
    @njit(cache=True)
    def _erode_square_nb(mask, radius):
        h, w = mask.shape
        tmp = np.zeros((h, w), np.bool_)
        for i in range(h):
            for j in range(w):
                lo = i - radius
                hi = i + radius
                if lo < 0 or hi >= h:
                    continue
                ok = True
                for k in range(lo, hi + 1):
                    if not mask[k, j]:
                        ok = False
                        break
                tmp[i, j] = ok
        out = np.zeros((h, w), np.bool_)
        for i in range(h):
            for j in range(w):
                lo = j - radius
                hi = j + radius
                if lo < 0 or hi >= w:
                    continue
                ok = True
                for k in range(lo, hi + 1):
                    if not tmp[i, k]:
                        ok = False
                        break
                out[i, j] = ok
        return out
else:
    _erode_square_nb = None


def erode_square(mask, radius):
    """Erode a bool H,W mask by a square structuring element of the given radius."""
    mask = np.ascontiguousarray(mask, dtype=bool)
    if USE_NUMBA:
        return _erode_square_nb(mask, radius)
    return _erode_square_np(mask, radius)


# --- run lengths ----------------------------------------------------------
# Counts of alternating background/foreground runs over a flat pixel array,
# always starting with background (a leading 0 when pixel 0 is foreground).

def _rle_counts_np(flat):
    n = flat.size
    if n == 0:
        return np.zeros(0, np.int64)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [n]))
    counts = np.diff(bounds).astype(np.int64)
    if flat[0]:
        counts = np.concatenate(([0], counts))
    return counts


if HAS_NUMBA:
    @njit(cache=True)
    def _rle_counts_nb(flat):
        n = flat.size
        if n == 0:
            return np.zeros(0, np.int64)
        runs = 1
        for i in range(1, n):
            if flat[i] != flat[i - 1]:
                runs += 1
        lead = 1 if flat[0] else 0
        counts = np.zeros(runs + lead, np.int64)
        pos = lead
        length = 1
        for i in range(1, n):
            if flat[i] != flat[i - 1]:
                counts[pos] = length
                pos += 1
                length = 1
            else:
                length += 1
        counts[pos] = length
        return counts
else:
    _rle_counts_nb = None


def rle_counts(flat):
    """Run lengths of a flat bool array, leading-background convention."""
    flat = np.ascontiguousarray(flat, dtype=bool)
    if USE_NUMBA:
        return _rle_counts_nb(flat)
    return _rle_counts_np(flat)


# --- nearest-foreground distance ------------------------------------------

def _min_dist_sq_np(ys, xs, py, px):
    if ys.size == 0:
        return np.inf
    return float(np.min((ys - py) ** 2 + (xs - px) ** 2))


if HAS_NUMBA:
    @njit(cache=True)
    def _min_dist_sq_nb(ys, xs, py, px):
        if ys.size == 0:
            return np.inf
        best = np.inf
        for i in range(ys.size):
            dy = ys[i] - py
            dx = xs[i] - px
            d = dy * dy + dx * dx
            if d < best:
                best = d
        return best
else:
    _min_dist_sq_nb = None


def min_dist_sq(ys, xs, py, px):
    """Squared distance from point (px, py) to the nearest of (xs[i], ys[i])."""
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if USE_NUMBA:
        return _min_dist_sq_nb(ys, xs, float(py), float(px))
    return _min_dist_sq_np(ys, xs, float(py), float(px))


# --- mask overlap counts --------------------------------------------------

def _mask_overlap_np(a, b):
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter, union


if HAS_NUMBA:
    @njit(cache=True)
    def _mask_overlap_nb(a, b):
        inter = 0
        union = 0
        for i in range(a.size):
            if a[i] and b[i]:
                inter += 1
            if a[i] or b[i]:
                union += 1
        return inter, union
else:
    _mask_overlap_nb = None


def mask_overlap(a, b):
    """(intersection, union) pixel counts for two equal-shape bool masks."""
    a = np.ascontiguousarray(a, dtype=bool)
    b = np.ascontiguousarray(b, dtype=bool)
    if USE_NUMBA:
        return _mask_overlap_nb(a.ravel(), b.ravel())
    return _mask_overlap_np(a, b)
