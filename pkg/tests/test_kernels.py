"""Kernel correctness: erosion vs a full-window oracle, RLE runs, distances,
overlap counts, and numpy/numba backend equivalence."""

import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chartforge import kernels

bitmaps = hnp.arrays(
    dtype=bool,
    shape=st.tuples(st.integers(1, 24), st.integers(1, 24)),
)


def erode_oracle(mask, radius):
    """Literal definition: keep a pixel iff its full square window fits and
    is entirely foreground (outside the image counts as background)."""
    h, w = mask.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=bool)
    padded[radius:radius + h, radius:radius + w] = mask
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            out[y, x] = padded[y:y + 2 * radius + 1,
                               x:x + 2 * radius + 1].all()
    return out


@given(bitmaps, st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_erode_square_matches_full_window_oracle(mask, radius):
    got = kernels._erode_square_np(mask, radius)
    assert np.array_equal(got, erode_oracle(mask, radius))


def test_erode_radius_zero_is_identity():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    out = kernels.erode_square(mask, 0)
    assert np.array_equal(out, mask)
    out[0, 0] = True
    assert not mask[0, 0]  # copy, not a view


def test_erode_border_always_clears():
    mask = np.ones((6, 6), dtype=bool)
    out = kernels.erode_square(mask, 1)
    assert not out[0].any() and not out[-1].any()
    assert not out[:, 0].any() and not out[:, -1].any()
    assert out[1:-1, 1:-1].all()


@given(hnp.arrays(dtype=bool, shape=st.integers(0, 200)))
@settings(max_examples=60, deadline=None)
def test_rle_counts_reconstructs_input(flat):
    counts = kernels.rle_counts(flat)
    assert counts.sum() == flat.size
    values = np.arange(len(counts)) % 2 == 1
    assert np.array_equal(np.repeat(values, counts), flat)
    # leading-background convention: only the first count may be zero
    if len(counts):
        assert (counts[1:] > 0).all()


@given(bitmaps, st.floats(-30, 30), st.floats(-30, 30))
@settings(max_examples=60, deadline=None)
def test_min_dist_sq_matches_brute_force(mask, py, px):
    ys, xs = np.nonzero(mask)
    got = kernels.min_dist_sq(ys.astype(float), xs.astype(float), py, px)
    if ys.size == 0:
        assert got == np.inf
    else:
        want = min((y - py) ** 2 + (x - px) ** 2 for y, x in zip(ys, xs))
        assert got == pytest.approx(want, abs=1e-9)


@given(bitmaps)
@settings(max_examples=60, deadline=None)
def test_mask_overlap_counts(a):
    rng = np.random.default_rng(a.sum())
    b = rng.random(a.shape) > 0.5
    inter, union = kernels.mask_overlap(a, b)
    assert inter == int((a & b).sum())
    assert union == int((a | b).sum())
    assert inter <= union


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")
class TestBackendEquivalence:
    @given(bitmaps, st.integers(1, 3))
    @settings(max_examples=40, deadline=None)
    def test_erode(self, mask, radius):
        assert np.array_equal(kernels._erode_square_nb(mask, radius),
                              kernels._erode_square_np(mask, radius))

    @given(hnp.arrays(dtype=bool, shape=st.integers(0, 120)))
    @settings(max_examples=40, deadline=None)
    def test_rle(self, flat):
        assert np.array_equal(kernels._rle_counts_nb(flat),
                              kernels._rle_counts_np(flat))

    @given(bitmaps, st.floats(-10, 40), st.floats(-10, 40))
    @settings(max_examples=40, deadline=None)
    def test_min_dist(self, mask, py, px):
        ys, xs = np.nonzero(mask)
        ys, xs = ys.astype(float), xs.astype(float)
        a = kernels._min_dist_sq_nb(ys, xs, py, px)
        b = kernels._min_dist_sq_np(ys, xs, py, px)
        assert a == b or (np.isinf(a) and np.isinf(b))

    @given(bitmaps)
    @settings(max_examples=40, deadline=None)
    def test_overlap(self, a):
        rng = np.random.default_rng(int(a.sum()) + 1)
        b = rng.random(a.shape) > 0.4
        assert kernels._mask_overlap_nb(a.ravel(), b.ravel()) == \
            kernels._mask_overlap_np(a, b)


def test_no_numba_env_flag_forces_numpy_path():
    code = (
        "import os; os.environ['CHARTFORGE_NO_NUMBA'] = '1';"
        "import chartforge.kernels as k; assert not k.USE_NUMBA"
    )
    subprocess.run([sys.executable, "-c", code], check=True)
