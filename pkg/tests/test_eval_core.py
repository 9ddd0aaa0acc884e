"""Matching and metric correctness, anchored to independent oracles:
exhaustive assignment search, set-arithmetic boundary bands, and a
hand-computed average-precision sweep."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import chartforge.eval_core as ec
from chartforge import errors
from chartforge.kernels import _erode_square_np


def exhaustive_best(scores, eligible):
    """(count, total) of the best assignment by full search; count first."""
    n, m = eligible.shape
    best = (0, 0.0)

    def rec(i, used, count, total):
        nonlocal best
        if i == n:
            if (count, total) > best:
                best = (count, total)
            return
        rec(i + 1, used, count, total)
        for j in range(m):
            if j not in used and eligible[i, j]:
                rec(i + 1, used | {j}, count + 1, total + scores[i, j])

    rec(0, frozenset(), 0, 0.0)
    return best


def all_optimal_matchings(scores, eligible, tol=1e-9):
    """Every pair list achieving the optimal (count, total)."""
    best_count, best_total = exhaustive_best(scores, eligible)
    n, m = eligible.shape
    out = []

    def rec(i, used, pairs, total):
        if i == n:
            if len(pairs) == best_count and total >= best_total - tol:
                out.append(sorted(pairs))
            return
        rec(i + 1, used, pairs, total)
        for j in range(m):
            if j not in used and eligible[i, j]:
                rec(i + 1, used | {j}, pairs + [(i, j)],
                    total + scores[i, j])

    rec(0, frozenset(), [], 0.0)
    return out


matrix_shapes = st.tuples(st.integers(0, 5), st.integers(0, 5))


@st.composite
def score_problems(draw, values=None):
    n, m = draw(matrix_shapes)
    if values is None:
        cell = st.floats(0.0, 1.0, allow_nan=False, width=32)
    else:
        cell = st.sampled_from(values)
    scores = np.array(
        [[draw(cell) for _ in range(m)] for _ in range(n)]).reshape(n, m)
    eligible = np.array(
        [[draw(st.booleans()) for _ in range(m)] for _ in range(n)]
    ).reshape(n, m).astype(bool)
    return scores, eligible


class TestHungarian:
    @given(score_problems())
    @settings(max_examples=120, deadline=None)
    def test_count_and_total_match_exhaustive_search(self, problem):
        scores, eligible = problem
        matching = ec.hungarian_match(scores, eligible)
        count, total = exhaustive_best(scores, eligible)
        assert len(matching.pairs) == count
        got_total = sum(scores[i, j] for i, j in matching.pairs)
        assert got_total == pytest.approx(total, abs=1e-7)
        for i, j in matching.pairs:
            assert eligible[i, j]

    @given(score_problems(values=[0.0, 0.25, 0.5, 1.0]))
    @settings(max_examples=80, deadline=None)
    def test_tie_break_is_lexicographically_smallest(self, problem):
        scores, eligible = problem
        matching = ec.hungarian_match(scores, eligible)
        optima = all_optimal_matchings(scores, eligible)
        if not optima:
            assert matching.pairs == []
            return
        assert sorted(matching.pairs) == min(optima)

    def test_count_beats_score_sum(self):
        # one high-score pair vs two lower-score pairs: surface form count wins
        scores = np.array([[0.9, 0.8], [0.85, 0.1]])
        eligible = np.ones((2, 2), dtype=bool)
        matching = ec.hungarian_match(scores, eligible)
        assert sorted(matching.pairs) == [(0, 1), (1, 0)]

    def test_shape_mismatch(self):
        with pytest.raises(errors.ShapeMismatch):
            ec.hungarian_match(np.zeros((2, 3)), np.ones((2, 2), dtype=bool))

    def test_empty_sides(self):
        matching = ec.hungarian_match(np.zeros((0, 3)),
                                      np.zeros((0, 3), dtype=bool))
        assert matching.pairs == []


class TestPoints:
    def build_mask(self, h=100, w=100, at=(50, 50)):
        m = np.zeros((h, w), dtype=bool)
        m[at] = True
        return m

    def test_radius_boundary_inclusive(self):
        gt = self.build_mask()
        hit = ec.eval_points([(45.0, 50.0)], [gt])   # distance exactly 5
        assert (hit.tp, hit.fp, hit.fn) == (1, 0, 0)
        miss = ec.eval_points([(44.5, 50.0)], [gt])  # distance 5.5
        assert (miss.tp, miss.fp, miss.fn) == (0, 1, 1)

    def test_point_inside_mask_matches_at_distance_zero(self):
        gt = np.zeros((20, 20), dtype=bool)
        gt[3:8, 3:8] = True
        res = ec.eval_points([(5.5, 5.5)], [gt])
        assert res.tp == 1 and res.f1 == 1.0

    def test_closer_point_wins_the_shared_mask(self):
        gt = self.build_mask()
        res = ec.eval_points([(50.0, 54.0), (50.0, 51.0)], [gt])
        assert res.tp == 1 and res.fp == 1

    def test_no_predictions_scores_zero(self):
        res = ec.eval_points([], [self.build_mask()])
        assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)


class TestBoxes:
    def test_iou_half_is_eligible(self):
        res = ec.eval_boxes([(0, 0, 10, 10)], [(0, 0, 10, 20)])
        assert ec.box_iou((0, 0, 10, 10), (0, 0, 10, 20)) == pytest.approx(0.5)
        assert res.tp == 1

    def test_just_under_half_is_not(self):
        b = (0, 0, 10, 20.05)
        assert ec.box_iou((0, 0, 10, 10), b) < 0.5
        res = ec.eval_boxes([(0, 0, 10, 10)], [b])
        assert res.tp == 0 and res.fp == 1 and res.fn == 1

    def test_identity_box(self):
        assert ec.box_iou((2, 3, 7, 9), (2, 3, 7, 9)) == 1.0

    @given(st.tuples(*[st.floats(0, 50, allow_nan=False) for _ in range(8)]))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, vals):
        a = (min(vals[0], vals[1]), min(vals[2], vals[3]),
             max(vals[0], vals[1]) + 1, max(vals[2], vals[3]) + 1)
        b = (min(vals[4], vals[5]), min(vals[6], vals[7]),
             max(vals[4], vals[5]) + 1, max(vals[6], vals[7]) + 1)
        iou = ec.box_iou(a, b)
        assert 0.0 <= iou <= 1.0
        assert iou == pytest.approx(ec.box_iou(b, a))


def boundary_oracle(a, b, dilations=(1, 2, 4, 8)):
    """Band IoU per dilation by literal set arithmetic, then the mean."""
    vals = []
    for d in dilations:
        band_a = a & ~_erode_square_np(a, d)
        band_b = b & ~_erode_square_np(b, d)
        union = int((band_a | band_b).sum())
        vals.append(int((band_a & band_b).sum()) / union if union else 0.0)
    return float(np.mean(vals))


class TestMasks:
    def line_mask(self, row, w=60, h=40, thick=2):
        m = np.zeros((h, w), dtype=bool)
        m[row:row + thick, 5:w - 5] = True
        return m

    def test_boundary_iou_identity(self):
        m = self.line_mask(10)
        assert ec.boundary_iou(m, m) == pytest.approx(1.0)

    def test_boundary_iou_matches_set_arithmetic(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a = rng.random((30, 30)) > 0.6
            b = rng.random((30, 30)) > 0.6
            assert ec.boundary_iou(a, b) == pytest.approx(
                boundary_oracle(a, b), abs=1e-9)

    def test_thin_category_dispatches_to_boundary(self, monkeypatch):
        calls = {"boundary": 0, "mask": 0}
        real_boundary, real_mask = ec.boundary_iou, ec.mask_iou

        def spy_boundary(a, b, *rest):
            calls["boundary"] += 1
            return real_boundary(a, b, *rest)

        def spy_mask(a, b):
            calls["mask"] += 1
            return real_mask(a, b)

        monkeypatch.setattr(ec, "boundary_iou", spy_boundary)
        monkeypatch.setattr(ec, "mask_iou", spy_mask)
        m = self.line_mask(12)
        ec.eval_masks([m], [m], "BoxMedianLine")
        assert calls["boundary"] > 0 and calls["mask"] == 0
        calls["boundary"] = 0
        box = np.zeros((40, 60), dtype=bool)
        box[5:30, 5:50] = True
        ec.eval_masks([box], [box], "VBar")
        assert calls["mask"] > 0 and calls["boundary"] == 0

    def test_unknown_category(self):
        m = self.line_mask(4)
        with pytest.raises(errors.UnknownCategory):
            ec.eval_masks([m], [m], "NotACategory")

    def test_self_eval_is_perfect(self):
        masks = [self.line_mask(r) for r in (5, 15, 25)]
        res = ec.eval_masks(masks, masks, "VBar")
        assert (res.precision, res.recall, res.f1) == (1.0, 1.0, 1.0)

    def test_miou_union(self):
        a, b = self.line_mask(5), self.line_mask(20)
        assert ec.miou_union([a, b], [a, b]) == 1.0
        assert ec.miou_union([], [a]) == 0.0
        with pytest.raises(errors.EmptyInput):
            ec.miou_union([a], [])

    def test_dimension_mismatch(self):
        with pytest.raises(errors.DimensionMismatch):
            ec.mask_iou(np.zeros((3, 3), bool), np.zeros((4, 4), bool))


class TestAggregate:
    def test_empty_input(self):
        with pytest.raises(errors.EmptyInput):
            ec.macro_aggregate([])

    def test_macro_means(self):
        s1 = ec.SampleMetrics.from_counts(1, 0, 0)
        s2 = ec.SampleMetrics.from_counts(1, 1, 1)
        rep = ec.macro_aggregate([s1, s2], miou_values=[1.0, 0.5])
        assert rep.macro_p == pytest.approx((1.0 + 0.5) / 2)
        assert rep.miou_union == pytest.approx(0.75)

    def test_misaligned_miou(self):
        s = ec.SampleMetrics.from_counts(1, 0, 0)
        with pytest.raises(errors.EmptyInput):
            ec.macro_aggregate([s], miou_values=[1.0, 0.5])

    def test_zero_counts_stay_finite(self):
        s = ec.SampleMetrics.from_counts(0, 0, 0)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)


def square_mask(y, x, side, h=128, w=128):
    m = np.zeros((h, w), dtype=bool)
    m[y:y + side, x:x + side] = True
    return m


class TestCocoMap:
    def test_perfect_predictions_score_one(self):
        gts = [(square_mask(5, 5, 20), "VBar"),
               (square_mask(40, 40, 20), "VBar"),
               (square_mask(80, 80, 12), "HBar")]
        preds = [(m, c, 0.9) for m, c in gts]
        rep = ec.coco_map(preds, gts)
        assert rep.map == pytest.approx(1.0)
        assert rep.ap50 == pytest.approx(1.0)
        assert rep.per_category == {"HBar": pytest.approx(1.0),
                                    "VBar": pytest.approx(1.0)}

    def test_hand_computed_threshold_sweep(self):
        # gt: two rectangles; preds: exact hit (conf .9), an IoU-2/3
        # partial overlap (conf .8), and a clean miss (conf .7)
        g1 = square_mask(0, 0, 10)
        p2 = np.zeros((128, 128), dtype=bool)
        p2[40:50, 40:50] = True
        g2b = np.zeros((128, 128), dtype=bool)
        g2b[40:50, 40:55] = True  # inter 100, union 150 -> IoU 2/3
        assert ec.mask_iou(p2, g2b) == pytest.approx(100 / 150)
        gts = [(g1, "VBar"), (g2b, "VBar")]
        preds = [(g1, "VBar", 0.9), (p2, "VBar", 0.8),
                 (square_mask(100, 100, 10), "VBar", 0.7)]
        rep = ec.coco_map(preds, gts)
        # thresholds 0.50..0.65 (4): ranked tp,tp,fp -> AP 1.0
        # thresholds 0.70..0.95 (6): ranked tp,fp,fp -> AP 51/101
        want = (4 * 1.0 + 6 * (51 / 101)) / 10
        assert rep.map == pytest.approx(want, abs=1e-9)
        assert rep.ap50 == pytest.approx(1.0)
        assert rep.ap75 == pytest.approx(51 / 101, abs=1e-9)

    def test_area_bucket_sentinels(self):
        gts = [(square_mask(5, 5, 10), "VBar")]  # area 100: small bucket
        preds = [(square_mask(5, 5, 10), "VBar", 0.9)]
        rep = ec.coco_map(preds, gts)
        assert rep.ap_small == pytest.approx(1.0)
        assert rep.ap_medium == -1.0
        assert rep.ap_large == -1.0

    def test_unknown_category_rejected(self):
        m = square_mask(5, 5, 10)
        with pytest.raises(errors.UnknownCategory):
            ec.coco_map([(m, "Mystery", 0.9)], [(m, "VBar")])

    def test_category_absent_from_gt_is_skipped(self):
        m = square_mask(5, 5, 10)
        rep = ec.coco_map([(m, "HBar", 0.9), (m, "VBar", 0.9)],
                          [(m, "VBar")])
        assert "HBar" not in rep.per_category
        assert rep.per_category["VBar"] == pytest.approx(1.0)

    def test_confidence_ranking_matters(self):
        g = square_mask(10, 10, 20)
        hit = (g, "VBar", 0.3)
        miss = (square_mask(70, 70, 20), "VBar", 0.9)
        rep = ec.coco_map([miss, hit], [(g, "VBar")])
        # the miss outranks the hit: ranked [fp, tp], recall still reaches
        # 1.0 but the precision envelope is pinned at 1/2
        assert rep.ap50 == pytest.approx(0.5, abs=1e-9)
