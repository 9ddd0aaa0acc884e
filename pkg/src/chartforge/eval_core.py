"""Set-based grounding metrics.

All three formats share one matching core: build a similarity matrix,
mask it with an eligibility rule, and find the assignment that maximizes
matched-pair count first and total similarity second. Precision/recall/F1
then follow from the matched count.

Mask scoring dispatches on the element category: the four thin-line
categories go through boundary_iou, everything else through plain mask_iou.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import DimensionMismatch, EmptyInput, ShapeMismatch, UnknownCategory
from .mask_forge import CATEGORIES, InstanceMask

POINT_RADIUS_PX = 5.0
BOX_IOU_THRESHOLD = 0.5
MASK_IOU_THRESHOLD = 0.5
BOUNDARY_DILATIONS = (1, 2, 4, 8)

# ties between equally scored assignments are broken lexicographically;
# scores closer than this are considered tied
_SCORE_TOL = 1e-7


@dataclass
class Matching:
    pairs: list  # (pred_index, gt_index), sorted by pred_index
    score_matrix: np.ndarray  # similarity where eligible, -inf elsewhere


@dataclass
class SampleMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp, fp, fn):
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        return cls(tp, fp, fn, precision, recall, f1)


@dataclass
class MetricReport:
    macro_p: float
    macro_r: float
    macro_f1: float
    miou_union: float | None
    per_sample: list = field(default_factory=list)


def _optimum(scores, eligible):
    """(count, total score) of the best assignment on a submatrix."""
    if scores.size == 0 or not eligible.any():
        return 0, 0.0
    big = 1.0 + np.abs(scores[eligible]).sum()
    gain = np.where(eligible, scores + big, 0.0)
    rows, cols = linear_sum_assignment(-gain)
    picked = eligible[rows, cols]
    count = int(picked.sum())
    total = float(scores[rows, cols][picked].sum())
    return count, total


def hungarian_match(scores, eligible):
    """One-to-one assignment maximizing pair count, then total score.

    Ties between equally optimal assignments resolve to the
    lexicographically smallest (pred_index, gt_index) pair list. Only
    eligible pairs are ever returned.
    """
    scores = np.asarray(scores, dtype=float)
    eligible = np.asarray(eligible, dtype=bool)
    if scores.shape != eligible.shape:
        raise ShapeMismatch(f"{scores.shape} vs {eligible.shape}")
    if scores.ndim != 2:
        raise ShapeMismatch("score matrix must be 2-d")

    n, m = scores.shape
    best_count, best_total = _optimum(scores, eligible)

    # lock pairs greedily in lexicographic order, keeping the optimum
    # reachable after each lock
    pairs = []
    locked_gts = set()
    locked_count = 0
    locked_total = 0.0
    free_rows = list(range(n))
    for p in range(n):
        free_rows.remove(p)
        chosen = None
        for g in range(m):
            if g in locked_gts or not eligible[p, g]:
                continue
            rows = [r for r in free_rows]
            cols = [c for c in range(m) if c not in locked_gts and c != g]
            sub_s = scores[np.ix_(rows, cols)] if rows and cols else \
                np.zeros((len(rows), len(cols)))
            sub_e = eligible[np.ix_(rows, cols)] if rows and cols else \
                np.zeros((len(rows), len(cols)), dtype=bool)
            rest_count, rest_total = _optimum(sub_s, sub_e)
            count = locked_count + 1 + rest_count
            total = locked_total + scores[p, g] + rest_total
            if count == best_count and total >= best_total - _SCORE_TOL:
                chosen = g
                break
        if chosen is not None:
            pairs.append((p, chosen))
            locked_gts.add(chosen)
            locked_count += 1
            locked_total += scores[p, chosen]

    matrix = np.where(eligible, scores, -np.inf)
    return Matching(pairs=pairs, score_matrix=matrix)


def _metrics_from_matching(matching, n_pred, n_gt):
    tp = len(matching.pairs)
    return SampleMetrics.from_counts(tp, n_pred - tp, n_gt - tp)


def _check_same_dims(bitmaps):
    shapes = {b.shape for b in bitmaps}
    if len(shapes) > 1:
        raise DimensionMismatch(str(sorted(shapes)))


def _as_bitmap(mask):
    if isinstance(mask, InstanceMask):
        return mask.bitmap
    return np.asarray(mask, dtype=bool)


def eval_points(preds, gt_masks, radius_px=POINT_RADIUS_PX):
    """Score point predictions against mask ground truth.

    A pair is eligible when the point lands inside the mask or within
    radius_px of its nearest foreground pixel; matching prefers closer
    points (score is the negated distance).
    """
    bitmaps = [_as_bitmap(g) for g in gt_masks]
    _check_same_dims(bitmaps)
    n, m = len(preds), len(bitmaps)
    scores = np.zeros((n, m))
    eligible = np.zeros((n, m), dtype=bool)
    r2 = float(radius_px) ** 2
    coords = []
    for b in bitmaps:
        ys, xs = np.nonzero(b)
        coords.append((ys.astype(float), xs.astype(float)))
    for i, point in enumerate(preds):
        x, y = (point.x, point.y) if hasattr(point, "x") else point
        for j, b in enumerate(bitmaps):
            iy, ix = int(math.floor(y)), int(math.floor(x))
            h, w = b.shape
            if 0 <= iy < h and 0 <= ix < w and b[iy, ix]:
                d2 = 0.0
            else:
                ys, xs = coords[j]
                d2 = kernels.min_dist_sq(ys, xs, y, x)
            if d2 <= r2:
                eligible[i, j] = True
                scores[i, j] = -math.sqrt(d2)
    matching = hungarian_match(scores, eligible)
    return _metrics_from_matching(matching, n, m)


def box_iou(a, b):
    """IoU of two boxes with continuous areas."""
    ax1, ay1, ax2, ay2 = _box_tuple(a)
    bx1, by1, bx2, by2 = _box_tuple(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def _box_tuple(box):
    if hasattr(box, "x_min"):
        return (box.x_min, box.y_min, box.x_max, box.y_max)
    return tuple(float(v) for v in box)


def eval_boxes(preds, gts, iou_thr=BOX_IOU_THRESHOLD):
    """Score box predictions; eligibility is IoU >= iou_thr."""
    n, m = len(preds), len(gts)
    scores = np.zeros((n, m))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            scores[i, j] = box_iou(p, g)
    eligible = scores >= iou_thr
    matching = hungarian_match(scores, eligible)
    return _metrics_from_matching(matching, n, m)


def mask_iou(a, b):
    a = _as_bitmap(a)
    b = _as_bitmap(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    inter, union = kernels.mask_overlap(a, b)
    return inter / union if union else 0.0


def boundary_iou(a, b, d_set=BOUNDARY_DILATIONS):
    """Mean IoU of boundary bands over the d_set radii.

    band_d(M) is M minus its erosion by a square element of radius d;
    out-of-image pixels count as background, so bands hug the image edge.
    """
    a = _as_bitmap(a)
    b = _as_bitmap(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    vals = []
    for d in d_set:
        band_a = a & ~kernels.erode_square(a, d)
        band_b = b & ~kernels.erode_square(b, d)
        inter, union = kernels.mask_overlap(band_a, band_b)
        vals.append(inter / union if union else 0.0)
    return float(np.mean(vals))


def eval_masks(preds, gts, category, thr=MASK_IOU_THRESHOLD):
    """Score mask predictions for one homogeneous-category sample.

    Thin-line categories (ErrorBar, BoxMedianLine, Line_withPoints,
    PolarLine_withPoints) are compared with boundary_iou, the rest with
    mask_iou. Module-level names are used so the dispatch is observable.
    """
    if isinstance(category, str):
        if category not in CATEGORIES:
            raise UnknownCategory(category)
        category = CATEGORIES[category]
    pred_maps = [_as_bitmap(p) for p in preds]
    gt_maps = [_as_bitmap(g) for g in gts]
    _check_same_dims(pred_maps + gt_maps)
    similarity = boundary_iou if category.thin_line else mask_iou
    n, m = len(pred_maps), len(gt_maps)
    scores = np.zeros((n, m))
    for i, p in enumerate(pred_maps):
        for j, g in enumerate(gt_maps):
            scores[i, j] = similarity(p, g)
    eligible = scores >= thr
    matching = hungarian_match(scores, eligible)
    return _metrics_from_matching(matching, n, m)


def miou_union(preds, gts):
    """IoU between the union of predictions and the union of ground truth."""
    gt_maps = [_as_bitmap(g) for g in gts]
    pred_maps = [_as_bitmap(p) for p in preds]
    _check_same_dims(pred_maps + gt_maps)
    if not gt_maps:
        raise EmptyInput("no ground-truth masks")
    gt_union = np.zeros_like(gt_maps[0])
    for g in gt_maps:
        gt_union |= g
    if not pred_maps:
        return 0.0
    pred_union = np.zeros_like(pred_maps[0])
    for p in pred_maps:
        pred_union |= p
    return mask_iou(pred_union, gt_union)


def macro_aggregate(per_sample, miou_values=None):
    """Means over samples; miou_values may be omitted for point/box runs."""
    if not per_sample:
        raise EmptyInput("no samples to aggregate")
    macro_p = float(np.mean([s.precision for s in per_sample]))
    macro_r = float(np.mean([s.recall for s in per_sample]))
    macro_f1 = float(np.mean([s.f1 for s in per_sample]))
    miou = None
    if miou_values is not None:
        if len(miou_values) != len(per_sample):
            raise EmptyInput("miou_values not aligned with per_sample")
        miou = float(np.mean(miou_values))
    return MetricReport(macro_p, macro_r, macro_f1, miou, list(per_sample))


# --- COCO-style mAP -------------------------------------------------------

MAP_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AREA_BUCKETS = {
    "small": (0, 32 ** 2),
    "medium": (32 ** 2, 96 ** 2),
    "large": (96 ** 2, float("inf")),
}


@dataclass
class MapReport:
    map: float
    ap50: float
    ap75: float
    ap_small: float
    ap_medium: float
    ap_large: float
    per_category: dict


def _norm_instances(instances, with_confidence):
    """Accept (mask, category[, confidence]) or (image_id, mask, ...)."""
    out = []
    for inst in instances:
        inst = tuple(inst)
        expect = 3 if with_confidence else 2
        if len(inst) == expect:
            inst = (0,) + inst
        elif len(inst) != expect + 1:
            raise ValueError(f"bad instance arity {len(inst)}")
        image_id, mask = inst[0], _as_bitmap(inst[1])
        category = inst[2]
        name = category if isinstance(category, str) else category.name
        if name not in CATEGORIES:
            raise UnknownCategory(name)
        if with_confidence:
            out.append((image_id, mask, name, float(inst[3])))
        else:
            out.append((image_id, mask, name))
    return out


def _ap_from_ranked(flags, n_pos):
    """101-point interpolated AP over confidence-ranked tp/fp flags."""
    if n_pos == 0:
        return -1.0
    tp = np.cumsum([1 if f else 0 for f in flags])
    fp = np.cumsum([0 if f else 1 for f in flags])
    recall = tp / n_pos
    precision = tp / np.maximum(tp + fp, 1)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recall >= r
        ap += precision[mask].max() if mask.any() else 0.0
    return ap / 101.0


def _category_threshold_ap(preds, gts, thr, area_range):
    """Greedy confidence-ranked matching with COCO ignore handling."""
    lo, hi = area_range
    gt_by_image = {}
    for image_id, mask, _name in gts:
        area = int(np.count_nonzero(mask))
        ignored = not (lo <= area < hi)
        gt_by_image.setdefault(image_id, []).append(
            {"mask": mask, "ignored": ignored, "matched": False})
    n_pos = sum(1 for rows in gt_by_image.values()
                for g in rows if not g["ignored"])
    order = sorted(range(len(preds)),
                   key=lambda i: (-preds[i][3], i))
    flags = []
    for i in order:
        image_id, mask = preds[i][0], preds[i][1]
        rows = gt_by_image.get(image_id, [])
        best = None
        best_iou = 0.0
        for g in rows:
            if g["ignored"] or g["matched"]:
                continue
            iou = mask_iou(mask, g["mask"])
            if iou >= thr and iou > best_iou:
                best, best_iou = g, iou
        if best is not None:
            best["matched"] = True
            flags.append(True)
            continue
        # no live in-range gt: try out-of-range ones, which absorb the
        # detection without scoring it
        absorbed = False
        for g in rows:
            if g["ignored"] and not g["matched"] \
                    and mask_iou(mask, g["mask"]) >= thr:
                g["matched"] = True
                absorbed = True
                break
        if absorbed:
            continue
        # an unmatched detection outside the bucket is not penalized either
        det_area = int(np.count_nonzero(mask))
        if lo <= det_area < hi:
            flags.append(False)
    return _ap_from_ranked(flags, n_pos)


def coco_map(pred_instances, gt_instances, iou_thresholds=MAP_IOU_THRESHOLDS):
    """COCO-style mAP over mask instances.

    Instances are (mask, category, confidence) tuples, or 4-tuples with a
    leading image id when evaluating several images at once. Categories
    with no ground truth are skipped; buckets with nothing to score come
    back as -1.0.
    """
    preds = _norm_instances(pred_instances, with_confidence=True)
    gts = _norm_instances(gt_instances, with_confidence=False)
    names = sorted({g[2] for g in gts})

    def mean_ap(thrs, area_range):
        per_cat = {}
        for name in names:
            cat_preds = [p for p in preds if p[2] == name]
            cat_gts = [g for g in gts if g[2] == name]
            vals = [_category_threshold_ap(cat_preds, cat_gts, t, area_range)
                    for t in thrs]
            vals = [v for v in vals if v >= 0.0]
            per_cat[name] = float(np.mean(vals)) if vals else -1.0
        live = [v for v in per_cat.values() if v >= 0.0]
        return (float(np.mean(live)) if live else -1.0), per_cat

    full = (0, float("inf"))
    overall, per_category = mean_ap(iou_thresholds, full)
    ap50, _ = mean_ap([t for t in iou_thresholds if abs(t - 0.5) < 1e-9]
                      or [0.5], full)
    ap75, _ = mean_ap([t for t in iou_thresholds if abs(t - 0.75) < 1e-9]
                      or [0.75], full)
    ap_small, _ = mean_ap(iou_thresholds, AREA_BUCKETS["small"])
    ap_medium, _ = mean_ap(iou_thresholds, AREA_BUCKETS["medium"])
    ap_large, _ = mean_ap(iou_thresholds, AREA_BUCKETS["large"])
    return MapReport(overall, ap50, ap75, ap_small, ap_medium, ap_large,
                     per_category)
