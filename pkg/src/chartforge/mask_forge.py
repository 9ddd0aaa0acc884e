"""Turns traced primitives into labeled instance masks.

Masks come from isolation renders: every other artist is hidden, the figure
and axes patches are made transparent, and any pixel with nonzero alpha is
foreground. Masks are amodal (occluding siblings do not punch holes) while
axes clipping is kept.

The 18 element categories live here, together with the lookup table that
maps (api, role, axes kind, granularity) onto them.
"""

import contextlib
import logging
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, UnmappedCombination, UnsupportedGranularity
from .scene_tracer import render_isolated

log = logging.getLogger(__name__)

THIN_LINE_NAMES = frozenset(
    {"ErrorBar", "BoxMedianLine", "Line_withPoints", "PolarLine_withPoints"})

CATEGORY_NAMES = (
    "VBar", "HBar", "Hist", "Scatter", "LinePoints", "Line_withPoints",
    "PolarLine_withPoints", "PolarLinePoints", "PolarVBar", "PieSector",
    "Treemap", "BoxPlot_BoxPatch", "BoxMedianLine", "FullBox", "ErrorBar",
    "Fill", "Fill_between_density", "Stackplot_area",
)


@dataclass(frozen=True)
class ElementCategory:
    name: str
    thin_line: bool


CATEGORIES = {
    name: ElementCategory(name, name in THIN_LINE_NAMES)
    for name in CATEGORY_NAMES
}

# stable integer ids, alphabetical by name
CATEGORY_IDS = {name: i + 1 for i, name in enumerate(sorted(CATEGORY_NAMES))}

GRANULARITY_LEVELS = ("primitive", "part", "composite")

CATEGORY_LEVEL = {
    "Line_withPoints": "composite",
    "PolarLine_withPoints": "composite",
    "FullBox": "composite",
    "ErrorBar": "composite",
    "BoxPlot_BoxPatch": "part",
    "BoxMedianLine": "part",
}
for _name in CATEGORY_NAMES:
    CATEGORY_LEVEL.setdefault(_name, "primitive")

# (api_name, role, axes_kind, granularity) -> category name
_LABEL_TABLE = {
    ("bar", "bar_patch", "cartesian", "primitive"): "VBar",
    ("barh", "bar_patch", "cartesian", "primitive"): "HBar",
    ("bar", "bar_patch", "polar", "primitive"): "PolarVBar",
    ("hist", "bin_patch", "cartesian", "primitive"): "Hist",
    ("scatter", "marker_set", "cartesian", "primitive"): "Scatter",
    ("plot", "marker_set", "cartesian", "primitive"): "LinePoints",
    ("plot", "marker_set", "polar", "primitive"): "PolarLinePoints",
    ("plot", "line_path+marker_set", "cartesian", "composite"):
        "Line_withPoints",
    ("plot", "line_path+marker_set", "polar", "composite"):
        "PolarLine_withPoints",
    ("errorbar", "marker_set", "cartesian", "primitive"): "LinePoints",
    ("errorbar", "line_path+marker_set", "cartesian", "composite"):
        "Line_withPoints",
    ("errorbar", "errorbar_line+errorbar_cap", "cartesian", "composite"):
        "ErrorBar",
    ("pie", "wedge", "cartesian", "primitive"): "PieSector",
    ("add_patch", "rectangle", "cartesian", "primitive"): "Treemap",
    ("boxplot", "box_body", "cartesian", "part"): "BoxPlot_BoxPatch",
    ("boxplot", "median", "cartesian", "part"): "BoxMedianLine",
    ("boxplot", "box_body+whisker+cap+median", "cartesian", "composite"):
        "FullBox",
    ("fill", "area_patch", "cartesian", "primitive"): "Fill",
    ("fill_between", "area_patch", "cartesian", "primitive"):
        "Fill_between_density",
    ("stackplot", "area_patch", "cartesian", "primitive"): "Stackplot_area",
}


@dataclass
class InstanceMask:
    bitmap: np.ndarray  # bool H x W
    category: ElementCategory | None
    granularity: str
    marker: str | None = None
    invocation_count: int | None = None
    element_index: int | None = None
    instance_id: str = ""

    @property
    def area(self):
        return int(np.count_nonzero(self.bitmap))


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float


@dataclass(frozen=True)
class Point:
    x: float
    y: float


def assign_label(call, role, granularity):
    """Category for one (call, role, granularity) combination.

    Pure table lookup; anything outside the taxonomy raises
    UnmappedCombination.
    """
    key = (call.api_name, role, call.axes_kind, granularity)
    name = _LABEL_TABLE.get(key)
    if name is None:
        raise UnmappedCombination(str(key))
    return CATEGORIES[name]


def _try_label(call, role, granularity):
    try:
        return assign_label(call, role, granularity)
    except UnmappedCombination:
        log.debug("no category for (%s, %s, %s, %s); excluded",
                  call.api_name, role, call.axes_kind, granularity)
        return None


# --- per-datum render contexts --------------------------------------------

@contextlib.contextmanager
def _line2d_override(line, hide_line=False, hide_marker=False,
                     only_datum=None):
    ls = line.get_linestyle()
    mk = line.get_marker()
    me = line.get_markevery()
    try:
        if hide_line:
            line.set_linestyle("None")
        if hide_marker:
            line.set_marker("None")
        if only_datum is not None:
            line.set_markevery([only_datum])
        yield
    finally:
        line.set_linestyle(ls)
        line.set_marker(mk)
        line.set_markevery(me)


@contextlib.contextmanager
def _scatter_datum(pathcol, i):
    sizes = pathcol.get_sizes().copy()
    only = np.zeros_like(sizes)
    only[i] = sizes[i]
    try:
        pathcol.set_sizes(only)
        yield
    finally:
        pathcol.set_sizes(sizes)


@contextlib.contextmanager
def _collection_segment(lc, i):
    segments = [np.asarray(s).copy() for s in lc.get_segments()]
    try:
        lc.set_segments([segments[i]])
        yield
    finally:
        lc.set_segments(segments)


def _cached_render(scene, key, artist, mutator_factory=None):
    cache = scene._mask_cache
    if key not in cache:
        mutator = mutator_factory() if mutator_factory is not None else None
        cache[key] = render_isolated(scene, [artist], mutator)
    return cache[key]


def _bitmap_of(mask):
    if isinstance(mask, InstanceMask):
        return mask.bitmap
    return np.asarray(mask, dtype=bool)


# --- public operations ----------------------------------------------------

def extract_primitive_mask(scene, primitive_id, style_override=None):
    """Isolation-render one primitive into an InstanceMask.

    style_override ("line_only" | "markers_only") applies to Line2D
    primitives that carry both a stroke and markers. The category is filled
    in when the combination maps into the taxonomy, else left None.
    """
    rec = scene.primitives[primitive_id]
    artist = scene.artist_for(primitive_id)
    call = scene.calls[rec.call_index]

    if style_override == "line_only":
        key = (primitive_id, "line_only", None)
        bitmap = _cached_render(
            scene, key, artist,
            lambda: _line2d_override(artist, hide_marker=True))
        role_query = "line_path"
    elif style_override == "markers_only":
        key = (primitive_id, "markers_only", None)
        bitmap = _cached_render(
            scene, key, artist,
            lambda: _line2d_override(artist, hide_line=True))
        role_query = "marker_set"
    elif style_override is None:
        key = (primitive_id, None, None)
        bitmap = _cached_render(scene, key, artist)
        role_query = rec.role
    else:
        raise ValueError(f"unknown style_override {style_override!r}")

    if not bitmap.any():
        raise EmptyMask(f"{primitive_id} contributes no visible pixels")

    category = _try_label(call, role_query, "primitive")
    return InstanceMask(
        bitmap=bitmap, category=category, granularity="primitive",
        marker=call.marker, invocation_count=call.invocation_count,
        element_index=rec.per_datum_index,
        instance_id=f"prim:{primitive_id}",
    )


def _call_records(scene, call, role):
    return [scene.primitives[pid] for pid in call.primitive_ids
            if scene.primitives[pid].role == role]


def _instance(scene, call, category, level, element_index, bitmap):
    call_index = scene.calls.index(call)
    return InstanceMask(
        bitmap=bitmap, category=category, granularity=level,
        marker=call.marker, invocation_count=call.invocation_count,
        element_index=element_index,
        instance_id=f"c{call_index:02d}:{category.name}:{element_index:03d}",
    )


def _line_records(scene, call):
    """Line2D primitive records of a call, keeping input order."""
    out = []
    for pid in call.primitive_ids:
        rec = scene.primitives[pid]
        if rec.role in ("line_path", "marker_set", "line_path+marker_set"):
            out.append(rec)
    return out


def _marker_point_instances(scene, call, category):
    """One mask per marker glyph of a call's Line2D series, data order."""
    instances = []
    element = 0
    for rec in _line_records(scene, call):
        if "marker_set" not in rec.role:
            continue
        artist = scene.artist_for(rec.id)
        n = len(artist.get_xdata())
        for i in range(n):
            key = (rec.id, "datum_marker", i)
            bitmap = _cached_render(
                scene, key, artist,
                lambda a=artist, j=i: _line2d_override(
                    a, hide_line=True, only_datum=j))
            if bitmap.any():
                instances.append(
                    _instance(scene, call, category, "primitive",
                              element, bitmap))
            element += 1
    return instances


def _line_composite_instances(scene, call, category):
    """Line-with-markers composites, one per series, union by construction."""
    instances = []
    element = 0
    for rec in _line_records(scene, call):
        if rec.role != "line_path+marker_set":
            continue
        artist = scene.artist_for(rec.id)
        line = _cached_render(
            scene, (rec.id, "line_only", None), artist,
            lambda a=artist: _line2d_override(a, hide_marker=True))
        marks = _cached_render(
            scene, (rec.id, "markers_only", None), artist,
            lambda a=artist: _line2d_override(a, hide_line=True))
        bitmap = line | marks
        if bitmap.any():
            instances.append(
                _instance(scene, call, category, "composite",
                          element, bitmap))
        element += 1
    return instances


def _patch_instances(scene, call, role, category, level="primitive"):
    instances = []
    for rec in _call_records(scene, call, role):
        artist = scene.artist_for(rec.id)
        bitmap = _cached_render(scene, (rec.id, None, None), artist)
        # single-primitive calls (add_patch, fill_between) record no
        # per-datum index; they are element 0 of their invocation
        idx = rec.per_datum_index if rec.per_datum_index is not None else 0
        if bitmap.any():
            instances.append(
                _instance(scene, call, category, level, idx, bitmap))
    return instances


def _scatter_instances(scene, call, category):
    (rec,) = _call_records(scene, call, "marker_set")
    artist = scene.artist_for(rec.id)
    n = len(artist.get_offsets())
    instances = []
    for i in range(n):
        key = (rec.id, "datum_scatter", i)
        bitmap = _cached_render(
            scene, key, artist, lambda j=i: _scatter_datum(artist, j))
        if bitmap.any():
            instances.append(
                _instance(scene, call, category, "primitive", i, bitmap))
    return instances


def _boxplot_part_bitmaps(scene, call, role):
    out = {}
    for rec in _call_records(scene, call, role):
        artist = scene.artist_for(rec.id)
        out[rec.per_datum_index] = _cached_render(
            scene, (rec.id, None, None), artist)
    return out


def _fullbox_instances(scene, call, category):
    boxes = _boxplot_part_bitmaps(scene, call, "box_body")
    whiskers = _boxplot_part_bitmaps(scene, call, "whisker")
    caps = _boxplot_part_bitmaps(scene, call, "cap")
    medians = _boxplot_part_bitmaps(scene, call, "median")
    instances = []
    for i in sorted(boxes):
        # whiskers and caps come back as flat lists, (2i, 2i+1) per box
        parts = [boxes[i],
                 whiskers.get(2 * i), whiskers.get(2 * i + 1),
                 caps.get(2 * i), caps.get(2 * i + 1),
                 medians.get(i)]
        bitmap = np.zeros((scene.h, scene.w), dtype=bool)
        for part in parts:
            if part is not None:
                bitmap |= part
        if bitmap.any():
            instances.append(
                _instance(scene, call, category, "composite", i, bitmap))
    return instances


def _errorbar_composite_instances(scene, call, category):
    cap_recs = _call_records(scene, call, "errorbar_cap")
    bar_recs = _call_records(scene, call, "errorbar_line")
    n = 0
    for rec in bar_recs:
        n = max(n, len(scene.artist_for(rec.id).get_segments()))
    for rec in cap_recs:
        n = max(n, len(scene.artist_for(rec.id).get_xdata()))
    instances = []
    for i in range(n):
        bitmap = np.zeros((scene.h, scene.w), dtype=bool)
        for rec in bar_recs:
            artist = scene.artist_for(rec.id)
            if i >= len(artist.get_segments()):
                continue
            bitmap |= _cached_render(
                scene, (rec.id, "datum_segment", i), artist,
                lambda a=artist, j=i: _collection_segment(a, j))
        for rec in cap_recs:
            artist = scene.artist_for(rec.id)
            if i >= len(artist.get_xdata()):
                continue
            bitmap |= _cached_render(
                scene, (rec.id, "datum_marker", i), artist,
                lambda a=artist, j=i: _line2d_override(a, only_datum=j))
        if bitmap.any():
            instances.append(
                _instance(scene, call, category, "composite", i, bitmap))
    return instances


def compose_instances(scene, call, granularity):
    """Instance masks of one call at a granularity.

    granularity accepts a level name ("primitive", "part", "composite") or a
    category name ("FullBox", ...), which pins both the level and the
    category. Instances whose combination falls outside the taxonomy are
    excluded; a level the call cannot support at all raises
    UnsupportedGranularity.
    """
    if granularity in CATEGORIES:
        level = CATEGORY_LEVEL[granularity]
        want = granularity
    elif granularity in GRANULARITY_LEVELS:
        level = granularity
        want = None
    else:
        raise UnsupportedGranularity(str(granularity))

    api = call.api_name
    families = []  # (category, builder)

    def offer(role, level_of_family, builder):
        if level_of_family != level:
            return
        category = _try_label(call, role, level_of_family)
        if category is None:
            return
        if want is not None and category.name != want:
            return
        families.append((category, builder))

    if api in ("plot", "errorbar"):
        offer("marker_set", "primitive",
              lambda c: _marker_point_instances(scene, call, c))
        offer("line_path+marker_set", "composite",
              lambda c: _line_composite_instances(scene, call, c))
        if api == "errorbar":
            offer("errorbar_line+errorbar_cap", "composite",
                  lambda c: _errorbar_composite_instances(scene, call, c))
        supported = {"primitive", "composite"}
    elif api == "scatter":
        offer("marker_set", "primitive",
              lambda c: _scatter_instances(scene, call, c))
        supported = {"primitive"}
    elif api in ("bar", "barh"):
        offer("bar_patch", "primitive",
              lambda c: _patch_instances(scene, call, "bar_patch", c))
        supported = {"primitive"}
    elif api == "hist":
        offer("bin_patch", "primitive",
              lambda c: _patch_instances(scene, call, "bin_patch", c))
        supported = {"primitive"}
    elif api == "boxplot":
        offer("box_body", "part",
              lambda c: _patch_instances(scene, call, "box_body", c, "part"))
        offer("median", "part",
              lambda c: _patch_instances(scene, call, "median", c, "part"))
        offer("box_body+whisker+cap+median", "composite",
              lambda c: _fullbox_instances(scene, call, c))
        supported = {"part", "composite"}
    elif api == "pie":
        offer("wedge", "primitive",
              lambda c: _patch_instances(scene, call, "wedge", c))
        supported = {"primitive"}
    elif api == "fill":
        offer("area_patch", "primitive",
              lambda c: _patch_instances(scene, call, "area_patch", c))
        supported = {"primitive"}
    elif api in ("fill_between", "stackplot"):
        offer("area_patch", "primitive",
              lambda c: _patch_instances(scene, call, "area_patch", c))
        supported = {"primitive"}
    elif api == "add_patch":
        offer("rectangle", "primitive",
              lambda c: _patch_instances(scene, call, "rectangle", c))
        offer("area_patch", "primitive",
              lambda c: _patch_instances(scene, call, "area_patch", c))
        supported = {"primitive"}
    else:
        supported = set()

    if level not in supported:
        raise UnsupportedGranularity(
            f"{granularity} requested on a {api} call")

    instances = []
    for category, builder in families:
        instances.extend(builder(category))
    return instances


def tight_bbox(mask):
    """Tightest integer box around the foreground, max side exclusive."""
    bitmap = _bitmap_of(mask)
    ys, xs = np.nonzero(bitmap)
    if ys.size == 0:
        raise EmptyMask("tight_bbox of an empty mask")
    return BBox(int(xs.min()), int(ys.min()),
                int(xs.max()) + 1, int(ys.max()) + 1)


def representative_point(mask):
    """Foreground pixel nearest the centroid; ties go to lowest (y, x)."""
    bitmap = _bitmap_of(mask)
    ys, xs = np.nonzero(bitmap)
    if ys.size == 0:
        raise EmptyMask("representative_point of an empty mask")
    cy = ys.mean()
    cx = xs.mean()
    d2 = (ys - cy) ** 2 + (xs - cx) ** 2
    best = d2.min()
    tie = np.flatnonzero(d2 == best)
    order = np.lexsort((xs[tie], ys[tie]))
    pick = tie[order[0]]
    return Point(int(xs[pick]), int(ys[pick]))
