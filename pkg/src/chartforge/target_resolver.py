"""Parses referring-target JSON and resolves it into instance masks.

A target spec is a list of (marker line, invocation_count, element_indices)
entries. Null invocation_count is tolerated only when the marked line ran
exactly once; null element_indices requires the execution to have produced
exactly one instance. Indices address instances by input-data order.
"""

import json
from dataclasses import dataclass, field

from .errors import (
    AmbiguousNullInvocation,
    IndexOutOfRange,
    SchemaError,
    SingletonViolation,
    UnknownCategory,
    UnknownExecution,
)
from .mask_forge import (
    CATEGORIES,
    compose_instances,
    representative_point,
    tight_bbox,
)
from .scene_tracer import TracedScene

CLUE_PRIMARY = ("data", "visual", "textual_localization")

CLUE_SUBTYPES = {
    "data": (
        "value_range_filtering",
        "rank_band_set_selection",
        "local_structure_patterns",
        "cross_series_relations",
    ),
    "visual": (
        "color_attributes",
        "shape_style",
        "line_stroke_style",
        "fill_style",
    ),
    "textual_localization": (
        "axis_labels",
        "tick_values_positions",
        "legend_entries_positions",
        "subplot_titles_positions",
        "text_annotations",
    ),
}

_ALL_SUBTYPES = {s: p for p, subs in CLUE_SUBTYPES.items() for s in subs}


@dataclass
class TargetEntry:
    line: str
    invocation_count: int | None
    element_indices: list | None


@dataclass
class TargetSpec:
    results: list  # TargetEntry


@dataclass
class GroundingSample:
    sample_id: str
    scene_ref: str
    expression: str
    category: str
    clue_labels: dict
    targets: list   # InstanceMask, aligned with points/bboxes
    points: list = field(default_factory=list)
    bboxes: list = field(default_factory=list)

    @property
    def target_ids(self):
        return [t.instance_id for t in self.targets]


@dataclass
class PredictionSet:
    format: str  # point | bbox | mask
    items: list
    note: str | None = None


def _marker_executions(scene, marker):
    return [c for c in scene.calls if c.marker == marker]


def parse_target_json(text, scene=None):
    """Validate target JSON; with a scene, also canonicalize null counts."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "results" not in data:
        raise SchemaError('top level must be {"results": [...]}')
    results = data["results"]
    if not isinstance(results, list) or not results:
        raise SchemaError("results must be a nonempty list")

    entries = []
    for row in results:
        if not isinstance(row, dict):
            raise SchemaError(f"entry is not an object: {row!r}")
        line = row.get("line")
        if not isinstance(line, str) or not line.startswith("#") \
                or not line[1:].isdigit() or int(line[1:]) < 1:
            raise SchemaError(f"bad marker id: {line!r}")
        inv = row.get("invocation_count")
        if inv is not None and (not isinstance(inv, int)
                                or isinstance(inv, bool) or inv < 0):
            raise SchemaError(f"bad invocation_count: {inv!r}")
        idxs = row.get("element_indices")
        if idxs is not None:
            if not isinstance(idxs, list) or not idxs:
                raise SchemaError(f"bad element_indices: {idxs!r}")
            for v in idxs:
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise SchemaError(f"bad element index: {v!r}")
            if len(set(idxs)) != len(idxs):
                raise SchemaError(f"repeated element index in {idxs!r}")
        entries.append(TargetEntry(line, inv, list(idxs) if idxs else None))

    spec = TargetSpec(entries)
    if scene is not None:
        for entry in spec.results:
            if entry.invocation_count is None:
                entry.invocation_count = _canonical_invocation(scene, entry)
    return spec


def _canonical_invocation(scene, entry):
    execs = _marker_executions(scene, entry.line)
    if not execs:
        raise UnknownExecution(f"{entry.line} never executed in scene")
    if len(execs) > 1:
        raise AmbiguousNullInvocation(
            f"{entry.line} ran {len(execs)} times; invocation_count "
            "cannot stay null")
    return 0


def resolve_targets(scene: TracedScene, spec: TargetSpec, category):
    """Select the instance masks a spec refers to, at a category's level."""
    name = category if isinstance(category, str) else category.name
    if name not in CATEGORIES:
        raise UnknownCategory(str(category))

    seen = set()
    out = []
    for entry in spec.results:
        inv = entry.invocation_count
        if inv is None:
            inv = _canonical_invocation(scene, entry)
        call = None
        for c in _marker_executions(scene, entry.line):
            if c.invocation_count == inv:
                call = c
                break
        if call is None:
            raise UnknownExecution(f"({entry.line}, {inv}) not in scene")
        instances = compose_instances(scene, call, name)
        if entry.element_indices is None:
            if len(instances) != 1:
                raise SingletonViolation(
                    f"({entry.line}, {inv}) produced {len(instances)} "
                    f"{name} instances; element_indices required")
            chosen = instances
        else:
            by_index = {m.element_index: m for m in instances}
            chosen = []
            for idx in entry.element_indices:
                if idx not in by_index:
                    raise IndexOutOfRange(
                        f"element {idx} not among {sorted(by_index)} "
                        f"for ({entry.line}, {inv})")
                chosen.append(by_index[idx])
        for inst in chosen:
            if inst.instance_id in seen:
                raise SchemaError(
                    f"duplicate target {inst.instance_id}")
            seen.add(inst.instance_id)
            out.append(inst)
    return out


def materialize_formats(scene, targets):
    """(points, bboxes, masks) triples aligned with the target list."""
    points = [representative_point(t) for t in targets]
    bboxes = [tight_bbox(t) for t in targets]
    masks = [t.bitmap for t in targets]
    return points, bboxes, masks


def validate_clue_labels(clue):
    """Normalize {"primary": [...], "subtypes": [...], "hybrid": bool}."""
    if not isinstance(clue, dict):
        raise SchemaError("clue_labels must be an object")
    primary = clue.get("primary")
    if isinstance(primary, str):
        primary = [primary]
    if not primary:
        raise SchemaError("clue_labels.primary must be nonempty")
    for p in primary:
        if p not in CLUE_PRIMARY:
            raise SchemaError(f"unknown primary clue {p!r}")
    subtypes = list(clue.get("subtypes", []))
    for s in subtypes:
        if s not in _ALL_SUBTYPES:
            raise SchemaError(f"unknown clue subtype {s!r}")
        if _ALL_SUBTYPES[s] not in primary:
            raise SchemaError(
                f"subtype {s!r} belongs to {_ALL_SUBTYPES[s]!r}, "
                "which is not among the primary clues")
    return {
        "primary": list(primary),
        "subtypes": subtypes,
        "hybrid": bool(clue.get("hybrid", len(primary) > 1)),
    }


def build_sample(scene, scene_ref, sample_id, expression, category,
                 clue_labels, target_json):
    """Resolve one annotation row into a full GroundingSample."""
    spec = target_json
    if isinstance(spec, (str, bytes)):
        spec = parse_target_json(spec, scene)
    elif isinstance(spec, dict):
        spec = parse_target_json(json.dumps(spec), scene)
    targets = resolve_targets(scene, spec, category)
    if not targets:
        raise SchemaError(f"{sample_id}: no valid target instances")
    points, bboxes, _ = materialize_formats(scene, targets)
    name = category if isinstance(category, str) else category.name
    return GroundingSample(
        sample_id=sample_id,
        scene_ref=scene_ref,
        expression=expression,
        category=name,
        clue_labels=validate_clue_labels(clue_labels),
        targets=targets,
        points=points,
        bboxes=bboxes,
    )
