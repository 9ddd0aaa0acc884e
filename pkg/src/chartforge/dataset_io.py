"""Bundle serialization: RLE masks, COCO-style dataset.json, statistics.

A bundle directory holds dataset.json plus images/*.png. Emission is
deterministic: stable ordering, sorted JSON keys, integer category ids
assigned alphabetically. Re-emitting the same inputs reproduces the files
byte for byte.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    AmbiguousNullInvocation,
    DanglingReference,
    IndexOutOfRange,
    IOFailure,
    LengthMismatch,
    SchemaError,
    SingletonViolation,
    UnknownCategory,
    UnknownExecution,
    UnsupportedGranularity,
)
from .mask_forge import (
    CATEGORIES,
    CATEGORY_IDS,
    GRANULARITY_LEVELS,
    compose_instances,
    representative_point,
    tight_bbox,
)
from .target_resolver import validate_clue_labels

SCHEMA_VERSION = 1


@dataclass
class RleMask:
    size: tuple  # (H, W)
    counts: list  # alternating background/foreground run lengths


@dataclass
class DatasetBundle:
    schema_version: int
    images: list
    categories: list
    annotations: list
    samples: list
    root: str | None = field(default=None, compare=False)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "images": self.images,
            "categories": self.categories,
            "annotations": self.annotations,
            "samples": self.samples,
        }


def encode_rle(mask):
    """Column-major run-length encoding, leading-background convention."""
    bitmap = mask.bitmap if hasattr(mask, "bitmap") else np.asarray(mask)
    bitmap = bitmap.astype(bool)
    h, w = bitmap.shape
    counts = kernels.rle_counts(bitmap.ravel(order="F"))
    return RleMask(size=(h, w), counts=[int(c) for c in counts])


def decode_rle(rle):
    if isinstance(rle, dict):
        size, counts = rle["size"], rle["counts"]
    else:
        size, counts = rle.size, rle.counts
    h, w = int(size[0]), int(size[1])
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() != h * w:
        raise LengthMismatch(
            f"counts sum {int(counts.sum())} != {h}*{w}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")


def category_rows():
    return [
        {"id": CATEGORY_IDS[name], "name": name,
         "thin_line": CATEGORIES[name].thin_line}
        for name in sorted(CATEGORIES)
    ]


def enumerate_instances(scene):
    """Every mappable instance of a scene, all granularities, stable order."""
    out = []
    for call in scene.calls:
        for level in GRANULARITY_LEVELS:
            try:
                out.extend(compose_instances(scene, call, level))
            except UnsupportedGranularity:
                continue
    return out


def annotation_fields(inst):
    """Id-less annotation payload for one instance (picklable)."""
    bbox = tight_bbox(inst)
    point = representative_point(inst)
    rle = encode_rle(inst)
    return {
        "category_id": CATEGORY_IDS[inst.category.name],
        "area": inst.area,
        "bbox": [bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max],
        "point": [point.x, point.y],
        "rle": {"size": [rle.size[0], rle.size[1]], "counts": rle.counts},
        "provenance": {
            "instance_id": inst.instance_id,
            "marker": inst.marker,
            "invocation_count": inst.invocation_count,
            "element_index": inst.element_index,
            "granularity": inst.granularity,
        },
    }


def _annotation_row(ann_id, image_id, inst):
    row = {"id": ann_id, "image_id": image_id}
    row.update(annotation_fields(inst))
    return row


def write_bundle(bundle_dict, out_dir, images_png):
    """Write dataset.json and PNGs; images_png maps file name to bytes."""
    try:
        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
        text = json.dumps(bundle_dict, sort_keys=True, indent=2) + "\n"
        with open(os.path.join(out_dir, "dataset.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(text)
        for name, blob in images_png.items():
            with open(os.path.join(out_dir, name), "wb") as fh:
                fh.write(blob)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def _png_bytes(image):
    import io

    from PIL import Image
    bio = io.BytesIO()
    Image.fromarray(image, "RGB").save(bio, format="PNG")
    return bio.getvalue()


def emit_dataset(scenes, samples, out_dir, full_enumeration=False):
    """Write a bundle from in-memory scenes and samples; return it loaded.

    scenes maps scene_ref to TracedScene. With full_enumeration the
    annotation pool covers every mappable instance; otherwise only the
    samples' targets are written.
    """
    refs = sorted(scenes)
    image_ids = {ref: i + 1 for i, ref in enumerate(refs)}
    images = [
        {"id": image_ids[ref], "file": f"images/{ref}.png",
         "h": scenes[ref].h, "w": scenes[ref].w, "source_tag": ref}
        for ref in refs
    ]

    for sample in samples:
        if sample.scene_ref not in scenes:
            raise DanglingReference(
                f"sample {sample.sample_id} references unknown scene "
                f"{sample.scene_ref}")

    annotations = []
    ann_key = {}  # (scene_ref, instance_id) -> annotation id

    def add_instance(ref, inst):
        key = (ref, inst.instance_id)
        if key in ann_key:
            return ann_key[key]
        ann_id = len(annotations) + 1
        annotations.append(_annotation_row(ann_id, image_ids[ref], inst))
        ann_key[key] = ann_id
        return ann_id

    if full_enumeration:
        for ref in refs:
            for inst in enumerate_instances(scenes[ref]):
                add_instance(ref, inst)

    sample_rows = []
    for sample in samples:
        ann_ids = []
        for inst in sample.targets:
            key = (sample.scene_ref, inst.instance_id)
            if full_enumeration and key not in ann_key:
                raise DanglingReference(
                    f"target {inst.instance_id} missing from the "
                    f"enumerated pool of {sample.scene_ref}")
            ann_ids.append(add_instance(sample.scene_ref, inst))
        sample_rows.append({
            "id": sample.sample_id,
            "image_id": image_ids[sample.scene_ref],
            "expression": sample.expression,
            "category_id": CATEGORY_IDS[sample.category],
            "clue": sample.clue_labels,
            "annotation_ids": ann_ids,
        })

    bundle_dict = {
        "schema_version": SCHEMA_VERSION,
        "images": images,
        "categories": category_rows(),
        "annotations": annotations,
        "samples": sample_rows,
    }
    pngs = {f"images/{ref}.png": _png_bytes(scenes[ref].image)
            for ref in refs}
    write_bundle(bundle_dict, out_dir, pngs)
    return load_dataset(out_dir)


def load_dataset(bundle_dir):
    path = os.path.join(bundle_dir, "dataset.json")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unreadable bundle: {exc}") from exc
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {data.get('schema_version')!r}")
    return DatasetBundle(
        schema_version=data["schema_version"],
        images=data["images"],
        categories=data["categories"],
        annotations=data["annotations"],
        samples=data["samples"],
        root=bundle_dir,
    )


# --- resolving target specs against an existing bundle --------------------

def _image_by_tag(bundle):
    return {img["source_tag"]: img for img in bundle.images}


def _category_name(bundle, category_id):
    for row in bundle.categories:
        if row["id"] == category_id:
            return row["name"]
    raise UnknownCategory(str(category_id))


def resolve_into_bundle(bundle, target_rows):
    """Attach grounding samples to a bundle using annotation provenance.

    target_rows are dicts with script, sample_id, expression, category,
    clue, and targets (the referring-target JSON). Resolution never
    re-renders; it selects annotation rows whose provenance matches.
    """
    by_tag = _image_by_tag(bundle)
    anns_by_image = {}
    for ann in bundle.annotations:
        anns_by_image.setdefault(ann["image_id"], []).append(ann)

    sample_rows = []
    for row in target_rows:
        tag = row["script"]
        if tag not in by_tag:
            raise DanglingReference(f"no image with source_tag {tag!r}")
        image_id = by_tag[tag]["id"]
        category = row["category"]
        if category not in CATEGORY_IDS:
            raise UnknownCategory(category)
        category_id = CATEGORY_IDS[category]
        anns = anns_by_image.get(image_id, [])

        results = row["targets"]["results"]
        if not results:
            raise SchemaError(f"{row['sample_id']}: empty results")
        ann_ids = []
        seen = set()
        for entry in results:
            marker = entry["line"]
            inv = entry.get("invocation_count")
            marker_anns = [a for a in anns
                           if a["provenance"]["marker"] == marker]
            if not marker_anns:
                raise UnknownExecution(f"{marker} has no annotations "
                                       f"in {tag}")
            if inv is None:
                invs = {a["provenance"]["invocation_count"]
                        for a in marker_anns}
                if len(invs) > 1:
                    raise AmbiguousNullInvocation(
                        f"{marker} ran {len(invs)} times")
                inv = invs.pop()
            pool = [a for a in marker_anns
                    if a["provenance"]["invocation_count"] == inv
                    and a["category_id"] == category_id]
            if not pool:
                raise UnknownExecution(
                    f"({marker}, {inv}) has no {category} annotations "
                    f"in {tag}")
            idxs = entry.get("element_indices")
            if idxs is None:
                if len(pool) != 1:
                    raise SingletonViolation(
                        f"({marker}, {inv}) has {len(pool)} {category} "
                        "instances; element_indices required")
                chosen = pool
            else:
                by_elem = {a["provenance"]["element_index"]: a for a in pool}
                chosen = []
                for idx in idxs:
                    if idx not in by_elem:
                        raise IndexOutOfRange(
                            f"element {idx} not among "
                            f"{sorted(by_elem)} for ({marker}, {inv})")
                    chosen.append(by_elem[idx])
            for ann in chosen:
                if ann["id"] in seen:
                    raise SchemaError(
                        f"{row['sample_id']}: duplicate target "
                        f"annotation {ann['id']}")
                seen.add(ann["id"])
                ann_ids.append(ann["id"])
        sample_rows.append({
            "id": row["sample_id"],
            "image_id": image_id,
            "expression": row["expression"],
            "category_id": category_id,
            "clue": validate_clue_labels(row.get("clue", {})),
            "annotation_ids": ann_ids,
        })

    return DatasetBundle(
        schema_version=bundle.schema_version,
        images=bundle.images,
        categories=bundle.categories,
        annotations=bundle.annotations,
        samples=sample_rows,
        root=bundle.root,
    )


def sample_ground_truth(bundle, sample_row):
    """Decode one sample's targets into masks, boxes, and points."""
    anns = {a["id"]: a for a in bundle.annotations}
    masks, bboxes, points = [], [], []
    for ann_id in sample_row["annotation_ids"]:
        if ann_id not in anns:
            raise DanglingReference(f"annotation {ann_id} missing")
        ann = anns[ann_id]
        masks.append(decode_rle(ann["rle"]))
        bboxes.append(tuple(ann["bbox"]))
        points.append(tuple(ann["point"]))
    category = _category_name(bundle, sample_row["category_id"])
    return {"masks": masks, "bboxes": bboxes, "points": points,
            "category": category}


# --- statistics -----------------------------------------------------------

@dataclass
class StatsReport:
    n_images: int
    n_annotations: int
    n_samples: int
    avg_targets: float
    targets_per_sample: dict
    expression_word_len: dict
    per_category: dict
    per_clue: dict

    def to_dict(self):
        return {
            "n_images": self.n_images,
            "n_annotations": self.n_annotations,
            "n_samples": self.n_samples,
            "avg_targets": self.avg_targets,
            "targets_per_sample":
                {str(k): v for k, v in sorted(self.targets_per_sample.items())},
            "expression_word_len":
                {str(k): v for k, v in sorted(self.expression_word_len.items())},
            "per_category": dict(sorted(self.per_category.items())),
            "per_clue": dict(sorted(self.per_clue.items())),
        }


def dataset_stats(bundle):
    id_to_name = {row["id"]: row["name"] for row in bundle.categories}
    targets_hist = {}
    expr_hist = {}
    per_category = {}
    per_clue = {}
    total_targets = 0
    for sample in bundle.samples:
        k = len(sample["annotation_ids"])
        total_targets += k
        targets_hist[k] = targets_hist.get(k, 0) + 1
        words = len(sample["expression"].split())
        expr_hist[words] = expr_hist.get(words, 0) + 1
        name = id_to_name.get(sample["category_id"], "?")
        per_category[name] = per_category.get(name, 0) + 1
        clue = sample.get("clue", {})
        for p in clue.get("primary", []):
            per_clue[p] = per_clue.get(p, 0) + 1
        for s in clue.get("subtypes", []):
            per_clue[s] = per_clue.get(s, 0) + 1
    n_samples = len(bundle.samples)
    return StatsReport(
        n_images=len(bundle.images),
        n_annotations=len(bundle.annotations),
        n_samples=n_samples,
        avg_targets=(total_targets / n_samples) if n_samples else 0.0,
        targets_per_sample=targets_hist,
        expression_word_len=expr_hist,
        per_category=per_category,
        per_clue=per_clue,
    )
