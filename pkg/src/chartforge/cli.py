"""Command line front end.

Subcommands cover the whole pipeline: trace scripts, synthesize bundles,
resolve referring targets, score predictions (point / bbox / seg / mAP),
and run the mark-overlay grounding loop. Exit code 0 means success, 1 a
validation problem (bad input data or arguments), 2 an execution problem
(script failure, timeout, I/O, client transport).
"""

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from types import SimpleNamespace

import numpy as np

from . import dataset_io, eval_core, som_pipeline
from .errors import (
    ChartForgeError,
    ClientFailure,
    DimensionMismatch,
    EmptyInput,
    ExecTimeout,
    IOFailure,
    NoMarkedCalls,
    RenderMismatch,
    SchemaError,
    ScriptError,
)
from .scene_tracer import RunConfig, execute_script, scene_to_json

EXEC_ERRORS = (ScriptError, ExecTimeout, NoMarkedCalls, IOFailure,
               ClientFailure, RenderMismatch)


class _UsageError(ChartForgeError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; we reserve 2 for execution
    # failures, so surface them as a validation error instead
    def error(self, message):
        raise _UsageError(message)


# --- small I/O helpers ----------------------------------------------------

def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _read_jsonl(path):
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path}:{ln}: {exc}") from exc
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    return rows


def _emit_json(payload, out_path):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise IOFailure(str(exc)) from exc
    else:
        sys.stdout.write(text)


def _load_image(path):
    from PIL import Image
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def _bundle_image(bundle, image_row):
    if bundle.root is None:
        raise IOFailure("bundle has no directory to load images from")
    return _load_image(os.path.join(bundle.root, image_row["file"]))


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# --- config assembly ------------------------------------------------------

def _run_config(args):
    base = {}
    if getattr(args, "config", None):
        base = _read_json(args.config)
        if not isinstance(base, dict):
            raise SchemaError(f"{args.config}: expected a JSON object")
    defaults = RunConfig()
    seed = args.seed if args.seed is not None else base.get("seed", defaults.seed)
    timeout = (args.timeout if args.timeout is not None
               else base.get("timeout_s", defaults.timeout_s))
    scale = (args.render_scale if args.render_scale is not None
             else base.get("render_scale", defaults.render_scale))
    return RunConfig(seed=int(seed), timeout_s=float(timeout),
                     render_scale=float(scale))


def _filter_config(args):
    if not getattr(args, "config", None):
        return som_pipeline.FilterConfig()
    base = _read_json(args.config)
    if not isinstance(base, dict):
        raise SchemaError(f"{args.config}: expected a JSON object")
    cfg = som_pipeline.FilterConfig()
    known = set(vars(cfg))
    unknown = set(base) - known
    if unknown:
        raise SchemaError(f"unknown filter options: {sorted(unknown)}")
    for key, value in base.items():
        setattr(cfg, key, type(getattr(cfg, key))(value))
    return cfg


# --- trace ----------------------------------------------------------------

def cmd_trace(args):
    config = _run_config(args)
    out_dir = args.out or "."
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    for path in args.scripts:
        stem = _stem(path)
        scene = execute_script(_read_text(path), config, source_tag=stem)
        try:
            payload = scene_to_json(scene)
            _emit_json(payload, os.path.join(out_dir, f"{stem}.trace.json"))
            png = dataset_io._png_bytes(scene.image)
            try:
                with open(os.path.join(out_dir, f"{stem}.png"), "wb") as fh:
                    fh.write(png)
            except OSError as exc:
                raise IOFailure(str(exc)) from exc
            print(f"{stem}: {len(scene.calls)} calls, "
                  f"{len(scene.primitives)} primitives")
        finally:
            scene.close()
    return 0


# --- synth ----------------------------------------------------------------

def _synth_worker(path, seed, timeout_s, render_scale):
    config = RunConfig(seed=seed, timeout_s=timeout_s,
                       render_scale=render_scale)
    stem = _stem(path)
    scene = execute_script(_read_text(path), config, source_tag=stem)
    try:
        fields = [dataset_io.annotation_fields(inst)
                  for inst in dataset_io.enumerate_instances(scene)]
        payload = {
            "ref": stem,
            "h": scene.h,
            "w": scene.w,
            "png": dataset_io._png_bytes(scene.image),
            "annotations": fields,
        }
    finally:
        scene.close()
    return payload


def _synth_worker_star(argset):
    return _synth_worker(*argset)


def run_synth(script_paths, out_dir, config=None, jobs=1, target_rows=None):
    """Trace scripts, enumerate every instance, write a bundle directory.

    With jobs > 1 the scripts run in worker processes; output is identical
    to the sequential path because rows are assembled in sorted-ref order
    from picklable payloads either way.
    """
    if config is None:
        config = RunConfig()
    argsets = [(p, config.seed, config.timeout_s, config.render_scale)
               for p in script_paths]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            payloads = list(pool.map(_synth_worker_star, argsets))
    else:
        payloads = [_synth_worker(*a) for a in argsets]

    refs = [p["ref"] for p in payloads]
    if len(set(refs)) != len(refs):
        dupes = sorted({r for r in refs if refs.count(r) > 1})
        raise SchemaError(f"duplicate script stems: {dupes}")
    payloads.sort(key=lambda p: p["ref"])

    image_ids = {p["ref"]: i + 1 for i, p in enumerate(payloads)}
    images = [
        {"id": image_ids[p["ref"]], "file": f"images/{p['ref']}.png",
         "h": p["h"], "w": p["w"], "source_tag": p["ref"]}
        for p in payloads
    ]
    annotations = []
    for p in payloads:
        for fields in p["annotations"]:
            row = {"id": len(annotations) + 1,
                   "image_id": image_ids[p["ref"]]}
            row.update(fields)
            annotations.append(row)
    bundle_dict = {
        "schema_version": dataset_io.SCHEMA_VERSION,
        "images": images,
        "categories": dataset_io.category_rows(),
        "annotations": annotations,
        "samples": [],
    }
    pngs = {f"images/{p['ref']}.png": p["png"] for p in payloads}
    dataset_io.write_bundle(bundle_dict, out_dir, pngs)
    bundle = dataset_io.load_dataset(out_dir)
    if target_rows:
        bundle = dataset_io.resolve_into_bundle(bundle, target_rows)
        dataset_io.write_bundle(bundle.to_dict(), out_dir, {})
        bundle = dataset_io.load_dataset(out_dir)
    return bundle


def cmd_synth(args):
    config = _run_config(args)
    target_rows = None
    if args.targets:
        target_rows = _read_json(args.targets)
        if not isinstance(target_rows, list):
            raise SchemaError(f"{args.targets}: expected a JSON list")
    bundle = run_synth(args.scripts, args.out, config,
                       jobs=args.jobs, target_rows=target_rows)
    print(f"wrote {args.out}: {len(bundle.images)} images, "
          f"{len(bundle.annotations)} annotations, "
          f"{len(bundle.samples)} samples")
    return 0


# --- resolve --------------------------------------------------------------

def cmd_resolve(args):
    bundle = dataset_io.load_dataset(args.bundle)
    rows = _read_json(args.targets)
    if not isinstance(rows, list):
        raise SchemaError(f"{args.targets}: expected a JSON list")
    resolved = dataset_io.resolve_into_bundle(bundle, rows)
    out_dir = args.out or args.bundle
    dataset_io.write_bundle(resolved.to_dict(), out_dir, {})
    if os.path.abspath(out_dir) != os.path.abspath(args.bundle):
        try:
            for img in resolved.images:
                shutil.copyfile(os.path.join(args.bundle, img["file"]),
                                os.path.join(out_dir, img["file"]))
        except OSError as exc:
            raise IOFailure(str(exc)) from exc
    print(f"attached {len(resolved.samples)} samples")
    return 0


# --- eval -----------------------------------------------------------------

_WIRE_FORMAT = {"point": "point", "bbox": "bbox", "seg": "mask"}


def _decode_pred_items(row, wire_fmt, shape):
    declared = row.get("format", wire_fmt)
    if declared != wire_fmt:
        raise SchemaError(
            f"{row.get('sample_id')}: prediction format {declared!r} "
            f"does not match the run format {wire_fmt!r}")
    items = row.get("items", [])
    if not isinstance(items, list):
        raise SchemaError(f"{row.get('sample_id')}: items must be a list")
    out = []
    for item in items:
        try:
            if wire_fmt == "point":
                x, y = item
                out.append((float(x), float(y)))
            elif wire_fmt == "bbox":
                x1, y1, x2, y2 = item
                out.append((float(x1), float(y1), float(x2), float(y2)))
            else:
                rle = item["rle"] if isinstance(item, dict) and "rle" in item \
                    else item
                mask = dataset_io.decode_rle(rle)
                if mask.shape != shape:
                    raise DimensionMismatch(
                        f"prediction mask {mask.shape} vs image {shape}")
                out.append(mask)
        except (TypeError, ValueError, KeyError) as exc:
            raise SchemaError(
                f"{row.get('sample_id')}: bad {wire_fmt} item: {exc}") from exc
    return out


def cmd_eval(args):
    fmt = args.format
    wire_fmt = _WIRE_FORMAT[fmt]
    bundle = dataset_io.load_dataset(args.bundle)
    if not bundle.samples:
        raise EmptyInput("bundle has no samples to evaluate")
    pred_rows = {}
    for row in _read_jsonl(args.preds):
        sid = row.get("sample_id")
        if sid in pred_rows:
            raise SchemaError(f"duplicate prediction row for {sid}")
        pred_rows[sid] = row
    known = {s["id"] for s in bundle.samples}
    extra = sorted(set(pred_rows) - known)
    if extra:
        raise SchemaError(f"predictions for unknown sample ids: {extra[:5]}")

    per_sample = []
    mious = [] if fmt == "seg" else None
    sample_out = []
    for srow in bundle.samples:
        gt = dataset_io.sample_ground_truth(bundle, srow)
        shape = gt["masks"][0].shape
        row = pred_rows.get(srow["id"])
        items = _decode_pred_items(row, wire_fmt, shape) if row else []
        if fmt == "point":
            sm = eval_core.eval_points(items, gt["masks"])
        elif fmt == "bbox":
            sm = eval_core.eval_boxes(items, gt["bboxes"])
        else:
            sm = eval_core.eval_masks(items, gt["masks"], gt["category"])
            mious.append(eval_core.miou_union(items, gt["masks"]))
        per_sample.append(sm)
        entry = {"sample_id": srow["id"], "tp": sm.tp, "fp": sm.fp,
                 "fn": sm.fn, "precision": sm.precision,
                 "recall": sm.recall, "f1": sm.f1}
        if fmt == "seg":
            entry["miou_union"] = mious[-1]
        sample_out.append(entry)

    report = eval_core.macro_aggregate(per_sample, mious)
    payload = {
        "format": fmt,
        "n_samples": len(per_sample),
        "macro_precision": report.macro_p,
        "macro_recall": report.macro_r,
        "macro_f1": report.macro_f1,
        "samples": sample_out,
    }
    if fmt == "seg":
        payload["miou_union"] = report.miou_union
    _emit_json(payload, args.out)
    return 0


# --- map ------------------------------------------------------------------

def cmd_map(args):
    bundle = dataset_io.load_dataset(args.bundle)
    id_to_name = {c["id"]: c["name"] for c in bundle.categories}
    gts = [(a["image_id"], dataset_io.decode_rle(a["rle"]),
            id_to_name[a["category_id"]])
           for a in bundle.annotations]
    if not gts:
        raise EmptyInput("bundle has no annotations")
    image_ids = {img["id"] for img in bundle.images}
    preds = []
    for row in _read_jsonl(args.preds):
        image_id = row.get("image_id")
        if image_id not in image_ids:
            raise SchemaError(f"prediction for unknown image id {image_id!r}")
        items = row.get("items", [])
        if not isinstance(items, list):
            raise SchemaError(f"image {image_id}: items must be a list")
        for item in items:
            try:
                mask = dataset_io.decode_rle(item["rle"])
                category = item["category"]
                confidence = float(item.get("confidence", 1.0))
            except (TypeError, KeyError, ValueError) as exc:
                raise SchemaError(
                    f"image {image_id}: bad detection item: {exc}") from exc
            preds.append((image_id, mask, category, confidence))
    report = eval_core.coco_map(preds, gts)
    payload = {
        "map": report.map,
        "ap50": report.ap50,
        "ap75": report.ap75,
        "ap_small": report.ap_small,
        "ap_medium": report.ap_medium,
        "ap_large": report.ap_large,
        "per_category": report.per_category,
    }
    _emit_json(payload, args.out)
    return 0


# --- som ------------------------------------------------------------------

def _load_candidate_masks(path, shape=None):
    data = _read_json(path)
    rows = data["candidates"] if isinstance(data, dict) else data
    if not isinstance(rows, list):
        raise SchemaError(f"{path}: expected a candidate list")
    masks = []
    for row in rows:
        rle = row["rle"] if isinstance(row, dict) and "rle" in row else row
        mask = dataset_io.decode_rle(rle)
        if shape is not None and mask.shape != shape:
            raise DimensionMismatch(
                f"candidate mask {mask.shape} vs image {shape}")
        masks.append(mask)
    return masks


def cmd_som_filter(args):
    image = _load_image(args.image)
    masks = _load_candidate_masks(args.candidates, image.shape[:2])
    cfg = _filter_config(args)
    kept = som_pipeline.filter_candidates(masks, image, cfg)
    kept_ids = {id(m) for m in kept}
    kept_indices = [i for i, m in enumerate(masks) if id(m) in kept_ids]
    payload = {
        "kept_indices": kept_indices,
        "candidates": [
            {"rle": {"size": list(dataset_io.encode_rle(m).size),
                     "counts": dataset_io.encode_rle(m).counts}}
            for m in kept
        ],
    }
    _emit_json(payload, args.out)
    return 0


def cmd_som_overlay(args):
    image = _load_image(args.image)
    masks = _load_candidate_masks(args.candidates, image.shape[:2])
    marked = som_pipeline.overlay_marks(image, masks)
    png = dataset_io._png_bytes(marked.image)
    try:
        with open(args.out, "wb") as fh:
            fh.write(png)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    map_out = args.map_out or args.out + ".idmap.json"
    _emit_json({str(k): v for k, v in marked.id_map.items()}, map_out)
    print(f"wrote {args.out} with {len(marked.id_map)} marks")
    return 0


def _make_client(spec, gold_by_sample):
    if spec == "stub":
        return som_pipeline.GoldSelectorClient(gold_by_sample)
    if spec.startswith("replay:"):
        return som_pipeline.ReplayClient(spec[len("replay:"):])
    if spec.startswith(("http://", "https://")):
        return som_pipeline.HttpClient(spec)
    raise _UsageError(
        f"unknown client {spec!r}; use stub, replay:FILE, or an http(s) URL")


def cmd_som_run(args):
    bundle = dataset_io.load_dataset(args.bundle)
    if not bundle.samples:
        raise EmptyInput("bundle has no samples")
    if not args.gold and not args.candidates:
        raise _UsageError("som run needs --gold or --candidates FILE")
    images_by_id = {img["id"]: img for img in bundle.images}
    image_cache = {}
    candidate_file = {}
    if args.candidates:
        data = _read_json(args.candidates)
        if not isinstance(data, dict):
            raise SchemaError(
                f"{args.candidates}: expected an object keyed by source_tag")
        candidate_file = data

    gold_by_sample = {s["id"]: [f"ann:{a}" for a in s["annotation_ids"]]
                      for s in bundle.samples}
    client = _make_client(args.client, gold_by_sample)
    cfg = _filter_config(args)

    lines = []
    for srow in bundle.samples:
        img_row = images_by_id[srow["image_id"]]
        if srow["image_id"] not in image_cache:
            image_cache[srow["image_id"]] = _bundle_image(bundle, img_row)
        image = image_cache[srow["image_id"]]
        if args.gold:
            gt = dataset_io.sample_ground_truth(bundle, srow)
            candidates = [
                SimpleNamespace(bitmap=m, instance_id=f"ann:{a}")
                for m, a in zip(gt["masks"], srow["annotation_ids"])
            ]
        else:
            tag = img_row["source_tag"]
            if tag not in candidate_file:
                raise SchemaError(f"no candidates for source_tag {tag!r}")
            masks = []
            for i, row in enumerate(candidate_file[tag]):
                rle = row["rle"] if isinstance(row, dict) and "rle" in row \
                    else row
                masks.append(dataset_io.decode_rle(rle))
            candidates = masks
        candidates = som_pipeline.filter_candidates(candidates, image, cfg)
        sample = SimpleNamespace(sample_id=srow["id"],
                                 expression=srow["expression"])
        pred = som_pipeline.run_grounding(sample, image, candidates, client)
        items = []
        for m in pred.items:
            rle = dataset_io.encode_rle(m)
            items.append({"rle": {"size": list(rle.size),
                                  "counts": rle.counts}})
        line = {"sample_id": srow["id"], "format": "mask", "items": items}
        if pred.note:
            line["note"] = pred.note
        lines.append(json.dumps(line, sort_keys=True))
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    print(f"wrote {args.out}: {len(lines)} predictions")
    return 0


# --- stats ----------------------------------------------------------------

def cmd_stats(args):
    bundle = dataset_io.load_dataset(args.bundle)
    _emit_json(dataset_io.dataset_stats(bundle).to_dict(), args.out)
    return 0


# --- parser ---------------------------------------------------------------

def _add_run_flags(p):
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed applied before the script runs")
    p.add_argument("--timeout", type=float, default=None,
                   help="wall-clock budget per script, seconds")
    p.add_argument("--render-scale", type=float, default=None,
                   dest="render_scale", help="figure DPI for rendering")
    p.add_argument("--config", default=None,
                   help="JSON file with seed / timeout_s / render_scale")


def build_parser():
    parser = _Parser(prog="chartforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="run scripts and dump trace json + png")
    p.add_argument("scripts", nargs="+")
    p.add_argument("--out", default=None, help="output directory")
    _add_run_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth", help="build a dataset bundle from scripts")
    p.add_argument("scripts", nargs="+")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--targets", default=None,
                   help="referring-target rows to attach as samples")
    p.add_argument("--jobs", type=int, default=1)
    _add_run_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("resolve", help="attach samples to an existing bundle")
    p.add_argument("bundle")
    p.add_argument("targets")
    p.add_argument("--out", default=None,
                   help="write the resolved bundle here instead of in place")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("eval", help="score grounding predictions")
    p.add_argument("format", choices=["point", "bbox", "seg"])
    p.add_argument("bundle")
    p.add_argument("preds", help="JSONL with sample_id / format / items")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("map", help="COCO-style mAP over the annotation pool")
    p.add_argument("bundle")
    p.add_argument("preds", help="JSONL with image_id / items")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_map)

    som = sub.add_parser("som", help="mark-overlay candidate pipeline")
    som_sub = som.add_subparsers(dest="som_command", required=True)

    p = som_sub.add_parser("filter", help="drop tiny/duplicate/white masks")
    p.add_argument("image")
    p.add_argument("candidates", help="JSON list of RLE masks")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None,
                   help="JSON overriding FilterConfig fields")
    p.set_defaults(func=cmd_som_filter)

    p = som_sub.add_parser("overlay", help="draw numbered badges on an image")
    p.add_argument("image")
    p.add_argument("candidates")
    p.add_argument("--out", required=True, help="marked PNG path")
    p.add_argument("--map-out", default=None, dest="map_out",
                   help="id map path (default OUT.idmap.json)")
    p.set_defaults(func=cmd_som_overlay)

    p = som_sub.add_parser("run", help="closed grounding loop over a bundle")
    p.add_argument("bundle")
    p.add_argument("--out", required=True, help="predictions JSONL path")
    p.add_argument("--client", default="stub",
                   help="stub | replay:FILE | http(s)://endpoint")
    p.add_argument("--gold", action="store_true",
                   help="use each sample's own targets as candidates")
    p.add_argument("--candidates", default=None,
                   help="JSON object mapping source_tag to RLE mask lists")
    p.add_argument("--config", default=None,
                   help="JSON overriding FilterConfig fields")
    p.set_defaults(func=cmd_som_run)

    p = sub.add_parser("stats", help="bundle composition summary")
    p.add_argument("bundle")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EXEC_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ChartForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
