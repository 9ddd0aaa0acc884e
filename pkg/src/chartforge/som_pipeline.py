"""Candidate filtering, numbered-mark overlays, and selection clients.

Stage one of the detect-then-select paradigm produces candidate masks from
any source; this module prunes them with conservative rules, burns numbered
badges into the chart, hands the marked image to a selection client, and
parses the client's bracketed answer back into masks.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClientFailure,
    DimensionMismatch,
    EmptyCandidates,
    NoSelectionFound,
    UnknownMarkId,
)
from .eval_core import mask_iou
from .mask_forge import representative_point
from .target_resolver import PredictionSet


@dataclass
class FilterConfig:
    min_area_px: int = 10
    dedup_iou: float = 0.9
    composite_coverage: float = 0.98
    white_ratio: float = 0.95
    white_channel_min: int = 245


@dataclass
class MarkedImage:
    image: np.ndarray  # H x W x 3 uint8 with badges drawn
    id_map: dict  # mark number (from 1) -> candidate mask id


@dataclass
class SelectionRequest:
    image: np.ndarray
    expression: str
    candidate_count: int
    sample_id: str | None = None
    # mark number -> candidate id; real clients must ignore this, it
    # exists so offline oracle clients can answer without a model
    id_map: dict | None = None


def _bitmap(mask):
    if hasattr(mask, "bitmap"):
        return mask.bitmap
    return np.asarray(mask, dtype=bool)


def _candidate_id(mask, index):
    cid = getattr(mask, "instance_id", "")
    return cid if cid else index


def filter_candidates(masks, image, cfg=None):
    """Prune candidate masks: tiny, duplicated, composite, then white.

    Rules run in that order. Dedup keeps the earlier mask of a pair.
    A composite is a mask covered by the union of the other survivors at
    the coverage threshold; removal is sequential, which makes the whole
    filter idempotent.
    """
    if cfg is None:
        cfg = FilterConfig()
    image = np.asarray(image)
    bitmaps = [_bitmap(m) for m in masks]
    for b in bitmaps:
        if b.shape != image.shape[:2]:
            raise DimensionMismatch(
                f"mask {b.shape} vs image {image.shape[:2]}")

    keep = [int(b.sum()) >= cfg.min_area_px for b in bitmaps]

    for i in range(len(masks)):
        if not keep[i]:
            continue
        for j in range(i):
            if keep[j] and mask_iou(bitmaps[i], bitmaps[j]) > cfg.dedup_iou:
                keep[i] = False
                break

    for i in range(len(masks)):
        if not keep[i]:
            continue
        others = np.zeros(image.shape[:2], dtype=bool)
        for j in range(len(masks)):
            if j != i and keep[j]:
                others |= bitmaps[j]
        area = int(bitmaps[i].sum())
        covered = int((bitmaps[i] & others).sum())
        if area and covered / area >= cfg.composite_coverage:
            keep[i] = False

    if image.ndim == 3:
        white = (image >= cfg.white_channel_min).all(axis=2)
        for i in range(len(masks)):
            if not keep[i]:
                continue
            area = int(bitmaps[i].sum())
            ratio = int((bitmaps[i] & white).sum()) / area if area else 1.0
            if ratio > cfg.white_ratio:
                keep[i] = False

    return [m for m, k in zip(masks, keep) if k]


def _badge_geometry(draw, label, font):
    left, top, right, bottom = draw.textbbox((0, 0), label, font=font)
    tw, th = right - left, bottom - top
    r = max(tw, th) // 2 + 5
    return tw, th, left, top, r


def _nudge_offsets(step):
    yield (0, 0)
    ring = 1
    while True:
        s = ring * step
        for dx, dy in ((0, s), (0, -s), (s, 0), (-s, 0),
                       (s, s), (-s, s), (s, -s), (-s, -s)):
            yield (dx, dy)
        ring += 1


def overlay_marks(image, candidates):
    """Burn numbered badges at each candidate's representative point.

    Badges never overlap: colliding ones get nudged outward in a
    deterministic ring pattern. Mark numbers start at 1 and map back to
    candidate ids bijectively.
    """
    from PIL import Image, ImageDraw, ImageFont

    if not candidates:
        raise EmptyCandidates("no candidate masks to mark")
    image = np.asarray(image)
    canvas = Image.fromarray(image.astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.load_default()
    h, w = image.shape[:2]

    id_map = {}
    occupied = []
    for number, mask in enumerate(candidates, start=1):
        label = str(number)
        point = representative_point(_bitmap(mask))
        tw, th, toff_x, toff_y, r = _badge_geometry(draw, label, font)
        cx, cy = None, None
        for attempt, (dx, dy) in enumerate(_nudge_offsets(step=2 * r)):
            # a crowded tiny image may have no free spot at all; give up
            # after a bounded search and accept the overlap
            if attempt > 400:
                break
            x = min(max(point.x + dx, r), w - 1 - r)
            y = min(max(point.y + dy, r), h - 1 - r)
            box = (x - r, y - r, x + r, y + r)
            clash = any(not (box[2] < b[0] or b[2] < box[0]
                             or box[3] < b[1] or b[3] < box[1])
                        for b in occupied)
            if not clash:
                cx, cy = x, y
                occupied.append(box)
                break
        if cx is None:
            cx = min(max(point.x, r), w - 1 - r)
            cy = min(max(point.y, r), h - 1 - r)
            occupied.append((cx - r, cy - r, cx + r, cy + r))
        draw.ellipse((cx - r, cy - r, cx + r, cy + r),
                     fill=(255, 255, 255), outline=(0, 0, 0), width=2)
        draw.text((cx - tw / 2 - toff_x, cy - th / 2 - toff_y), label,
                  fill=(0, 0, 0), font=font)
        id_map[number] = _candidate_id(mask, number - 1)
    return MarkedImage(image=np.asarray(canvas), id_map=id_map)


_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


def parse_selection(response_text, id_map):
    """Mask ids from the last bracketed integer list in the response."""
    best = None
    for match in _BRACKET_RE.finditer(response_text):
        inner = match.group(1).strip()
        if inner == "":
            best = []
            continue
        parts = [p.strip() for p in inner.split(",")]
        if all(re.fullmatch(r"-?\d+", p) for p in parts):
            best = [int(p) for p in parts]
    if best is None:
        raise NoSelectionFound(response_text[:200])
    out = []
    seen = set()
    for number in best:
        if number not in id_map:
            raise UnknownMarkId(str(number))
        if number in seen:
            continue
        seen.add(number)
        out.append(id_map[number])
    return out


# --- selection clients ----------------------------------------------------

class ScriptedClient:
    """Offline stub: replies from a canned list or a callable."""

    def __init__(self, responses):
        self._fn = responses if callable(responses) else None
        self._queue = None if callable(responses) else list(responses)

    def select(self, request):
        if self._fn is not None:
            return self._fn(request)
        if not self._queue:
            raise ClientFailure("scripted responses exhausted")
        return self._queue.pop(0)


class GoldSelectorClient:
    """Oracle stub: picks the marks whose candidate ids are gold targets."""

    def __init__(self, gold_ids_by_sample):
        self.gold = gold_ids_by_sample

    def select(self, request):
        gold = set(self.gold.get(request.sample_id, ()))
        chosen = [str(n) for n, cid in sorted((request.id_map or {}).items())
                  if cid in gold]
        return "[" + ", ".join(chosen) + "]"


class ReplayClient:
    """Replays responses cached as JSON lines {sample_id, response}."""

    def __init__(self, path):
        self.responses = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self.responses[row["sample_id"]] = row["response"]

    def select(self, request):
        if request.sample_id not in self.responses:
            raise ClientFailure(f"no cached response for "
                                f"{request.sample_id}")
        return self.responses[request.sample_id]


class HttpClient:
    """POSTs the marked image to a JSON endpoint and reads back text.

    The bearer token is taken from the CHARTFORGE_CLIENT_TOKEN environment
    variable when present.
    """

    def __init__(self, endpoint, token_env="CHARTFORGE_CLIENT_TOKEN",
                 timeout_s=60.0):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout_s = timeout_s

    def select(self, request):
        import base64
        import io
        import os

        import requests
        from PIL import Image

        bio = io.BytesIO()
        Image.fromarray(request.image, "RGB").save(bio, format="PNG")
        payload = {
            "expression": request.expression,
            "candidate_count": request.candidate_count,
            "image_png_b64": base64.b64encode(bio.getvalue()).decode(),
        }
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(self.endpoint, json=payload,
                                 headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
            return resp.json()["text"]
        except Exception as exc:
            raise ClientFailure(str(exc)) from exc


def run_grounding(sample, image, candidates, client):
    """Mark candidates, query the client, parse the reply into masks.

    Unparseable replies score as an empty prediction (the note says why);
    client transport errors propagate as ClientFailure tagged with the
    sample id.
    """
    sample_id = getattr(sample, "sample_id", None)
    expression = getattr(sample, "expression", str(sample))
    if not candidates:
        return PredictionSet(format="mask", items=[], note="no candidates")
    marked = overlay_marks(image, candidates)
    request = SelectionRequest(
        image=marked.image,
        expression=expression,
        candidate_count=len(candidates),
        sample_id=sample_id,
        id_map=marked.id_map,
    )
    try:
        response = client.select(request)
    except ClientFailure as exc:
        raise ClientFailure(f"{sample_id}: {exc}") from exc
    try:
        chosen = parse_selection(response, marked.id_map)
    except (NoSelectionFound, UnknownMarkId) as exc:
        return PredictionSet(format="mask", items=[],
                             note=f"{type(exc).__name__}: {exc}")
    by_id = {_candidate_id(m, i): m for i, m in enumerate(candidates)}
    items = [_bitmap(by_id[cid]) for cid in chosen]
    return PredictionSet(format="mask", items=items)
