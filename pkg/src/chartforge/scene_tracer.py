"""Runs a plotting script under instrumentation and records what it drew.

The tracer wraps the axes-level chart methods (plot, bar, boxplot, ...) so
that every call made by the script is recorded together with the artists it
returned. Internal reuse between those methods (hist calls bar, bar calls
add_patch, stackplot calls fill_between) is suppressed with a depth counter,
so only the outermost call the script actually wrote down is kept.

Scripts are marked with trailing "#k" comments on the lines that create
target elements. A marked line that runs n times yields n traced calls with
invocation_count 0..n-1.
"""

import ast
import contextlib
import io
import os
import re
import signal
import sys
import tempfile
import threading
import time
import tokenize
import traceback
import uuid
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateMarker,
    ExecTimeout,
    MalformedMarker,
    NoMarkedCalls,
    RenderMismatch,
    ScriptError,
    UnknownExecution,
    UnknownMarker,
)

INSTRUMENTED_APIS = (
    "plot", "scatter", "bar", "barh", "hist", "boxplot", "errorbar",
    "pie", "fill", "fill_between", "stackplot", "add_patch",
)

_MARKER_RE = re.compile(r"^#(\d+)$")
_MARKER_LIKE_RE = re.compile(r"^#\d+\S+$")


@dataclass
class RunConfig:
    seed: int = 0
    timeout_s: float = 60.0
    render_scale: float = 100.0
    out_dir: str | None = None


@dataclass
class MarkerMap:
    entries: dict  # "#k" -> 1-based line number

    def __contains__(self, marker):
        return marker in self.entries

    def __getitem__(self, marker):
        return self.entries[marker]


@dataclass
class TracedCall:
    marker: str | None
    api_name: str
    invocation_count: int
    axes_id: str
    axes_kind: str  # cartesian | polar
    arg_summary: dict
    primitive_ids: list
    line: int | None = None


@dataclass
class PrimitiveRecord:
    id: str
    role: str
    call_index: int
    per_datum_index: int | None = None


@dataclass
class TracedScene:
    image: np.ndarray  # H x W x 3 uint8
    h: int
    w: int
    calls: list
    primitives: dict  # id -> PrimitiveRecord
    marker_map: MarkerMap
    seed: int
    render_scale: float
    source_tag: str = ""
    # runtime-only handles; not serialized
    _fig: object = field(default=None, repr=False, compare=False)
    _artists: dict = field(default_factory=dict, repr=False, compare=False)
    _mask_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def artist_for(self, primitive_id):
        return self._artists[primitive_id]

    def close(self):
        if self._fig is not None:
            import matplotlib.pyplot as plt
            plt.close(self._fig)
            self._fig = None
        self._artists = {}
        self._mask_cache = {}


def parse_markers(script_text):
    """Collect trailing "#k" comment markers, mapped to their line numbers."""
    entries = {}
    reader = io.StringIO(script_text).readline
    try:
        tokens = tokenize.generate_tokens(reader)
        for tok in tokens:
            if tok.type != tokenize.COMMENT:
                continue
            text = tok.string.strip()
            m = _MARKER_RE.match(text)
            if m is None:
                # "#12abc" looks like a marker attempt gone wrong; plain
                # prose comments ("# load data") pass through untouched
                if _MARKER_LIKE_RE.match(text):
                    raise MalformedMarker(text)
                continue
            if int(m.group(1)) == 0:
                raise MalformedMarker(text)
            marker = "#" + m.group(1)
            if marker in entries:
                raise DuplicateMarker(marker)
            entries[marker] = tok.start[0]
    except tokenize.TokenError as exc:
        raise ScriptError(f"untokenizable script: {exc}") from exc
    return MarkerMap(entries)


def _statement_spans(script_text):
    """(lineno, end_lineno) for every statement, innermost listed too."""
    try:
        tree = ast.parse(script_text)
    except SyntaxError as exc:
        raise ScriptError(f"syntax error: {exc}") from exc
    spans = []
    for node in ast.walk(tree):
        if isinstance(node, ast.stmt):
            spans.append((node.lineno, node.end_lineno))
    return spans


def _line_to_marker(script_text, marker_map):
    """Map every line of a marked statement to its marker.

    A call wrapped across lines reports the closing line under CPython 3.10,
    so the whole statement span has to resolve to the marker.
    """
    spans = _statement_spans(script_text)
    mapping = {}
    for marker, line in marker_map.entries.items():
        best = None
        for lo, hi in spans:
            if lo <= line <= hi:
                if best is None or (hi - lo) < (best[1] - best[0]):
                    best = (lo, hi)
        if best is None:
            # marker on a blank/comment-only line: no statement to attach to
            mapping[line] = marker
            continue
        for ln in range(best[0], best[1] + 1):
            mapping[ln] = marker
        mapping[line] = marker
    return mapping


class _Recorder:
    """Collects depth-0 instrumented calls during one script execution."""

    def __init__(self, script_filename, line_marker):
        self.script_filename = script_filename
        self.line_marker = line_marker
        self.depth = 0
        self.events = []  # (api_name, line, marker, axes, result)

    def _script_line(self):
        frame = sys._getframe(2)
        while frame is not None:
            if frame.f_code.co_filename == self.script_filename:
                return frame.f_lineno
            frame = frame.f_back
        return None

    def record(self, api_name, axes, result):
        line = self._script_line()
        marker = self.line_marker.get(line) if line is not None else None
        self.events.append((api_name, line, marker, axes, result))


def _install(recorder):
    import matplotlib.axes

    originals = {}
    for name in INSTRUMENTED_APIS:
        orig = getattr(matplotlib.axes.Axes, name)
        originals[name] = orig

        def make_wrapper(api_name, orig_fn):
            def wrapper(self, *args, **kwargs):
                top = recorder.depth == 0
                recorder.depth += 1
                try:
                    result = orig_fn(self, *args, **kwargs)
                finally:
                    recorder.depth -= 1
                if top:
                    recorder.record(api_name, self, result)
                return result
            wrapper.__name__ = api_name
            return wrapper

        setattr(matplotlib.axes.Axes, name, make_wrapper(name, orig))
    return originals


def _uninstall(originals):
    import matplotlib.axes
    for name, orig in originals.items():
        setattr(matplotlib.axes.Axes, name, orig)


def _make_trace(script_filename, executed_lines, deadline):
    def local(frame, event, arg):
        if event == "line":
            executed_lines.add(frame.f_lineno)
            if time.monotonic() > deadline:
                raise ExecTimeout("script exceeded wall-clock limit")
        return local

    def global_(frame, event, arg):
        if frame.f_code.co_filename == script_filename:
            return local
        return None

    return global_


@contextlib.contextmanager
def _alarm(timeout_s):
    # SIGALRM covers time spent inside library code, where the settrace
    # hook never fires; only available on the main thread
    if threading.current_thread() is not threading.main_thread():
        yield
        return

    def handler(signum, frame):
        raise ExecTimeout("script exceeded wall-clock limit")

    old = signal.signal(signal.SIGALRM, handler)
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old)


def _style_flags(line2d):
    ls = line2d.get_linestyle()
    has_line = ls not in ("None", "none", " ", "")
    mk = line2d.get_marker()
    has_marker = mk not in ("None", "none", " ", "", None)
    return has_line, has_marker


def _line_role(line2d):
    has_line, has_marker = _style_flags(line2d)
    if has_line and has_marker:
        return "line_path+marker_set"
    if has_marker:
        return "marker_set"
    return "line_path"


def _normalize_scatter_sizes(pathcol):
    # a length-1 sizes array renders through a different code path than a
    # length-n one; per-datum extraction zeroes individual entries, so the
    # artist must use the length-n pipeline from the very first draw
    n = len(pathcol.get_offsets())
    sizes = pathcol.get_sizes()
    if n and len(sizes) != n:
        pathcol.set_sizes(np.broadcast_to(sizes, (n,)).astype(float).copy())


def _extract_primitives(api_name, result, pid_alloc):
    """Return (records, artists, summary_artist) for one traced call."""
    recs = []
    artists = {}

    def add(role, artist, per_datum=None):
        pid = pid_alloc()
        recs.append((pid, role, per_datum))
        artists[pid] = artist

    summary_artist = None
    if api_name == "plot":
        for ln in result:
            add(_line_role(ln), ln)
        summary_artist = result[0] if result else None
    elif api_name == "scatter":
        _normalize_scatter_sizes(result)
        add("marker_set", result)
        summary_artist = result
    elif api_name in ("bar", "barh"):
        for i, patch in enumerate(result.patches):
            add("bar_patch", patch, i)
    elif api_name == "hist":
        container = result[2]
        try:
            patches = list(container.patches)
        except AttributeError:
            # multi-dataset hist returns a list of containers
            patches = [p for c in container for p in c.patches]
        for i, patch in enumerate(patches):
            add("bin_patch", patch, i)
    elif api_name == "boxplot":
        for i, a in enumerate(result["boxes"]):
            add("box_body", a, i)
        for i, a in enumerate(result["whiskers"]):
            add("whisker", a, i)
        for i, a in enumerate(result["caps"]):
            add("cap", a, i)
        for i, a in enumerate(result["medians"]):
            add("median", a, i)
        # fliers carry no taxonomy category and are left untraced
    elif api_name == "errorbar":
        data_line, caplines, barcols = result.lines
        add(_line_role(data_line), data_line)
        for i, a in enumerate(caplines):
            add("errorbar_cap", a, i)
        for i, a in enumerate(barcols):
            add("errorbar_line", a, i)
        summary_artist = data_line
    elif api_name == "pie":
        wedges = result[0]
        for i, w in enumerate(wedges):
            add("wedge", w, i)
    elif api_name == "fill":
        for i, poly in enumerate(result):
            add("area_patch", poly, i)
    elif api_name == "fill_between":
        add("area_patch", result)
    elif api_name == "stackplot":
        for i, coll in enumerate(result):
            add("area_patch", coll, i)
    elif api_name == "add_patch":
        from matplotlib.patches import Rectangle
        role = "rectangle" if isinstance(result, Rectangle) else "area_patch"
        add(role, result)
    return recs, artists, summary_artist


def _color_repr(value):
    try:
        import matplotlib.colors as mcolors
        return mcolors.to_hex(value, keep_alpha=False)
    except (ValueError, TypeError):
        return None


def _arg_summary(api_name, summary_artist):
    summary = {
        "linestyle": False,
        "marker": None,
        "color": None,
        "orientation": None,
    }
    if api_name in ("bar", "hist"):
        summary["orientation"] = "vertical"
    elif api_name == "barh":
        summary["orientation"] = "horizontal"
    if summary_artist is not None and hasattr(summary_artist, "get_marker"):
        has_line, has_marker = _style_flags(summary_artist)
        summary["linestyle"] = has_line
        summary["marker"] = summary_artist.get_marker() if has_marker else None
        summary["color"] = _color_repr(summary_artist.get_color())
    return summary


def execute_script(script_text, config=None, source_tag=""):
    """Run one plotting script and return its TracedScene.

    Raises ExecTimeout, ScriptError, or NoMarkedCalls per the harness
    contract. The returned scene keeps live artist handles, so masks can be
    re-rendered in the same process.
    """
    import matplotlib
    os.environ.setdefault("CHARTFORGE_HEADLESS", "1")
    import matplotlib.pyplot as plt
    if os.environ["CHARTFORGE_HEADLESS"] != "0" \
            and matplotlib.get_backend().lower() != "agg":
        plt.switch_backend("agg")

    if config is None:
        config = RunConfig()

    marker_map = parse_markers(script_text)
    line_marker = _line_to_marker(script_text, marker_map)

    import random
    random.seed(config.seed)
    np.random.seed(config.seed)

    script_filename = f"<chartforge-script-{uuid.uuid4().hex[:8]}>"
    try:
        code = compile(script_text, script_filename, "exec")
    except SyntaxError as exc:
        raise ScriptError(f"syntax error: {exc}") from exc

    recorder = _Recorder(script_filename, line_marker)
    executed_lines = set()
    deadline = time.monotonic() + config.timeout_s

    baseline_figs = set(plt.get_fignums())
    originals = _install(recorder)
    old_show, old_close = plt.show, plt.close
    plt.show = lambda *a, **k: None
    plt.close = lambda *a, **k: None
    old_cwd = os.getcwd()
    old_trace = sys.gettrace()
    tmpdir = tempfile.TemporaryDirectory(prefix="chartforge-run-")
    try:
        os.chdir(tmpdir.name)
        glb = {"__name__": "__main__", "__file__": script_filename}
        sys.settrace(_make_trace(script_filename, executed_lines, deadline))
        try:
            with _alarm(config.timeout_s):
                exec(code, glb)
        except ExecTimeout:
            raise
        except BaseException as exc:
            raise ScriptError(
                "script raised:\n" + "".join(traceback.format_exception(exc))
            ) from exc
    finally:
        sys.settrace(old_trace)
        plt.show, plt.close = old_show, old_close
        _uninstall(originals)
        os.chdir(old_cwd)
        tmpdir.cleanup()

    for marker, line in marker_map.entries.items():
        span = {ln for ln, m in line_marker.items() if m == marker}
        if not (span & executed_lines):
            raise NoMarkedCalls(f"{marker} on line {line} never executed")

    recorded_markers = {ev[2] for ev in recorder.events}
    for marker in marker_map.entries:
        if marker not in recorded_markers:
            raise ScriptError(f"{marker} marks a non-plotting line")

    # pick the figure that owns the traced calls; marked calls must not be
    # split across figures because a scene is a single raster
    event_figs = []
    for ev in recorder.events:
        f = ev[3].get_figure()
        if f is not None and f not in event_figs:
            event_figs.append(f)
    marked_figs = {ev[3].get_figure() for ev in recorder.events if ev[2]}
    if len(marked_figs) > 1:
        raise ScriptError("marked calls span multiple figures")
    if marked_figs:
        fig = next(iter(marked_figs))
    elif event_figs:
        fig = event_figs[0]
    else:
        new_figs = [plt.figure(n) for n in plt.get_fignums()
                    if n not in baseline_figs]
        if not new_figs:
            raise ScriptError("script drew nothing")
        fig = new_figs[0]

    fig.set_dpi(config.render_scale)

    calls = []
    primitives = {}
    artists = {}
    invocations = {}
    counter = [0]

    def pid_alloc():
        pid = f"p{counter[0]:04d}"
        counter[0] += 1
        return pid

    axes_index = {id(a): f"ax{i}" for i, a in enumerate(fig.axes)}
    for api_name, line, marker, axes, result in recorder.events:
        if axes.get_figure() is not fig:
            continue
        recs, arts, summary_artist = _extract_primitives(
            api_name, result, pid_alloc)
        key = marker if marker is not None else ("line", line, api_name)
        inv = invocations.get(key, 0)
        invocations[key] = inv + 1
        call_index = len(calls)
        call = TracedCall(
            marker=marker,
            api_name=api_name,
            invocation_count=inv,
            axes_id=axes_index.get(id(axes), "ax?"),
            axes_kind="polar" if getattr(axes, "name", "") == "polar"
                      else "cartesian",
            arg_summary=_arg_summary(api_name, summary_artist),
            primitive_ids=[pid for pid, _, _ in recs],
            line=line,
        )
        calls.append(call)
        for pid, role, per_datum in recs:
            primitives[pid] = PrimitiveRecord(
                id=pid, role=role, call_index=call_index,
                per_datum_index=per_datum)
        artists.update(arts)

    fig.canvas.draw()
    buf = np.asarray(fig.canvas.buffer_rgba())
    image = buf[:, :, :3].copy()
    h, w = image.shape[:2]

    return TracedScene(
        image=image, h=h, w=w, calls=calls, primitives=primitives,
        marker_map=marker_map, seed=config.seed,
        render_scale=config.render_scale, source_tag=source_tag,
        _fig=fig, _artists=artists,
    )


def primitive_inventory(scene, marker):
    """All executions of a marked line with their primitive ids."""
    if marker not in scene.marker_map:
        raise UnknownMarker(marker)
    rows = [(c.invocation_count, list(c.primitive_ids))
            for c in scene.calls if c.marker == marker]
    if not rows:
        raise UnknownExecution(f"{marker} has no traced executions")
    rows.sort(key=lambda r: r[0])
    return rows


def render_isolated(scene, artist_list, mutator=None):
    """Alpha mask of the given artists with everything else hidden.

    mutator, when given, is a context manager that temporarily restyles the
    artists (marker suppression, per-datum slicing) around the draw.
    """
    from matplotlib.axes import Axes
    from matplotlib.figure import Figure

    fig = scene._fig
    if fig is None:
        raise RenderMismatch("scene has no live figure to re-render")

    stash = []
    for art in fig.findobj():
        if isinstance(art, (Figure, Axes)):
            continue
        stash.append((art, art.get_visible()))
        art.set_visible(False)
    patches = [fig.patch] + [a.patch for a in fig.axes]
    stash.extend((p, p.get_visible()) for p in patches)
    for p in patches:
        p.set_visible(False)
    try:
        for art in artist_list:
            art.set_visible(True)
        ctx = mutator if mutator is not None else contextlib.nullcontext()
        with ctx:
            fig.canvas.draw()
            buf = np.asarray(fig.canvas.buffer_rgba())
            mask = (buf[:, :, 3] > 0).copy()
    finally:
        for art, vis in stash:
            art.set_visible(vis)
    if mask.shape != (scene.h, scene.w):
        raise RenderMismatch(
            f"re-render {mask.shape} vs scene {(scene.h, scene.w)}")
    return mask


def scene_to_json(scene):
    """JSON-ready dict of the scene structure (image saved separately)."""
    return {
        "h": scene.h,
        "w": scene.w,
        "seed": scene.seed,
        "render_scale": scene.render_scale,
        "source_tag": scene.source_tag,
        "marker_map": dict(scene.marker_map.entries),
        "calls": [
            {
                "marker": c.marker,
                "api_name": c.api_name,
                "invocation_count": c.invocation_count,
                "axes_id": c.axes_id,
                "axes_kind": c.axes_kind,
                "arg_summary": c.arg_summary,
                "primitive_ids": list(c.primitive_ids),
                "line": c.line,
            }
            for c in scene.calls
        ],
        "primitives": {
            pid: {
                "role": rec.role,
                "call_index": rec.call_index,
                "per_datum_index": rec.per_datum_index,
            }
            for pid, rec in sorted(scene.primitives.items())
        },
    }
