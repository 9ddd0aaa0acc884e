"""Tracer behavior: marker parsing, invocation counting, error paths,
reentrancy suppression, and render determinism."""

import numpy as np
import pytest

from chartforge import errors
from chartforge.scene_tracer import (
    RunConfig,
    execute_script,
    parse_markers,
    primitive_inventory,
    render_isolated,
    scene_to_json,
)
from conftest import fixture_script

HEADER = "import matplotlib.pyplot as plt\nfig, ax = plt.subplots()\n"


def run(body, **cfg):
    return execute_script(HEADER + body, RunConfig(**cfg))


class TestParseMarkers:
    def test_markers_found_on_their_lines(self):
        text = "x = 1\nax.plot(x)  #1\nax.bar(x, x)  #2\n"
        mm = parse_markers(text)
        assert "#1" in mm and "#2" in mm

    def test_prose_comments_are_not_markers(self):
        mm = parse_markers("x = 1  # first series\ny = 2  ## double\n")
        assert "#1" not in mm

    def test_duplicate_marker_rejected(self):
        with pytest.raises(errors.DuplicateMarker):
            parse_markers("a = 1  #1\nb = 2  #1\n")

    def test_zero_marker_is_malformed(self):
        with pytest.raises(errors.MalformedMarker):
            parse_markers("a = 1  #0\n")

    def test_marker_with_suffix_is_malformed(self):
        with pytest.raises(errors.MalformedMarker):
            parse_markers("a = 1  #1a\n")


class TestExecution:
    def test_loop_invocation_counts(self):
        scene = run("for i in range(3):\n"
                    "    ax.plot([0, 1], [i, i])  #1\n")
        try:
            counts = [c.invocation_count for c in scene.calls
                      if c.marker == "#1"]
            assert counts == [0, 1, 2]
        finally:
            scene.close()

    def test_unmarked_calls_recorded_without_marker(self):
        scene = run("ax.plot([0, 1], [1, 2])\nax.bar([1], [2])  #1\n")
        try:
            markers = [c.marker for c in scene.calls]
            assert markers == [None, "#1"]
        finally:
            scene.close()

    def test_script_exception_becomes_script_error(self):
        with pytest.raises(errors.ScriptError):
            run("raise ValueError('boom')\n")

    def test_marker_on_non_plotting_line(self):
        with pytest.raises(errors.ScriptError):
            run("x = 1  #1\nax.plot([1], [1])\n")

    def test_marker_never_executed(self):
        with pytest.raises(errors.NoMarkedCalls):
            run("if False:\n"
                "    ax.plot([1], [1])  #1\n"
                "ax.bar([1], [2])\n")

    def test_timeout_on_busy_loop(self):
        with pytest.raises(errors.ExecTimeout):
            run("ax.plot([1], [1])  #1\n"
                "while True:\n"
                "    pass\n", timeout_s=0.5)

    def test_marker_on_multiline_call(self):
        scene = run("ax.fill([0, 1, 2], [0, 1, 0],\n"
                    "        color='olive')  #1\n")
        try:
            assert scene.calls[0].marker == "#1"
        finally:
            scene.close()

    def test_plt_show_is_inert(self):
        scene = run("ax.plot([1, 2], [3, 4])  #1\nplt.show()\n")
        scene.close()

    def test_seeded_rng_and_render_are_deterministic(self):
        body = ("import numpy as np\n"
                "v = np.random.rand(20)\n"
                "ax.plot(v)  #1\n")
        a = run(body)
        b = run(body)
        try:
            assert np.array_equal(a.image, b.image)
        finally:
            a.close()
            b.close()

    def test_render_scale_controls_raster_size(self):
        a = run("ax.plot([1], [1])  #1\n", render_scale=50.0)
        b = run("ax.plot([1], [1])  #1\n", render_scale=100.0)
        try:
            assert b.w == 2 * a.w and b.h == 2 * a.h
        finally:
            a.close()
            b.close()


class TestReentrancy:
    def test_hist_records_one_call(self, scenes):
        scene = scenes("hist")
        assert [c.api_name for c in scene.calls] == ["hist"]
        roles = {scene.primitives[p].role for p in scene.calls[0].primitive_ids}
        assert roles == {"bin_patch"}

    def test_stackplot_records_one_call(self, scenes):
        scene = scenes("stackplot")
        assert [c.api_name for c in scene.calls] == ["stackplot"]

    def test_pie_records_one_call_with_wedges(self, scenes):
        scene = scenes("pie")
        assert [c.api_name for c in scene.calls] == ["pie"]
        roles = [scene.primitives[p].role
                 for p in scene.calls[0].primitive_ids]
        assert roles == ["wedge"] * 5

    def test_boxplot_roles_and_counts(self, scenes):
        scene = scenes("full_box")
        (call,) = scene.calls
        by_role = {}
        for pid in call.primitive_ids:
            by_role.setdefault(scene.primitives[pid].role, []).append(pid)
        assert len(by_role["box_body"]) == 3
        assert len(by_role["whisker"]) == 6
        assert len(by_role["cap"]) == 6
        assert len(by_role["median"]) == 3

    def test_treemap_loop_invocations(self, scenes):
        scene = scenes("treemap")
        counts = [c.invocation_count for c in scene.calls]
        assert counts == [0, 1, 2, 3]
        assert all(c.marker == "#1" for c in scene.calls)

    def test_polar_axes_kind(self, scenes):
        assert scenes("polar_vbar").calls[0].axes_kind == "polar"
        assert scenes("vbar").calls[0].axes_kind == "cartesian"


class TestInventory:
    def test_inventory_rows_sorted_by_invocation(self, scenes):
        rows = primitive_inventory(scenes("treemap"), "#1")
        assert [inv for inv, _ in rows] == [0, 1, 2, 3]
        assert all(len(pids) == 1 for _, pids in rows)

    def test_unknown_marker(self, scenes):
        with pytest.raises(errors.UnknownMarker):
            primitive_inventory(scenes("vbar"), "#9")


class TestIsolation:
    def test_isolated_render_is_a_subset_of_ink(self, scenes):
        scene = scenes("vbar")
        call = scene.calls[0]
        artist = scene.artist_for(call.primitive_ids[0])
        mask = render_isolated(scene, [artist])
        assert mask.any()
        assert mask.shape == (scene.h, scene.w)
        # full image must be unchanged after the isolation round trip
        again = render_isolated(scene, [artist])
        assert np.array_equal(mask, again)

    def test_scene_to_json_shape(self, scenes):
        payload = scene_to_json(scenes("vbar"))
        assert payload["h"] > 0 and payload["w"] > 0
        assert payload["calls"][0]["api_name"] == "bar"
