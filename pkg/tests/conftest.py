"""Shared fixtures: lazily traced fixture scenes and a synthesized bundle."""

import json
import pathlib

import pytest

import chartforge
from chartforge.cli import run_synth
from chartforge.scene_tracer import RunConfig, execute_script

FIXTURE_DIR = pathlib.Path(chartforge.__file__).resolve().parent / "fixtures"
SCRIPT_DIR = FIXTURE_DIR / "scripts"


def fixture_script(stem):
    return (SCRIPT_DIR / f"{stem}.py").read_text()


def load_target_rows():
    return json.loads((FIXTURE_DIR / "targets.json").read_text())


@pytest.fixture(scope="session")
def scenes():
    """Factory for traced fixture scenes, cached for the whole run."""
    cache = {}

    def get(stem):
        if stem not in cache:
            cache[stem] = execute_script(fixture_script(stem), RunConfig(),
                                         source_tag=stem)
        return cache[stem]

    yield get
    for scene in cache.values():
        scene.close()


@pytest.fixture(scope="session")
def corpus_bundle(tmp_path_factory):
    """Full-enumeration bundle over every fixture script, samples attached."""
    out = tmp_path_factory.mktemp("bundle")
    scripts = sorted(str(p) for p in SCRIPT_DIR.glob("*.py"))
    return run_synth(scripts, str(out), RunConfig(),
                     target_rows=load_target_rows())
