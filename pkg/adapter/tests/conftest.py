"""Shared fixtures.

The engine is exercised strictly through its installed CLI — these
tests never import it. If `evsel` is not on PATH the conformance suite
cannot run at all, so we fail loudly rather than skip.
"""

import json
import shutil
import subprocess

import pytest

from lotd_adapter import AdapterConfig, dump_pass

QUESTION = "Which bird is perched on the red lighthouse?"
CONTEXT = ("The lighthouse keeper retired in 1998. "
           "A grey heron is often perched on the red lighthouse rail. "
           "Ferries cross the strait twice daily.")
IMAGE = "320x192"


def evsel(*argv, data=None):
    """Run the engine CLI; returns (exit_code, stdout, stderr)."""
    exe = shutil.which("evsel")
    assert exe, "engine CLI not installed; conformance tests need it"
    proc = subprocess.run([exe, *argv], capture_output=True, text=True,
                          input=data)
    return proc.returncode, proc.stdout, proc.stderr


def evsel_json(*argv):
    code, out, err = evsel(*argv)
    assert code == 0, f"evsel {argv} failed ({code}): {err}"
    return json.loads(out) if out.strip() else None


@pytest.fixture()
def dump_path(tmp_path):
    path = tmp_path / "capture.lotd"
    meta = dump_pass(IMAGE, QUESTION, CONTEXT, AdapterConfig(), path)
    return path, meta


@pytest.fixture()
def prompt_json(dump_path, tmp_path):
    path, _ = dump_path
    out = tmp_path / "prompt.json"
    evsel_json("highlight", "--dump", str(path), "--out", str(out))
    return json.loads(out.read_text())
