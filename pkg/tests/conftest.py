"""Shared fixtures: kernel-backend parametrization and tmp factories."""

import numpy as np
import pytest

from evsel._kernels import pyref

try:
    from evsel._kernels import _core
    BACKENDS = [("python", pyref), ("compiled", _core)]
except ImportError:  # extension not built; test the pure path only
    _core = None
    BACKENDS = [("python", pyref)]


@pytest.fixture(params=BACKENDS, ids=[name for name, _ in BACKENDS])
def kernel_backend(request):
    """Yields each available kernel backend module."""
    return request.param[1]


@pytest.fixture
def small_dump():
    from evsel.dumpio import ModelDims
    from evsel.synth import SynthSpec, generate

    spec = SynthSpec(
        dims=ModelDims(n_layers=4, n_heads=2, seq_len=40, hidden=16,
                       grid_h=3, grid_w=4),
        peak_cells=((1, 2, 0.92),), sink_tokens=(5,), sink_dims=(3,),
        sink_magnitude=30.0, evidence_sentence=1, seed=7)
    dump, truth = generate(spec)
    return dump, truth


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion at the end of the run."""
    import sys

    results = []
    for name, mod in list(sys.modules.items()):
        if name.rpartition(".")[2] == "test_acceptance":
            results = getattr(mod, "RESULTS", [])
            if results:
                break
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok in results:
        terminalreporter.write_line(
            f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}")
