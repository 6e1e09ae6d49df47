import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dsfnilm.setfn import AggregateSeries, build_instance, make_model  # noqa: E402
from dsfnilm.verify import random_instance  # noqa: E402


@pytest.fixture
def single_appliance():
    """mu = [0, 100] on one line, lambda = 1."""
    def make(y):
        model = make_model([[0, 100]], [[1.0]], 1.0)
        return build_instance(model, AggregateSeries(np.asarray(y, dtype=float)[:, None]))
    return make


@pytest.fixture
def rand_instance():
    def make(seed, L=2, states=(2, 2), T=3, R=2, **kw):
        return random_instance(np.random.default_rng(seed), L, states, T, R, **kw)
    return make


# -- acceptance reporting --------------------------------------------------------------------
# Each acceptance test records one verdict line; the lines are echoed live and
# repeated in the terminal summary so they survive output capture.

_VERDICTS: dict[str, str] = {}


@pytest.fixture
def verdict(request, capsys):
    def record(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        _VERDICTS[request.node.nodeid] = line
        with capsys.disabled():
            print(f"\n    {line}")
        assert ok, line
    return record


def pytest_runtest_logreport(report):
    if report.when == "call" and "acceptance" in report.keywords and report.failed:
        _VERDICTS.setdefault(report.nodeid, f"{report.nodeid.split('::')[-1]}: FAIL - raised before a verdict")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS.values(), key=lambda s: (len(s.split(":")[0]), s)):
            terminalreporter.write_line(line)
