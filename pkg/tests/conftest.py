from __future__ import annotations

import sys

import numpy as np
import pytest

from dfcopt.circuit import DEFAULT_BOUNDS, Layout, TemplateSpec, make_resonator, sample_random_layout


def pair_layout(gap: float = 0.1, l: float = 0.7, w: float = 0.1, u=(0.0, 0.5), dy: float = 0.0) -> Layout:
    """Two resonators side by side with edge-to-edge distance ``gap``."""
    a = make_resonator(2.0, 3.0, l, w, u[0])
    b = make_resonator(2.0 + l + gap, 3.0 + dy, l, w, u[1])
    return Layout((a, b), "pair")


@pytest.fixture
def layout4() -> Layout:
    return sample_random_layout(TemplateSpec(N=4), DEFAULT_BOUNDS, 11)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
