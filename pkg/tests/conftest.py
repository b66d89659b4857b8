from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from footcast.terrain import HeightField

sys.path.insert(0, str(Path(__file__).parent))


def field_from(fn, x_range=(-2.0, 4.0), y_range=(-3.0, 3.0), resolution=0.05) -> HeightField:
    """Height field sampling ``fn(x, y)`` on a regular grid."""
    nx = int(round((x_range[1] - x_range[0]) / resolution)) + 1
    ny = int(round((y_range[1] - y_range[0]) / resolution)) + 1
    xs = x_range[0] + resolution * np.arange(nx)
    ys = y_range[0] + resolution * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    return HeightField(fn(X, Y), resolution, (x_range[0], y_range[0]))


@pytest.fixture
def flat_field() -> HeightField:
    return field_from(lambda X, Y: np.zeros_like(X))


@pytest.fixture
def ramp_field() -> HeightField:
    # x-aligned ramp, slope 0.1
    return field_from(lambda X, Y: 0.1 * X)


TINY_CONFIG = """
[experiment]
seeds = 0, 1
ood_runs = 1
plan_runs = 2
progress_runs = 2
predict_M = 4

[collect]
id_runs = 1
id_steps = 80
eval_steps = 40
corr_steps = 40

[test_terrain]
kinds = spiked

[train]
epochs = 2
batch_size = 16

[mppi]
K_samples = 16
horizon = 10

[episode]
max_steps = 8
"""


@pytest.fixture
def tiny_config(tmp_path) -> Path:
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG)
    return path


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
