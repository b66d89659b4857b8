from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from footcast.costmap import (
    LETHAL,
    Costmap,
    CostmapConfig,
    GridSpec,
    leg_costs,
    obstacle_costmap,
    roughness_costmap,
    uncertainty_costmap,
    windowed_variance,
)
from footcast.errors import ConfigurationError
from conftest import field_from
from oracles import blob_max_loops, windowed_variance_loops

CFG = CostmapConfig()
GRID = GridSpec(31, 21, 0.1, (-1.0, -1.0))
FEET = np.array([[0.25, 0.15], [0.25, -0.15], [-0.25, 0.15], [-0.25, -0.15]])


def _node_index(grid, x, y):
    return int(round((y - grid.origin[1]) / grid.resolution)), int(round((x - grid.origin[0]) / grid.resolution))


def test_defaults():
    assert CFG.alpha == 2000 and CFG.blob_radius == 0.2 and CFG.sigma_b == 0.1
    assert CFG.obstacle_height_threshold == 0.15 and CFG.lethal == 100
    with pytest.raises(ConfigurationError):
        CostmapConfig(alpha=0)


# uncertainty blobs


def test_zero_variance_zero_map():
    cm = uncertainty_costmap([(FEET, np.zeros(4))], CFG, GRID)
    assert np.all(cm.costs == 0)
    assert np.all(uncertainty_costmap([], CFG, GRID).costs == 0)


def test_lethal_clamp():
    assert np.all(leg_costs(np.full(4, 0.125), CFG) == 100.0)  # 2000 * 0.125 = 250
    cm = uncertainty_costmap([(np.array([[0.2, 0.1]]), [0.125])], CFG, GRID)
    r, c = _node_index(GRID, 0.2, 0.1)
    assert cm.costs[r, c] == 100.0 and cm.costs.max() == 100.0


def test_peak_and_one_sigma_falloff():
    centre = np.array([[0.3, 0.2]])  # on a node
    cm = uncertainty_costmap([(centre, [0.01])], CFG, GRID)
    r, c = _node_index(GRID, 0.3, 0.2)
    assert cm.costs[r, c] == pytest.approx(20.0, abs=1e-12)
    assert cm.costs[r, c + 1] == pytest.approx(20.0 * math.exp(-0.5), abs=1e-12)
    assert cm.costs[r, c + 1] / cm.costs[r, c] == pytest.approx(0.6065, abs=1e-4)


def test_blobs_match_loop_oracle():
    rng = np.random.default_rng(4)
    preds = [(FEET + rng.normal(0, 0.3, 2), rng.uniform(0, 0.03, 4)) for _ in range(3)]
    cm = uncertainty_costmap(preds, CFG, GRID)
    centres = np.concatenate([p[0] for p in preds])
    peaks = np.concatenate([np.minimum(100, 2000 * p[1]) for p in preds])
    xs = GRID.origin[0] + GRID.resolution * np.arange(GRID.width)
    ys = GRID.origin[1] + GRID.resolution * np.arange(GRID.height)
    ref = np.minimum(100, blob_max_loops(centres, peaks, CFG.sigma_b, xs, ys))
    # truncation beyond the cutoff contributes at most peak * exp(-cutoff^2 / 2)
    tol = peaks.max() * math.exp(-(CFG.cutoff_sigmas**2) / 2) + 1e-12
    assert np.max(np.abs(cm.costs - ref)) <= tol


def test_max_composition_not_sum():
    a = (FEET[:1], [0.01])
    b = (FEET[:1], [0.02])
    both = uncertainty_costmap([a, b], CFG, GRID).costs
    assert np.array_equal(both, uncertainty_costmap([b], CFG, GRID).costs)
    ab = np.maximum(uncertainty_costmap([a], CFG, GRID).costs, uncertainty_costmap([(FEET[1:2], [0.02])], CFG, GRID).costs)
    assert np.array_equal(uncertainty_costmap([a, (FEET[1:2], [0.02])], CFG, GRID).costs, ab)


@given(st.lists(st.floats(0, 0.1), min_size=4, max_size=4), st.integers(0, 3), st.floats(0, 0.05))
@settings(max_examples=50, deadline=None)
def test_monotone_in_variance(var, leg, bump):
    var = np.array(var)
    more = var.copy()
    more[leg] += bump
    lo = uncertainty_costmap([(FEET, var)], CFG, GRID).costs
    hi = uncertainty_costmap([(FEET, more)], CFG, GRID).costs
    assert np.all(hi >= lo)
    assert lo.max() <= LETHAL and hi.min() >= 0


# obstacle baseline


def test_obstacle_flat_is_free(flat_field):
    cm = obstacle_costmap(flat_field, CFG, GridSpec.covering(flat_field))
    assert np.all(cm.costs == 0)


def test_obstacle_ramp_is_free(ramp_field):
    cm = obstacle_costmap(ramp_field, CFG, GridSpec.covering(ramp_field))
    assert np.all(cm.costs == 0)


def test_obstacle_spike_is_lethal():
    field = field_from(lambda X, Y: np.where((np.abs(X - 1.0) < 0.06) & (np.abs(Y) < 0.06), 0.3, 0.0))
    grid = GridSpec.covering(field)
    cm = obstacle_costmap(field, CFG, grid)
    r, c = _node_index(grid, 1.0, 0.0)
    assert cm.costs[r, c] == 100.0
    assert set(np.unique(cm.costs)) == {0.0, 100.0}
    assert cm.costs.sum() == 100.0


def test_obstacle_below_threshold_is_free():
    field = field_from(lambda X, Y: np.where((np.abs(X - 1.0) < 0.06) & (np.abs(Y) < 0.06), 0.14, 0.0))
    assert np.all(obstacle_costmap(field, CFG, GridSpec.covering(field)).costs == 0)


# roughness baseline


def test_roughness_flat_is_zero(flat_field):
    assert np.all(roughness_costmap(flat_field, CFG, GridSpec.covering(flat_field)).costs == 0)


def test_roughness_ramp_interior_analytic(ramp_field):
    grid = GridSpec.covering(ramp_field)
    cm = roughness_costmap(ramp_field, CFG, grid)
    # window of 5 nodes along x at 0.1 m: var of 0.01 * k, k = -2..2
    expected = CFG.roughness_scale * 0.01 * 0.01 * (25 - 1) / 12
    interior = cm.costs[2:-2, 2:-2]
    assert np.max(np.abs(interior - expected)) < 1e-9


def test_windowed_variance_matches_loops():
    rng = np.random.default_rng(7)
    h = np.where(rng.uniform(size=(9, 12)) > 0.6, 0.1, 0.0) + rng.normal(0, 0.01, (9, 12))
    for n in (1, 3, 5):
        assert np.max(np.abs(windowed_variance(h, n) - windowed_variance_loops(h, n))) < 1e-12


def test_roughness_stepped_matches_oracle():
    field = field_from(lambda X, Y: 0.08 * np.floor(X / 0.3), x_range=(0, 2), y_range=(-1, 1))
    grid = GridSpec.covering(field)
    cm = roughness_costmap(field, CFG, grid)
    X, Y = grid.nodes()
    h = field.elevation(X, Y, clip=True)
    ref = np.minimum(100, CFG.roughness_scale * windowed_variance_loops(h, 5))
    assert np.max(np.abs(cm.costs - ref)) < 1e-9


# costmap container


def test_sample_off_map_is_lethal():
    cm = Costmap.zeros(GRID)
    assert cm.sample(5.0, 0.0) == 100.0
    assert cm.sample(-1.0001 - 0.1, 0.0) == 100.0
    assert cm.sample(0.0, 0.0) == 0.0


def test_sample_bilinear():
    costs = np.zeros((GRID.height, GRID.width))
    r, c = _node_index(GRID, 0.0, 0.0)
    costs[r, c + 1] = 10.0
    cm = Costmap(costs, GRID.resolution, GRID.origin)
    assert cm.sample(0.05, 0.0) == pytest.approx(5.0)
    assert cm.sample(0.05, 0.05) == pytest.approx(2.5)


def test_costs_validated():
    with pytest.raises(ValueError):
        Costmap(np.full((2, 2), 101.0), 0.1)
    with pytest.raises(ValueError):
        Costmap(np.full((2, 2), -1.0), 0.1)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    cm = Costmap(rng.uniform(0, 100, (GRID.height, GRID.width)), GRID.resolution, GRID.origin)
    cm.save(tmp_path / "c.grid")
    back = Costmap.load(tmp_path / "c.grid")
    assert back.costs.tobytes() == cm.costs.tobytes()
    assert back.origin == cm.origin and back.resolution == cm.resolution
