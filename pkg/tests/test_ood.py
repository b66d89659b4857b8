from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from footcast.ood import (
    ID,
    OOD,
    SignalTrace,
    id_threshold,
    per_leg_uncertainty,
    region_error,
    save_segmentation,
    segment_ood,
)


def _trace(values):
    return SignalTrace(np.arange(len(values), dtype=float), np.asarray(values, dtype=float))


def test_per_leg_constant():
    assert np.all(per_leg_uncertainty(np.full(12, 0.006)) == pytest.approx(0.006))


def test_per_leg_single_leg():
    v = np.zeros(12)
    v[0] = 0.3
    out = per_leg_uncertainty(v)
    assert out[0] == pytest.approx(0.1) and np.all(out[1:] == 0)


def test_per_leg_matches_brute_force():
    v = np.random.default_rng(0).uniform(size=12)
    ref = [sum(v[3 * i : 3 * i + 3]) / 3 for i in range(4)]
    assert np.max(np.abs(per_leg_uncertainty(v) - ref)) < 1e-12


def test_threshold_constant():
    assert id_threshold([_trace([0.002] * 7)]) == pytest.approx(0.002)


def test_threshold_pools_values():
    assert id_threshold([_trace([1, 2, 3]), _trace([5])]) == 2.75


def test_threshold_is_length_weighted_mean():
    rng = np.random.default_rng(1)
    traces = [rng.uniform(size=n) for n in (5, 17, 40)]
    weighted = sum(len(t) * t.mean() for t in traces) / sum(len(t) for t in traces)
    assert abs(id_threshold(traces) - weighted) < 1e-12
    assert abs(id_threshold(traces) - np.concatenate(traces).mean()) < 1e-12


def test_threshold_needs_data():
    with pytest.raises(ValueError):
        id_threshold([])


def test_all_below_threshold_single_id_segment():
    seg = segment_ood(_trace([0.1, 0.5, 0.2]), 1.0, 3)
    assert len(seg.segments) == 1 and seg.segments[0].label == ID
    assert (seg.segments[0].start, seg.segments[0].end) == (0, 2)


def test_equal_to_threshold_is_not_exceeding():
    seg = segment_ood(_trace([1.0] * 5), 1.0, 2)
    assert not seg.ood_mask().any()


def test_top_k_selects_highest_mean_run():
    seg = segment_ood(_trace([0, 0, 5, 5, 0, 9, 9, 0]), 1.0, 1)
    assert np.flatnonzero(seg.ood_mask()).tolist() == [5, 6]
    assert seg.labels()[2] == ID and seg.labels()[3] == ID


def test_k_covers_all_candidates():
    seg = segment_ood(_trace([0, 0, 5, 5, 0, 9, 9, 0]), 1.0, 5)
    assert np.flatnonzero(seg.ood_mask()).tolist() == [2, 3, 5, 6]


def test_k_zero_all_id():
    seg = segment_ood(_trace([0, 9, 9, 0]), 1.0, 0)
    assert not seg.ood_mask().any()
    with pytest.raises(ValueError):
        segment_ood(_trace([0.0]), 1.0, -1)


def test_tie_break_prefers_earlier():
    seg = segment_ood(_trace([0, 4, 0, 4, 0]), 1.0, 1)
    assert np.flatnonzero(seg.ood_mask()).tolist() == [1]


@given(st.lists(st.floats(0, 10), min_size=1, max_size=60), st.floats(0.5, 8), st.integers(0, 5))
@settings(max_examples=100, deadline=None)
def test_segmentation_properties(values, thr, k):
    values = np.array(values)
    seg = segment_ood(_trace(values), thr, k)
    # segments partition the trace in order
    assert seg.segments[0].start == 0 and seg.segments[-1].end == len(values) - 1
    for a, b in zip(seg.segments, seg.segments[1:]):
        assert b.start == a.end + 1
    ood = [s for s in seg.segments if s.label == OOD]
    assert len(ood) <= k
    for s in ood:
        assert np.all(values[s.start : s.end + 1] > thr)
        # maximal: neighbours are at or below the threshold
        assert s.start == 0 or values[s.start - 1] <= thr
        assert s.end == len(values) - 1 or values[s.end + 1] <= thr


@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.floats(0.5, 8), st.integers(0, 4), st.floats(0.1, 50))
@settings(max_examples=100, deadline=None)
def test_scale_equivariance(values, thr, k, c):
    a = segment_ood(_trace(values), thr, k)
    b = segment_ood(_trace(np.array(values) * c), thr * c, k)
    assert [(s.start, s.end, s.label) for s in a.segments] == [(s.start, s.end, s.label) for s in b.segments]


def test_equal_candidates_ranked_by_start_not_discovery():
    # same mean (4) everywhere; earlier start wins regardless of run length
    values = [0, 4, 4, 0, 4, 0, 4, 4, 4, 0]
    seg = segment_ood(_trace(values), 1.0, 2)
    assert np.flatnonzero(seg.ood_mask()).tolist() == [1, 2, 4]


def test_region_error_constant():
    seg = segment_ood(_trace([0, 5, 5, 0]), 1.0, 1)
    assert region_error([0.3] * 4, seg) == (0.3, 0.3)


def test_region_error_by_label():
    seg = segment_ood(_trace([0, 5, 5, 0]), 1.0, 1)
    assert region_error([1, 2, 2, 1], seg) == (1.0, 2.0)


def test_region_error_brute_force_and_recombination():
    rng = np.random.default_rng(3)
    values = rng.uniform(0, 2, 80)
    errors = rng.uniform(0, 1, 80)
    seg = segment_ood(_trace(values), 1.2, 3)
    id_mean, ood_mean = region_error(errors, seg)
    labels = seg.labels()
    ids = [e for e, lab in zip(errors, labels) if lab == ID]
    oods = [e for e, lab in zip(errors, labels) if lab == OOD]
    assert abs(id_mean - sum(ids) / len(ids)) < 1e-12
    assert abs(ood_mean - sum(oods) / len(oods)) < 1e-12
    overall = (len(ids) * id_mean + len(oods) * ood_mean) / len(errors)
    assert abs(overall - errors.mean()) < 1e-9


def test_region_error_length_mismatch():
    seg = segment_ood(_trace([0, 5]), 1.0, 1)
    with pytest.raises(ValueError):
        region_error([1, 2, 3], seg)


def test_trace_validation():
    with pytest.raises(ValueError):
        SignalTrace(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SignalTrace(np.array([0.0, 1.0]), np.array([1.0, np.inf]))


def test_segmentation_export(tmp_path):
    tr = _trace([0, 5, 0])
    save_segmentation(tmp_path / "s.csv", tr, segment_ood(tr, 1.0, 1))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,signal,label"
    assert [line.split(",")[2] for line in lines[1:]] == ["ID", "OOD", "ID"]
