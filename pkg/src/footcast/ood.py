"""ID/OOD thresholds and top-K segmentation of uncertainty traces."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ID = "ID"
OOD = "OOD"


@dataclass(frozen=True)
class SignalTrace:
    times: np.ndarray
    values: np.ndarray
    kind: str = "proposed"  # or "terrain_variance"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1D arrays of equal length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("trace values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # inclusive
    mean: float
    label: str


@dataclass(frozen=True)
class OodSegmentation:
    threshold: float
    segments: tuple[Segment, ...]

    def labels(self) -> np.ndarray:
        n = self.segments[-1].end + 1 if self.segments else 0
        out = np.empty(n, dtype=object)
        for seg in self.segments:
            out[seg.start : seg.end + 1] = seg.label
        return out

    def ood_mask(self) -> np.ndarray:
        return self.labels() == OOD


def per_leg_uncertainty(variance) -> np.ndarray:
    """Mean of each leg's three coordinate variances: (..., 12) -> (..., 4)."""
    v = np.asarray(variance, dtype=float)
    return v.reshape(*v.shape[:-1], 4, 3).mean(axis=-1)


def id_threshold(id_traces) -> float:
    """Mean of all values pooled across the ID traces."""
    values = [np.asarray(t.values if isinstance(t, SignalTrace) else t, dtype=float) for t in id_traces]
    if not values or sum(v.size for v in values) == 0:
        raise ValueError("need at least one non-empty ID trace")
    return float(np.concatenate(values).mean())


def _runs(mask):
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def segment_ood(trace, threshold: float, k_transitions: int) -> OodSegmentation:
    """Label the top-K above-threshold runs (by mean signal) OOD, the rest ID.

    Runs use strict exceedance; equal means rank the earlier run first.
    Returned segments partition the trace in time order.  Chosen runs are
    maximal, so two OOD segments are always separated by an ID step.
    """
    if k_transitions < 0:
        raise ValueError(f"k_transitions must be >= 0, got {k_transitions}")
    values = np.asarray(trace.values if isinstance(trace, SignalTrace) else trace, dtype=float)
    n = len(values)
    candidates = [(s, e, float(values[s : e + 1].mean())) for s, e in _runs(values > threshold)]
    ranked = sorted(candidates, key=lambda c: (-c[2], c[0]))
    chosen = {(s, e) for s, e, _ in ranked[:k_transitions]}

    labels = np.full(n, ID, dtype=object)
    for s, e in chosen:
        labels[s : e + 1] = OOD
    segments = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and labels[j + 1] == labels[i]:
            j += 1
        segments.append(Segment(i, j, float(values[i : j + 1].mean()), labels[i]))
        i = j + 1
    return OodSegmentation(float(threshold), tuple(segments))


def region_error(errors, segmentation: OodSegmentation):
    """Mean foothold error over ID steps and over OOD steps (nan when a label is absent)."""
    err = np.asarray(errors, dtype=float)
    labels = segmentation.labels()
    if len(labels) != len(err):
        raise ValueError(f"error trace has {len(err)} steps, segmentation covers {len(labels)}")
    ood = labels == OOD
    id_mean = float(err[~ood].mean()) if (~ood).any() else float("nan")
    ood_mean = float(err[ood].mean()) if ood.any() else float("nan")
    return id_mean, ood_mean


def save_segmentation(path, trace: SignalTrace, segmentation: OodSegmentation) -> None:
    lines = ["t,signal,label"]
    for t, v, lab in zip(trace.times, trace.values, segmentation.labels()):
        lines.append(f"{t!r},{v!r},{lab}")
    Path(path).write_text("\n".join(lines) + "\n")
