"""Quasi-static stability margins and the predicted-vs-actual feasibility error.

The margin is the signed distance from the CoM ground projection to the
boundary of the support polygon (convex hull of the feet), positive inside.
This is the frictionless, torque-unlimited limit of the feasible region, so
it is computed exactly instead of by iterative projection.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FeasibilityConfig:
    eps: float = 0.01
    margin_method: str = "support_polygon"

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if self.margin_method != "support_polygon":
            raise ConfigurationError(f"unsupported margin_method {self.margin_method!r}")


@dataclass(frozen=True)
class FeasibilityRecord:
    t: int
    m_pred: float
    m_actual: float
    c_pred: float
    c_actual: float

    @property
    def e_t(self) -> float:
        return abs(self.c_pred - self.c_actual)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull in counter-clockwise order; collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).reshape(-1, 2).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # all collinear: keep the two extremes
        return np.array([pts[0], pts[-1]], dtype=float)
    return np.array(hull, dtype=float)


def _segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * ab))))


def stability_margin(feet, com_xy) -> float:
    """Signed distance (m) from ``com_xy`` to the support polygon boundary.

    ``feet`` is (4, 2) or (4, 3) in the world frame; z is ignored.  Degenerate
    supports (a segment or a single point) have no interior, so the margin is
    minus the distance to them (zero when the CoM lies on them).
    """
    p = np.asarray(com_xy, dtype=float)[:2]
    hull = convex_hull(np.asarray(feet, dtype=float)[:, :2])
    if len(hull) == 1:
        return -float(np.hypot(*(p - hull[0])))
    if len(hull) == 2:
        return -_segment_distance(p, hull[0], hull[1])
    n = len(hull)
    dist = min(_segment_distance(p, hull[i], hull[(i + 1) % n]) for i in range(n))
    inside = all(_cross(hull[i], hull[(i + 1) % n], p) >= 0 for i in range(n))
    return dist if inside else -dist


def margin_to_cost(m: float, cfg: FeasibilityConfig = FeasibilityConfig()) -> float:
    """1/(m + eps) for m > 0, |m| + 1 otherwise (discontinuous at 0 by construction)."""
    m = float(m)
    return 1.0 / (m + cfg.eps) if m > 0 else abs(m) + 1.0


def feasibility_record(t, pred_feet_world, actual_feet_world, com_xy, cfg=FeasibilityConfig()) -> FeasibilityRecord:
    m_pred = stability_margin(pred_feet_world, com_xy)
    m_act = stability_margin(actual_feet_world, com_xy)
    return FeasibilityRecord(t, m_pred, m_act, margin_to_cost(m_pred, cfg), margin_to_cost(m_act, cfg))


def feasibility_error(records) -> tuple[float, float]:
    """Mean and population std of e_t over a trajectory."""
    e = np.array([r.e_t if isinstance(r, FeasibilityRecord) else float(r) for r in records])
    if e.size == 0:
        raise ValueError("empty trajectory")
    return float(e.mean()), float(e.std())


def save_records(path, records) -> None:
    lines = ["t,m_pred,m_actual,c_pred,c_actual,e_t"]
    for r in records:
        lines.append(f"{r.t},{r.m_pred!r},{r.m_actual!r},{r.c_pred!r},{r.c_actual!r},{r.e_t!r}")
    Path(path).write_text("\n".join(lines) + "\n")
