"""The three planner cost fields: learned-uncertainty blobs, height-threshold
obstacles, and windowed elevation variance (roughness).

All maps share the HeightField grid convention (values at nodes) and hold
costs in [0, 100], 100 being lethal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .terrain import HeightField, read_grid, write_grid

LETHAL = 100.0


@dataclass(frozen=True)
class CostmapConfig:
    alpha: float = 2000.0
    blob_radius: float = 0.2
    obstacle_height_threshold: float = 0.15
    obstacle_window: float = 0.5
    roughness_scale: float = 2.0e4
    lethal: float = LETHAL
    history: int = 10
    cutoff_sigmas: float = 6.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if not self.blob_radius > 0:
            raise ConfigurationError(f"blob_radius must be > 0, got {self.blob_radius}")
        if self.roughness_scale < 0 or self.obstacle_height_threshold < 0:
            raise ConfigurationError("roughness_scale and obstacle_height_threshold must be >= 0")

    @property
    def sigma_b(self) -> float:
        return self.blob_radius / 2


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    resolution: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def covering(cls, field: HeightField, resolution: float = 0.1) -> "GridSpec":
        w = int(np.floor((field.x_max - field.origin[0]) / resolution + 1e-9)) + 1
        h = int(np.floor((field.y_max - field.origin[1]) / resolution + 1e-9)) + 1
        return cls(w, h, resolution, field.origin)

    def nodes(self):
        xs = self.origin[0] + self.resolution * np.arange(self.width)
        ys = self.origin[1] + self.resolution * np.arange(self.height)
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class Costmap:
    costs: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if not np.all(np.isfinite(c)) or c.min(initial=0) < 0 or c.max(initial=0) > LETHAL:
            raise ValueError("costs must be finite and within [0, 100]")
        object.__setattr__(self, "costs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Costmap":
        return cls(np.zeros((grid.height, grid.width)), grid.resolution, grid.origin)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.costs.shape[1], self.costs.shape[0], self.resolution, self.origin)

    def sample(self, x, y):
        """Bilinear cost at world points; anything off the map is lethal."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rows, cols = self.costs.shape
        fx = (x - self.origin[0]) / self.resolution
        fy = (y - self.origin[1]) / self.resolution
        off = (fx < -1e-9) | (fx > cols - 1 + 1e-9) | (fy < -1e-9) | (fy > rows - 1 + 1e-9)
        c0 = np.clip(np.floor(fx).astype(int), 0, max(cols - 2, 0))
        r0 = np.clip(np.floor(fy).astype(int), 0, max(rows - 2, 0))
        c1 = np.minimum(c0 + 1, cols - 1)
        r1 = np.minimum(r0 + 1, rows - 1)
        tx = np.clip(fx - c0, 0.0, 1.0)
        ty = np.clip(fy - r0, 0.0, 1.0)
        g = self.costs
        val = (g[r0, c0] * (1 - tx) + g[r0, c1] * tx) * (1 - ty) + (g[r1, c0] * (1 - tx) + g[r1, c1] * tx) * ty
        return np.where(off, LETHAL, val)

    def save(self, path) -> None:
        write_grid(path, self.costs, self.resolution, self.origin)

    @classmethod
    def load(cls, path) -> "Costmap":
        values, res, origin = read_grid(path)
        return cls(values, res, origin)


def leg_costs(per_leg_variance, cfg: CostmapConfig) -> np.ndarray:
    return np.minimum(cfg.lethal, cfg.alpha * np.asarray(per_leg_variance, dtype=float))


def uncertainty_costmap(predictions, cfg: CostmapConfig, grid: GridSpec) -> Costmap:
    """Max over Gaussian blobs centred on predicted feet.

    ``predictions`` is an iterable of (feet_xy (4, 2) world frame, per-leg
    variance (4,)).  Blobs are truncated at ``cutoff_sigmas`` standard
    deviations.
    """
    centres, peaks = [], []
    for feet, var in predictions:
        centres.append(np.asarray(feet, dtype=float).reshape(-1, 2)[:, :2])
        peaks.append(leg_costs(var, cfg).reshape(-1))
    costs = np.zeros((grid.height, grid.width))
    if not centres:
        return Costmap(costs, grid.resolution, grid.origin)
    centres = np.concatenate(centres)
    peaks = np.concatenate(peaks)
    keep = peaks > 0
    centres, peaks = centres[keep], peaks[keep]
    if len(peaks) == 0:
        return Costmap(costs, grid.resolution, grid.origin)

    sigma = cfg.sigma_b
    reach = int(np.ceil(cfg.cutoff_sigmas * sigma / grid.resolution))
    offs = np.arange(-reach, reach + 1)
    ci = np.round((centres[:, 0] - grid.origin[0]) / grid.resolution).astype(int)
    ri = np.round((centres[:, 1] - grid.origin[1]) / grid.resolution).astype(int)
    cols = ci[:, None, None] + offs[None, None, :]
    rows = ri[:, None, None] + offs[None, :, None]
    cols, rows = np.broadcast_arrays(cols, rows)
    x = grid.origin[0] + cols * grid.resolution
    y = grid.origin[1] + rows * grid.resolution
    d2 = (x - centres[:, 0, None, None]) ** 2 + (y - centres[:, 1, None, None]) ** 2
    vals = peaks[:, None, None] * np.exp(-d2 / (2 * sigma**2))
    ok = (cols >= 0) & (cols < grid.width) & (rows >= 0) & (rows < grid.height)
    np.maximum.at(costs, (rows[ok], cols[ok]), vals[ok])
    return Costmap(np.minimum(costs, cfg.lethal), grid.resolution, grid.origin)


def _node_heights(field: HeightField, grid: GridSpec) -> np.ndarray:
    X, Y = grid.nodes()
    return field.elevation(X, Y, clip=True)


def _odd_window(side: float, resolution: float) -> int:
    return 2 * int(round(side / 2 / resolution)) + 1


def obstacle_costmap(field: HeightField, cfg: CostmapConfig, grid: GridSpec) -> Costmap:
    """Lethal where a node rises more than the threshold above its neighbourhood median."""
    h = _node_heights(field, grid)
    n = _odd_window(cfg.obstacle_window, grid.resolution)
    rise = h - ndimage.median_filter(h, size=n, mode="nearest")
    return Costmap(np.where(rise > cfg.obstacle_height_threshold, cfg.lethal, 0.0), grid.resolution, grid.origin)


def windowed_variance(values: np.ndarray, n: int) -> np.ndarray:
    mean = ndimage.uniform_filter(values, size=n, mode="nearest")
    sq = ndimage.uniform_filter(values * values, size=n, mode="nearest")
    return np.maximum(sq - mean * mean, 0.0)


def roughness_costmap(field: HeightField, cfg: CostmapConfig, grid: GridSpec) -> Costmap:
    """Scaled elevation variance over a square window of side 2 * blob_radius."""
    h = _node_heights(field, grid)
    n = _odd_window(2 * cfg.blob_radius, grid.resolution)
    var = windowed_variance(h - h.mean(), n)
    return Costmap(np.minimum(cfg.lethal, cfg.roughness_scale * var), grid.resolution, grid.origin)
