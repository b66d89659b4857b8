"""Height fields, procedural terrains, and the frontal height scan.

Grid convention: ``elevations[r, c]`` is the terrain height at world point
``(origin_x + c * resolution, origin_y + r * resolution)``.  Queries between
nodes are bilinear.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, EmptyScanError, OutOfBoundsError
from .rng import stream

SCAN_ROWS = 6
SCAN_COLS = 17
SCAN_SIZE = SCAN_ROWS * SCAN_COLS
SCAN_SPACING = 0.1
# rows run along base +x starting one spacing ahead of the base origin
SCAN_X = SCAN_SPACING * np.arange(1, SCAN_ROWS + 1)
SCAN_Y = SCAN_SPACING * (np.arange(SCAN_COLS) - (SCAN_COLS - 1) / 2)

POOL_ROW_GROUPS = ((0, 2), (2, 4), (4, 6))
POOL_COL_GROUPS = ((0, 5), (5, 9), (9, 13), (13, 17))
POOLED_SIZE = len(POOL_ROW_GROUPS) * len(POOL_COL_GROUPS)

TERRAIN_KINDS = ("flat", "wavy", "stepped", "spiked", "ramp", "mixed")
_TILE_KINDS = ("flat", "wavy", "stepped", "spiked", "ramp")

_BOUNDS_TOL = 1e-9


@dataclass(frozen=True)
class HeightField:
    elevations: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        elev = np.asarray(self.elevations, dtype=float)
        if elev.ndim != 2 or elev.shape[0] < 1 or elev.shape[1] < 1:
            raise ConfigurationError(f"elevations must be a non-empty 2D grid, got shape {elev.shape}")
        if not self.resolution > 0:
            raise ConfigurationError(f"resolution must be positive, got {self.resolution}")
        if not np.all(np.isfinite(elev)):
            raise ConfigurationError("elevations must be finite")
        elev.setflags(write=False)
        object.__setattr__(self, "elevations", elev)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height_cells(self) -> int:
        return self.elevations.shape[0]

    @property
    def width_cells(self) -> int:
        return self.elevations.shape[1]

    @property
    def x_max(self) -> float:
        return self.origin[0] + (self.width_cells - 1) * self.resolution

    @property
    def y_max(self) -> float:
        return self.origin[1] + (self.height_cells - 1) * self.resolution

    def contains(self, x, y, margin: float = 0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lo_x, lo_y = self.origin
        return (
            (x >= lo_x + margin - _BOUNDS_TOL)
            & (x <= self.x_max - margin + _BOUNDS_TOL)
            & (y >= lo_y + margin - _BOUNDS_TOL)
            & (y <= self.y_max - margin + _BOUNDS_TOL)
        )

    def clip(self, x, y):
        return (
            np.clip(x, self.origin[0], self.x_max),
            np.clip(y, self.origin[1], self.y_max),
        )

    def elevation(self, x, y, clip: bool = False):
        """Bilinear elevation at world points.

        Points outside the grid raise :class:`OutOfBoundsError` unless
        ``clip`` is set, in which case they are clamped to the border.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if clip:
            x, y = self.clip(x, y)
        else:
            inside = self.contains(x, y)
            if not np.all(inside):
                bad = np.argwhere(~np.atleast_1d(inside))[0][0]
                bx = np.atleast_1d(x)[bad] if x.ndim else float(x)
                by = np.atleast_1d(y)[bad] if y.ndim else float(y)
                raise OutOfBoundsError(
                    f"point ({float(bx):.4f}, {float(by):.4f}) outside field "
                    f"[{self.origin[0]:.4f}, {self.x_max:.4f}] x [{self.origin[1]:.4f}, {self.y_max:.4f}]"
                )
        rows, cols = self.elevations.shape
        fx = (x - self.origin[0]) / self.resolution
        fy = (y - self.origin[1]) / self.resolution
        c0 = np.clip(np.floor(fx).astype(int), 0, max(cols - 2, 0))
        r0 = np.clip(np.floor(fy).astype(int), 0, max(rows - 2, 0))
        c1 = np.minimum(c0 + 1, cols - 1)
        r1 = np.minimum(r0 + 1, rows - 1)
        tx = np.clip(fx - c0, 0.0, 1.0)
        ty = np.clip(fy - r0, 0.0, 1.0)
        e = self.elevations
        top = e[r0, c0] * (1 - tx) + e[r0, c1] * tx
        bottom = e[r1, c0] * (1 - tx) + e[r1, c1] * tx
        out = top * (1 - ty) + bottom * ty
        return out if out.ndim else float(out)

    def slope(self, x, y, spacing: float = 0.05):
        """Gradient magnitude by central differences at ``spacing`` (clamped to the border)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = (self.elevation(x + spacing, y, clip=True) - self.elevation(x - spacing, y, clip=True)) / (2 * spacing)
        gy = (self.elevation(x, y + spacing, clip=True) - self.elevation(x, y - spacing, clip=True)) / (2 * spacing)
        return np.hypot(gx, gy)

    def node_coordinates(self):
        xs = self.origin[0] + self.resolution * np.arange(self.width_cells)
        ys = self.origin[1] + self.resolution * np.arange(self.height_cells)
        return xs, ys

    def save(self, path) -> None:
        write_grid(path, self.elevations, self.resolution, self.origin)

    @classmethod
    def load(cls, path) -> "HeightField":
        values, resolution, origin = read_grid(path)
        return cls(values, resolution, origin)


def write_grid(path, values: np.ndarray, resolution: float, origin) -> None:
    """Plain-text grid: header ``rows cols resolution origin_x origin_y`` then one row per line."""
    values = np.asarray(values, dtype=float)
    lines = [f"{values.shape[0]} {values.shape[1]} {resolution!r} {float(origin[0])!r} {float(origin[1])!r}"]
    lines.extend(" ".join(repr(v) for v in row) for row in values.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path):
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 5:
        raise ConfigurationError(f"{path}: malformed grid header {lines[0]!r}")
    rows, cols = int(head[0]), int(head[1])
    resolution, ox, oy = float(head[2]), float(head[3]), float(head[4])
    data = [float(v) for line in lines[1 : rows + 1] for v in line.split()]
    if len(data) != rows * cols:
        raise ConfigurationError(f"{path}: expected {rows * cols} values, found {len(data)}")
    return np.array(data).reshape(rows, cols), resolution, (ox, oy)


@dataclass(frozen=True)
class TerrainSpec:
    kind: str = "flat"
    seed: int = 0
    amplitude: float = 0.1
    feature_scale: float = 0.5
    extent: tuple[float, float] = (10.0, 10.0)
    resolution: float = 0.05
    origin: tuple[float, float] = (0.0, 0.0)
    # mixed only: tile side and optional row-major kind layout
    tile_size: float = 2.0
    tile_kinds: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ConfigurationError(f"unknown terrain kind {self.kind!r}; expected one of {TERRAIN_KINDS}")
        if self.amplitude < 0:
            raise ConfigurationError(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.feature_scale > 0:
            raise ConfigurationError(f"feature_scale must be > 0, got {self.feature_scale}")
        if not self.resolution > 0:
            raise ConfigurationError(f"resolution must be > 0, got {self.resolution}")
        if len(self.extent) != 2 or min(self.extent) < 0:
            raise ConfigurationError(f"extent must be two non-negative lengths, got {self.extent}")
        if not self.tile_size > 0:
            raise ConfigurationError(f"tile_size must be > 0, got {self.tile_size}")
        if self.tile_kinds is not None:
            unknown = [k for k in self.tile_kinds if k not in _TILE_KINDS]
            if unknown:
                raise ConfigurationError(f"unknown tile kinds {unknown}")


def generate_terrain(spec: TerrainSpec) -> HeightField:
    """Build the height field described by ``spec``; pure in ``spec``."""
    cols = int(round(spec.extent[0] / spec.resolution)) + 1
    rows = int(round(spec.extent[1] / spec.resolution)) + 1
    xs = spec.resolution * np.arange(cols)
    ys = spec.resolution * np.arange(rows)
    X, Y = np.meshgrid(xs, ys)
    if spec.kind == "mixed":
        elev = _mixed(spec, X, Y)
    else:
        elev = _kind_field(spec.kind, X, Y, spec.seed, spec.amplitude, spec.feature_scale, spec.extent[0])
    return HeightField(elev, spec.resolution, spec.origin)


def _kind_field(kind, X, Y, seed, amplitude, scale, ramp_length):
    if kind == "flat" or amplitude == 0:
        return np.zeros_like(X)
    rng = stream("terrain", kind, seed)
    if kind == "wavy":
        return _wavy(X, Y, rng, amplitude, scale)
    if kind == "stepped":
        return _stepped(X, Y, rng, amplitude, scale)
    if kind == "spiked":
        return _spiked(X, Y, rng, amplitude, scale)
    if kind == "ramp":
        length = ramp_length if ramp_length > 0 else 1.0
        return amplitude * np.clip(X / length, 0.0, 1.0)
    raise ConfigurationError(f"unknown terrain kind {kind!r}")


def _wavy(X, Y, rng, amplitude, scale, n_waves=4):
    weights = rng.uniform(0.5, 1.0, n_waves)
    weights /= weights.sum()
    heading = rng.uniform(0, np.pi, n_waves)
    wavelength = scale * rng.uniform(0.75, 1.5, n_waves)
    phase = rng.uniform(0, 2 * np.pi, n_waves)
    out = np.zeros_like(X)
    for w, th, lam, ph in zip(weights, heading, wavelength, phase):
        k = 2 * np.pi / lam
        out += w * np.sin(k * (np.cos(th) * X + np.sin(th) * Y) + ph)
    return amplitude * out


def _stepped(X, Y, rng, amplitude, scale):
    ix = np.floor(X / scale).astype(int)
    iy = np.floor(Y / scale).astype(int)
    heights = rng.uniform(0.0, amplitude, (iy.max() + 1, ix.max() + 1))
    return heights[iy, ix]


def _spiked(X, Y, rng, amplitude, scale):
    res = X[0, 1] - X[0, 0] if X.shape[1] > 1 else 1.0
    ex, ey = X.max(), Y.max()
    n = max(1, int(round(ex * ey / (2 * scale) ** 2)))
    cx = rng.uniform(0, ex, n)
    cy = rng.uniform(0, ey, n)
    h = amplitude * rng.uniform(0.5, 1.0, n)
    sigma = scale / 5
    reach = int(np.ceil(4 * sigma / res))
    out = np.zeros_like(X)
    for x0, y0, hb in zip(cx, cy, h):
        c = int(round(x0 / res))
        r = int(round(y0 / res))
        rs = slice(max(r - reach, 0), r + reach + 1)
        cs = slice(max(c - reach, 0), c + reach + 1)
        d2 = (X[rs, cs] - x0) ** 2 + (Y[rs, cs] - y0) ** 2
        np.maximum(out[rs, cs], hb * np.exp(-d2 / (2 * sigma**2)), out=out[rs, cs])
    return out


def _mixed(spec: TerrainSpec, X, Y):
    tile = spec.tile_size
    tx = np.floor(X / tile + 1e-9).astype(int)
    ty = np.floor(Y / tile + 1e-9).astype(int)
    n_tx, n_ty = tx.max() + 1, ty.max() + 1
    if spec.tile_kinds is not None:
        if len(spec.tile_kinds) != n_tx * n_ty:
            raise ConfigurationError(
                f"tile_kinds lists {len(spec.tile_kinds)} tiles, terrain has {n_ty}x{n_tx}"
            )
        layout = np.array(spec.tile_kinds, dtype=object).reshape(n_ty, n_tx)
    else:
        rng = stream("terrain", "mixed", spec.seed)
        layout = np.array(_TILE_KINDS, dtype=object)[rng.integers(0, len(_TILE_KINDS), (n_ty, n_tx))]
    out = np.zeros_like(X)
    local_x = X - tx * tile
    kind_grid = layout[ty, tx]
    for kind in _TILE_KINDS:
        mask = kind_grid == kind
        if not mask.any():
            continue
        if kind == "ramp":
            out[mask] = spec.amplitude * np.clip(local_x[mask] / tile, 0.0, 1.0)
        else:
            sub = _kind_field(kind, X, Y, spec.seed, spec.amplitude, spec.feature_scale, spec.extent[0])
            out[mask] = sub[mask]
    return out


def mixed_layout(spec: TerrainSpec) -> list[list[str]]:
    """Tile kinds of a mixed terrain, rows along +y."""
    n_tx = int(np.floor(spec.extent[0] / spec.tile_size + 1e-9)) + 1
    n_ty = int(np.floor(spec.extent[1] / spec.tile_size + 1e-9)) + 1
    if spec.tile_kinds is not None:
        flat = list(spec.tile_kinds)
    else:
        rng = stream("terrain", "mixed", spec.seed)
        flat = [_TILE_KINDS[i] for i in rng.integers(0, len(_TILE_KINDS), (n_ty, n_tx)).ravel()]
    return [flat[r * n_tx : (r + 1) * n_tx] for r in range(n_ty)]


def scan_points_base() -> np.ndarray:
    """The 6x17 sample points in the base frame, shape (6, 17, 2)."""
    gx, gy = np.meshgrid(SCAN_X, SCAN_Y, indexing="ij")
    return np.stack([gx, gy], axis=-1)


def scan_points_world(poses) -> np.ndarray:
    """Sample points for one pose (3,) or many poses (N, 3); returns (..., 6, 17, 2)."""
    poses = np.asarray(poses, dtype=float)
    pts = scan_points_base()
    c, s = np.cos(poses[..., 2]), np.sin(poses[..., 2])
    c = c[..., None, None]
    s = s[..., None, None]
    wx = poses[..., 0, None, None] + c * pts[..., 0] - s * pts[..., 1]
    wy = poses[..., 1, None, None] + s * pts[..., 0] + c * pts[..., 1]
    return np.stack([wx, wy], axis=-1)


def extract_height_scan(field: HeightField, base_pose) -> np.ndarray:
    """Frontal 6x17 scan, values relative to the ground height under the base."""
    return extract_height_scans(field, np.asarray(base_pose, dtype=float)[None])[0]


def extract_height_scans(field: HeightField, poses) -> np.ndarray:
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    pts = scan_points_world(poses)
    inside = field.contains(pts[..., 0], pts[..., 1]) & field.contains(poses[:, None, None, 0], poses[:, None, None, 1])
    if not np.all(inside):
        n = int(np.argwhere(~inside.all(axis=(1, 2)))[0][0])
        corners = [(0, 0), (0, SCAN_COLS - 1), (SCAN_ROWS - 1, 0), (SCAN_ROWS - 1, SCAN_COLS - 1)]
        for r, c in corners:
            if not inside[n, r, c]:
                wx, wy = pts[n, r, c]
                raise OutOfBoundsError(
                    f"scan window corner (row {r}, col {c}) at world ({wx:.3f}, {wy:.3f}) outside field"
                )
        raise OutOfBoundsError(f"base ({poses[n, 0]:.3f}, {poses[n, 1]:.3f}) outside field")
    z = field.elevation(pts[..., 0], pts[..., 1])
    z0 = field.elevation(poses[:, 0], poses[:, 1])
    return z - np.asarray(z0)[:, None, None]


def pool_grid(scan) -> np.ndarray:
    """Non-overlapping block means of a (..., 6, 17) scan -> (..., 12), row-major block order."""
    scan = np.asarray(scan, dtype=float)
    if scan.shape[-1] == SCAN_SIZE:
        scan = scan.reshape(*scan.shape[:-1], SCAN_ROWS, SCAN_COLS)
    out = []
    for r0, r1 in POOL_ROW_GROUPS:
        for c0, c1 in POOL_COL_GROUPS:
            block = scan[..., r0:r1, c0:c1]
            # mean about the block's first value, so constant blocks pool exactly
            ref = block[..., :1, :1]
            out.append((ref + (block - ref).mean(axis=(-2, -1), keepdims=True))[..., 0, 0])
    return np.stack(out, axis=-1)


def heightscan_variance(scan) -> np.ndarray:
    """Population variance of the 102 scan values."""
    scan = np.asarray(scan, dtype=float)
    if scan.shape[-2:] == (SCAN_ROWS, SCAN_COLS):
        scan = scan.reshape(*scan.shape[:-2], SCAN_SIZE)
    # shifted by the first value: exact zero on constant scans
    return (scan - scan[..., :1]).var(axis=-1)


def pointcloud_to_heightscan(points, window_x: float = 0.6, window_y: float = 1.6) -> np.ndarray:
    """Bin base-frame points into the 6x17 grid over x in [0, Sx], y in [-Sy/2, Sy/2].

    Each cell takes the mean z of its points; empty cells copy the nearest
    non-empty cell (grid distance, first in row-major order on ties).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    keep = (x >= 0) & (x <= window_x) & (y >= -window_y / 2) & (y <= window_y / 2)
    if not keep.any():
        raise EmptyScanError("no points inside the scan window")
    x, y, z = x[keep], y[keep], z[keep]
    r = np.minimum((x / (window_x / SCAN_ROWS)).astype(int), SCAN_ROWS - 1)
    c = np.minimum(((y + window_y / 2) / (window_y / SCAN_COLS)).astype(int), SCAN_COLS - 1)
    flat_idx = r * SCAN_COLS + c
    sums = np.bincount(flat_idx, weights=z, minlength=SCAN_SIZE)
    counts = np.bincount(flat_idx, minlength=SCAN_SIZE)
    filled = counts > 0
    values = np.zeros(SCAN_SIZE)
    values[filled] = sums[filled] / counts[filled]
    if not filled.all():
        rr, cc = np.divmod(np.arange(SCAN_SIZE), SCAN_COLS)
        src = np.flatnonzero(filled)
        d2 = (rr[:, None] - rr[src][None, :]) ** 2 + (cc[:, None] - cc[src][None, :]) ** 2
        # argmin returns the first minimum, and src is in row-major order
        nearest = src[np.argmin(d2, axis=1)]
        values[~filled] = values[nearest[~filled]]
    return values.reshape(SCAN_ROWS, SCAN_COLS)
