"""Synthetic trot-gait oracle standing in for a trained locomotion policy.

Footholds are ordered LF, RF, LH, RH.  Base-frame z is measured from the
ground height under the base, matching the height-scan convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .rng import stream
from .terrain import HeightField

LEGS = ("LF", "RF", "LH", "RH")

GO1_HIPS = ((0.19, 0.12), (0.19, -0.12), (-0.19, 0.12), (-0.19, -0.12))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


@dataclass(frozen=True)
class GaitConfig:
    cycle_period: float = 0.6
    duty_factor: float = 0.5
    hip_offsets: tuple = GO1_HIPS
    step_noise_flat: float = 0.01
    step_noise_slope_gain: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.cycle_period > 0:
            raise ConfigurationError(f"cycle_period must be > 0, got {self.cycle_period}")
        if not 0 < self.duty_factor < 1:
            raise ConfigurationError(f"duty_factor must lie in (0, 1), got {self.duty_factor}")
        if self.step_noise_flat < 0 or self.step_noise_slope_gain < 0:
            raise ConfigurationError("noise parameters must be >= 0")
        hips = np.asarray(self.hip_offsets, dtype=float)
        if hips.shape != (4, 2):
            raise ConfigurationError(f"hip_offsets must be 4 (x, y) pairs, got shape {hips.shape}")
        object.__setattr__(self, "hip_offsets", tuple(map(tuple, hips.tolist())))

    @property
    def stance_time(self) -> float:
        return self.duty_factor * self.cycle_period


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    gait_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi", float(wrap_angle(self.psi)))
        object.__setattr__(self, "gait_phase", float(np.mod(self.gait_phase, 1.0)))

    @property
    def pose(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi])

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class FootholdSet:
    positions: np.ndarray
    frame: str = "base"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(4, 3)
        if self.frame not in ("base", "world"):
            raise ValueError(f"frame must be 'base' or 'world', got {self.frame!r}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("foothold positions must be finite")
        object.__setattr__(self, "positions", pos)

    def flat(self) -> np.ndarray:
        return self.positions.ravel().copy()


def base_to_world(positions, state: RobotState, ground_z: float = 0.0) -> np.ndarray:
    """Map (..., 3) base-frame points to world frame."""
    p = np.asarray(positions, dtype=float)
    c, s = np.cos(state.psi), np.sin(state.psi)
    out = np.empty_like(p)
    out[..., 0] = state.x + c * p[..., 0] - s * p[..., 1]
    out[..., 1] = state.y + s * p[..., 0] + c * p[..., 1]
    out[..., 2] = p[..., 2] + ground_z
    return out


def world_to_base(positions, state: RobotState, ground_z: float = 0.0) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    c, s = np.cos(state.psi), np.sin(state.psi)
    dx = p[..., 0] - state.x
    dy = p[..., 1] - state.y
    out = np.empty_like(p)
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    out[..., 2] = p[..., 2] - ground_z
    return out


def nominal_footholds(state: RobotState, cmd, field: HeightField, cfg: GaitConfig) -> FootholdSet:
    """Next touchdown of each leg: hip plus half the stance travel under ``cmd``.

    Returned in the base frame of ``state``; z is the terrain height at the
    touchdown point minus the height under the base.
    """
    vx, vy, wz = (float(c) for c in cmd)
    hips = np.asarray(cfg.hip_offsets)
    half = 0.5 * cfg.stance_time
    xy = hips + half * np.column_stack([vx - wz * hips[:, 1], vy + wz * hips[:, 0]])
    world = base_to_world(np.column_stack([xy, np.zeros(4)]), state)
    z = field.elevation(world[:, 0], world[:, 1]) - field.elevation(state.x, state.y)
    return FootholdSet(np.column_stack([xy, z]), "base")


def to_world(feet: FootholdSet, state: RobotState, field: HeightField) -> FootholdSet:
    if feet.frame == "world":
        return feet
    ground = field.elevation(state.x, state.y, clip=True)
    return FootholdSet(base_to_world(feet.positions, state, ground), "world")


def to_base(feet: FootholdSet, state: RobotState, field: HeightField) -> FootholdSet:
    if feet.frame == "base":
        return feet
    ground = field.elevation(state.x, state.y, clip=True)
    return FootholdSet(world_to_base(feet.positions, state, ground), "base")


def slip_std(xy, field: HeightField, cfg: GaitConfig):
    xy = np.asarray(xy, dtype=float)
    return cfg.step_noise_flat + cfg.step_noise_slope_gain * field.slope(xy[..., 0], xy[..., 1])


def actual_footholds(nominal: FootholdSet, field: HeightField, cfg: GaitConfig, rng_stream) -> FootholdSet:
    """Touchdowns realized by the gait: nominal xy plus slope-dependent Gaussian slip.

    ``nominal`` must be in the world frame.  ``rng_stream`` is a key tuple
    (for example ``(seed, step)``); the same key always gives the same slip.
    """
    if nominal.frame != "world":
        raise ValueError("actual_footholds expects world-frame footholds")
    xy = nominal.positions[:, :2]
    std = slip_std(xy, field, cfg)
    keys = rng_stream if isinstance(rng_stream, tuple) else (rng_stream,)
    noise = stream("slip", cfg.seed, *keys).standard_normal((4, 2))
    xy_new = xy + std[:, None] * noise
    z = field.elevation(xy_new[:, 0], xy_new[:, 1], clip=True)
    return FootholdSet(np.column_stack([xy_new, z]), "world")


def advance_state(state: RobotState, cmd, dt: float, cycle_period: float = 0.6) -> RobotState:
    """One Euler step of the unicycle model; ``cmd`` is (v_x, v_y, omega) or (v, omega)."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    cmd = tuple(float(c) for c in cmd)
    v, w = (cmd[0], cmd[2]) if len(cmd) == 3 else cmd
    return RobotState(
        state.x + v * np.cos(state.psi) * dt,
        state.y + v * np.sin(state.psi) * dt,
        state.psi + w * dt,
        state.gait_phase + dt / cycle_period,
    )


@dataclass
class Command:
    """Constant command, or uniform draws held for ``hold_steps`` steps."""

    vx: tuple[float, float] = (0.4, 0.4)
    vy: tuple[float, float] = (0.0, 0.0)
    wz: tuple[float, float] = (0.0, 0.0)
    hold_steps: int = 10
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def constant(cls, vx=0.4, vy=0.0, wz=0.0) -> "Command":
        return cls((vx, vx), (vy, vy), (wz, wz))

    def __call__(self, step: int) -> tuple[float, float, float]:
        block = step // max(self.hold_steps, 1)
        if block not in self._cache:
            rng = stream("command", self.seed, block)
            u = rng.uniform(size=3)
            self._cache[block] = tuple(
                float(lo + (hi - lo) * t) for (lo, hi), t in zip((self.vx, self.vy, self.wz), u)
            )
        return self._cache[block]
