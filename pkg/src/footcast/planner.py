"""MPPI receding-horizon planner over the unicycle model, and the closed-loop
episode runner that ties terrain, predictor, costmaps and gait oracle together."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .costmap import Costmap, CostmapConfig, GridSpec, uncertainty_costmap
from .errors import ConfigurationError, OutOfBoundsError, PlanningFailure
from .feasibility import FeasibilityConfig, feasibility_record
from .gait import (
    GaitConfig,
    RobotState,
    actual_footholds,
    advance_state,
    base_to_world,
    nominal_footholds,
    to_base,
    to_world,
)
from .ood import per_leg_uncertainty
from .predictor import predict
from .rng import stream
from .terrain import HeightField, extract_height_scans, scan_points_world
from .training import main_input, per_sample_error, uncertainty_input

FORMULATIONS = ("obstacle", "roughness", "uncertainty")
# hip reach plus the largest Raibert offset, with slack for slip
_FEET_MARGIN = 0.45
_WEIGHT_FIELD = {"obstacle": "lambda_obs", "roughness": "lambda_r", "uncertainty": "lambda_u"}


@dataclass(frozen=True)
class MppiConfig:
    K_samples: int = 64
    horizon: int = 30
    dt: float = 0.1
    noise_std: tuple[float, float] = (0.2, 0.4)
    beta: float = 1.0
    lambda_g: float = 1.0
    lambda_obs: float = 0.0
    lambda_r: float = 0.0
    lambda_u: float = 0.05
    lambda_ctrl: float = 0.01
    v_min: float = 0.0
    v_max: float = 1.0
    w_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.K_samples < 1 or self.horizon < 1:
            raise ConfigurationError("K_samples and horizon must be >= 1")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be > 0, got {self.beta}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        weights = (self.lambda_g, self.lambda_obs, self.lambda_r, self.lambda_u, self.lambda_ctrl)
        if min(weights) < 0:
            raise ConfigurationError("cost weights must be non-negative")
        active = [name for name in FORMULATIONS if getattr(self, _WEIGHT_FIELD[name]) != 0]
        if len(active) != 1:
            raise ConfigurationError(
                f"exactly one of lambda_obs, lambda_r, lambda_u must be nonzero; active: {active or 'none'}"
            )
        if self.v_min > self.v_max or self.w_max < 0:
            raise ConfigurationError("invalid control bounds")

    @property
    def formulation(self) -> str:
        return next(name for name in FORMULATIONS if getattr(self, _WEIGHT_FIELD[name]) != 0)

    @property
    def middle_weight(self) -> float:
        return getattr(self, _WEIGHT_FIELD[self.formulation])

    def with_formulation(self, name: str, weight: float | None = None) -> "MppiConfig":
        """Same config with the single middle-term weight moved to ``name``."""
        if name not in FORMULATIONS:
            raise ConfigurationError(f"unknown formulation {name!r}")
        w = self.middle_weight if weight is None else weight
        values = {f: 0.0 for f in _WEIGHT_FIELD.values()}
        values[_WEIGHT_FIELD[name]] = w
        return replace(self, **values)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.v_min, -self.w_max])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.v_max, self.w_max])


def rollout(pose, controls, dt: float) -> np.ndarray:
    """Unicycle rollout: controls (..., H, 2) -> states (..., H+1, 3), start included."""
    controls = np.asarray(controls, dtype=float)
    pose = np.asarray(pose, dtype=float)
    H = controls.shape[-2]
    lead = controls.shape[:-2]
    out = np.empty(lead + (H + 1, 3))
    out[..., 0, :] = pose
    x = np.broadcast_to(pose[..., 0], lead).astype(float)
    y = np.broadcast_to(pose[..., 1], lead).astype(float)
    psi = np.broadcast_to(pose[..., 2], lead).astype(float)
    for t in range(H):
        v = controls[..., t, 0]
        w = controls[..., t, 1]
        x = x + v * np.cos(psi) * dt
        y = y + v * np.sin(psi) * dt
        psi = psi + w * dt
        out[..., t + 1, 0] = x
        out[..., t + 1, 1] = y
        out[..., t + 1, 2] = psi
    return out


def _active_costmap(costmaps, cfg: MppiConfig) -> Costmap:
    name = cfg.formulation
    if isinstance(costmaps, Costmap):
        return costmaps
    if name not in costmaps:
        raise ConfigurationError(f"no {name} costmap supplied for the active term")
    return costmaps[name]


def score_terms(traj, controls, goal, costmaps, cfg: MppiConfig):
    """Per-sample (goal, middle, control) cost sums over t = 1..H."""
    traj = np.asarray(traj, dtype=float)
    controls = np.asarray(controls, dtype=float)
    p = traj[..., 1:, :2]
    goal_term = cfg.lambda_g * np.linalg.norm(p - np.asarray(goal, dtype=float)[:2], axis=-1).sum(axis=-1)
    cm = _active_costmap(costmaps, cfg)
    middle = cfg.middle_weight * cm.sample(p[..., 0], p[..., 1]).sum(axis=-1)
    ctrl = cfg.lambda_ctrl * (controls**2).sum(axis=(-1, -2))
    return goal_term, middle, ctrl


def score(traj, controls, goal, costmaps, cfg: MppiConfig):
    g, m, c = score_terms(traj, controls, goal, costmaps, cfg)
    return g + m + c


def softmin_weights(costs, beta: float) -> np.ndarray:
    """exp(-J/beta) normalised, with the minimum cost subtracted first."""
    J = np.asarray(costs, dtype=float)
    finite = np.isfinite(J)
    if not finite.any():
        raise PlanningFailure("every sampled rollout has a non-finite cost")
    shifted = np.where(finite, J - J[finite].min(), np.inf)
    w = np.exp(-shifted / beta)
    return w / w.sum()


@dataclass
class PlanResult:
    control: np.ndarray  # executed (v, omega)
    nominal: np.ndarray  # updated sequence, (H, 2)
    shifted: np.ndarray  # warm start for the next step
    costs: np.ndarray
    weights: np.ndarray
    samples: np.ndarray
    trajectory: np.ndarray


def sample_noise(cfg: MppiConfig, step: int) -> np.ndarray:
    std = np.asarray(cfg.noise_std, dtype=float)
    return np.stack(
        [stream("mppi", cfg.seed, step, k).standard_normal((cfg.horizon, 2)) * std for k in range(cfg.K_samples)]
    )


def mppi_step(state, goal, costmaps, nominal, cfg: MppiConfig, step: int = 0) -> PlanResult:
    pose = state.pose if isinstance(state, RobotState) else np.asarray(state, dtype=float)
    nominal = np.asarray(nominal, dtype=float).reshape(cfg.horizon, 2)
    samples = np.clip(nominal[None] + sample_noise(cfg, step), cfg.lower, cfg.upper)
    traj = rollout(pose, samples, cfg.dt)
    J = score(traj, samples, goal, costmaps, cfg)
    w = softmin_weights(J, cfg.beta)
    updated = np.tensordot(w, samples, axes=(0, 0))
    updated = np.clip(updated, cfg.lower, cfg.upper)
    shifted = np.concatenate([updated[1:], updated[-1:]], axis=0)
    return PlanResult(updated[0].copy(), updated, shifted, J, w, samples, rollout(pose, updated, cfg.dt))


@dataclass(frozen=True)
class EpisodeConfig:
    mppi: MppiConfig = MppiConfig()
    costmap: CostmapConfig = CostmapConfig()
    gait: GaitConfig = GaitConfig()
    feasibility: FeasibilityConfig = FeasibilityConfig()
    predict_M: int = 20
    predict_seed: int = 0
    goal_radius: float = 0.3
    max_steps: int = 150
    cruise_speed: float = 0.4
    # prediction lattice in the base frame; reaches past H * dt * v_max
    lookahead_x: tuple = tuple(round(0.3 * i, 1) for i in range(1, 11))
    lookahead_y: tuple = tuple(round(0.3 * i, 1) for i in range(-5, 6))
    arena_margin: float = 1.0
    grid_resolution: float = 0.1
    seed: int = 0


@dataclass
class World:
    """Terrain plus the static baseline costmaps over the safe interior."""

    field: HeightField
    grid: GridSpec
    costmaps: dict = field(default_factory=dict)

    @classmethod
    def build(cls, hf: HeightField, cfg: EpisodeConfig) -> "World":
        from .costmap import obstacle_costmap, roughness_costmap

        m = cfg.arena_margin
        res = cfg.grid_resolution
        w = int(np.floor((hf.x_max - hf.origin[0] - 2 * m) / res + 1e-9)) + 1
        h = int(np.floor((hf.y_max - hf.origin[1] - 2 * m) / res + 1e-9)) + 1
        grid = GridSpec(w, h, res, (hf.origin[0] + m, hf.origin[1] + m))
        maps = {
            "obstacle": obstacle_costmap(hf, cfg.costmap, grid),
            "roughness": roughness_costmap(hf, cfg.costmap, grid),
        }
        return cls(hf, grid, maps)


@dataclass
class EpisodeLog:
    formulation: str
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    status: str = "running"
    start: tuple = (0.0, 0.0, 0.0)
    goal: tuple = (0.0, 0.0)
    final: tuple = (0.0, 0.0, 0.0)

    COLUMNS = ("t", "x", "y", "psi", "v_cmd", "omega_cmd", "s_bar", "active_cost", "foothold_error")

    @property
    def progress(self) -> float:
        d0 = float(np.hypot(self.goal[0] - self.start[0], self.goal[1] - self.start[1]))
        d1 = float(np.hypot(self.goal[0] - self.final[0], self.goal[1] - self.final[1]))
        if d0 == 0:
            return 1.0
        return float(np.clip((d0 - d1) / d0, 0.0, 1.0))

    def path(self) -> np.ndarray:
        pts = [(r[1], r[2]) for r in self.rows] + [self.final[:2]]
        return np.array(pts, dtype=float)

    def save(self, path) -> None:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join([f"{r[0]!r}"] + [repr(float(v)) for v in r[1:]]))
        Path(path).write_text("\n".join(lines) + "\n")


def lookahead_poses(state: RobotState, cfg: EpisodeConfig) -> np.ndarray:
    gx, gy = np.meshgrid(cfg.lookahead_x, cfg.lookahead_y, indexing="ij")
    pts = base_to_world(np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=-1), state)
    return np.column_stack([pts[:, 0], pts[:, 1], np.full(len(pts), state.psi)])


def scan_in_field(field_: HeightField, poses) -> np.ndarray:
    """Poses (N, 3) whose scan window and feet both lie on the field."""
    pts = scan_points_world(poses)
    ok = field_.contains(pts[..., 0], pts[..., 1]).all(axis=(-2, -1))
    return ok & field_.contains(poses[:, 0], poses[:, 1], margin=_FEET_MARGIN)


def predict_at(ensemble, field_: HeightField, poses, phases, cmd, cfg: EpisodeConfig):
    """Predictions for robot poses (N, 3) under one command; returns (prediction, feet_world (N,4,3))."""
    scans = extract_height_scans(field_, poses)
    x = np.stack([main_input(s, cmd, ph) for s, ph in zip(scans, phases)])
    u = np.stack([uncertainty_input(s, cmd) for s in scans])
    pred = predict(ensemble, x, u, cfg.predict_M, cfg.predict_seed)
    feet = []
    for pose, mean in zip(poses, pred.mean):
        st = RobotState(*pose)
        feet.append(base_to_world(mean.reshape(4, 3), st, field_.elevation(pose[0], pose[1])))
    return pred, np.array(feet)


def run_episode(start: RobotState, goal, world: World, ensemble, cfg: EpisodeConfig) -> EpisodeLog:
    """Closed-loop MPPI run; deterministic given (cfg.seed, cfg.mppi.seed, world, ensemble)."""
    mppi = cfg.mppi
    name = mppi.formulation
    goal = np.asarray(goal, dtype=float)[:2]
    log = EpisodeLog(name, start=(start.x, start.y, start.psi), goal=tuple(goal))
    history: deque = deque(maxlen=cfg.costmap.history)
    nominal = np.tile([cfg.cruise_speed, 0.0], (mppi.horizon, 1))
    nominal = np.clip(nominal, mppi.lower, mppi.upper)
    state = start
    costmaps = dict(world.costmaps)
    for step in range(cfg.max_steps):
        if np.hypot(*(goal - state.xy)) <= cfg.goal_radius:
            log.status = "reached"
            break
        if not scan_in_field(world.field, state.pose[None])[0]:
            log.status = "left_field"
            break
        if name == "uncertainty":
            plan_cmd = (nominal[0, 0], 0.0, nominal[0, 1])
            poses = lookahead_poses(state, cfg)
            poses = poses[scan_in_field(world.field, poses)]
            blobs = list(history)
            if len(poses):
                pred, feet = predict_at(ensemble, world.field, poses, np.full(len(poses), state.gait_phase), plan_cmd, cfg)
                legs = per_leg_uncertainty(pred.variance)
                blobs += [(f[:, :2], v) for f, v in zip(feet, legs)]
            costmaps["uncertainty"] = uncertainty_costmap(blobs, cfg.costmap, world.grid)

        try:
            plan = mppi_step(state, goal, costmaps, nominal, mppi, step=_step_key(cfg, step))
        except PlanningFailure as exc:
            raise PlanningFailure(f"step {step}: {exc}") from exc
        v, w = (float(c) for c in plan.control)
        cmd = (v, 0.0, w)

        try:
            pred, feet_pred = predict_at(ensemble, world.field, state.pose[None], [state.gait_phase], cmd, cfg)
            nominal_world = to_world(nominal_footholds(state, cmd, world.field, cfg.gait), state, world.field)
        except OutOfBoundsError:
            log.status = "left_field"
            break
        actual = actual_footholds(nominal_world, world.field, cfg.gait, (cfg.seed, step))
        actual_base = to_base(actual, state, world.field).positions
        log.records.append(feasibility_record(step, feet_pred[0], actual.positions, state.xy, cfg.feasibility))
        err = float(per_sample_error(pred.mean[0], actual_base.ravel()))
        s_bar = float(pred.scalar_summary[0])
        cost_here = float(_active_costmap(costmaps, mppi).sample(state.x, state.y))
        log.rows.append((step * mppi.dt, state.x, state.y, state.psi, v, w, s_bar, cost_here, err))
        history.append((feet_pred[0][:, :2], per_leg_uncertainty(pred.variance[0])))

        state = advance_state(state, cmd, mppi.dt, cfg.gait.cycle_period)
        nominal = plan.shifted
    else:
        log.status = "reached" if np.hypot(*(goal - state.xy)) <= cfg.goal_radius else "max_steps"
    log.final = (state.x, state.y, state.psi)
    return log


def _step_key(cfg: EpisodeConfig, step: int) -> int:
    return cfg.seed * 100003 + step
