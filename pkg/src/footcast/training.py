"""Dataset collection, the pose/hinge/calibration loss, its exact gradient, and
the optimisation loop.

The loss couples all ensemble members: the predictive mean and variance are
statistics over every member's stochastic passes, so members are trained
jointly and gradients flow into each member through those statistics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, OutOfBoundsError, TrainingDivergedError
from .gait import (
    Command,
    GaitConfig,
    RobotState,
    actual_footholds,
    advance_state,
    nominal_footholds,
    to_base,
    to_world,
)
from .predictor import (
    OUT_SIZE,
    U_SIZE,
    VAR_CEIL,
    VAR_FLOOR,
    X_SIZE,
    _forward,
    backward_member,
    build_ensemble,
    pass_moments,
    stacked_masks,
)
from .rng import stream
from .terrain import HeightField, extract_height_scan, pool_grid

log = logging.getLogger(__name__)

STATE_SIZE = 4  # x, y, psi, gait phase


def main_input(scan, cmd, phase) -> np.ndarray:
    """x_t = [scan (102), command (3), gait phase (1)]."""
    return np.concatenate([np.asarray(scan, dtype=float).ravel(), np.asarray(cmd, dtype=float), [float(phase)]])


def uncertainty_input(scan, cmd) -> np.ndarray:
    """u_t = [command (3), pooled scan (12)]."""
    return np.concatenate([np.asarray(cmd, dtype=float), pool_grid(np.asarray(scan, dtype=float).reshape(6, 17))])


@dataclass
class Dataset:
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    states: np.ndarray | None = None  # (n, 4): x, y, psi, phase
    truncated: int = 0

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.u[idx], self.y[idx], None if self.states is None else self.states[idx])

    @classmethod
    def concatenate(cls, parts) -> "Dataset":
        parts = list(parts)
        states = None
        if parts and all(p.states is not None for p in parts):
            states = np.concatenate([p.states for p in parts])
        return cls(*(np.concatenate([getattr(p, a) for p in parts]) for a in "xuy"), states)

    def save(self, path) -> None:
        n = len(self)
        header = f"n_samples={n},x={X_SIZE},u={U_SIZE},y={OUT_SIZE}"
        blocks = [self.x, self.u, self.y]
        if self.states is not None:
            header += f",states={STATE_SIZE}"
            blocks.append(self.states)
        width = sum(b.shape[1] for b in blocks)
        rows = np.hstack(blocks) if n else np.zeros((0, width))
        body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
        Path(path).write_text(header + "\n" + body + ("\n" if n else ""))

    @classmethod
    def load(cls, path) -> "Dataset":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ConfigurationError(f"{path}: empty dataset file")
        counts = dict(item.split("=") for item in lines[0].split(","))
        n, nx, nu, ny = (int(counts[k]) for k in ("n_samples", "x", "u", "y"))
        ns = int(counts.get("states", 0))
        if (nx, nu, ny) != (X_SIZE, U_SIZE, OUT_SIZE) or ns not in (0, STATE_SIZE):
            raise ConfigurationError(f"{path}: unexpected layout {counts}")
        width = nx + nu + ny + ns
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1 : n + 1]]).reshape(n, width)
        states = data[:, nx + nu + ny :] if ns else None
        return cls(data[:, :nx], data[:, nx : nx + nu], data[:, nx + nu : nx + nu + ny], states)


def collect_dataset(
    field: HeightField,
    cfg: GaitConfig,
    cmd_distribution,
    n_steps: int,
    seed: int,
    start: RobotState | None = None,
    dt: float = 0.1,
) -> Dataset:
    """Roll the gait oracle forward and record (x_t, u_t, y_t) per step.

    ``cmd_distribution`` maps the step index to a (v_x, v_y, omega) command.
    Labels are realized touchdowns in the base frame at t.  The rollout stops
    early if the robot's scan window or footholds leave the field.
    """
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")
    state = start or RobotState(field.origin[0] + 1.0, field.origin[1] + 0.5 * (field.y_max - field.origin[1]))
    xs, us, ys, states = [], [], [], []
    for step in range(n_steps):
        cmd = tuple(float(c) for c in cmd_distribution(step))
        try:
            scan = extract_height_scan(field, state.pose)
            nominal = to_world(nominal_footholds(state, cmd, field, cfg), state, field)
        except OutOfBoundsError:
            break
        actual = to_base(actual_footholds(nominal, field, cfg, (seed, step)), state, field)
        xs.append(main_input(scan, cmd, state.gait_phase))
        us.append(uncertainty_input(scan, cmd))
        ys.append(actual.flat())
        states.append((state.x, state.y, state.psi, state.gait_phase))
        state = advance_state(state, cmd, dt, cfg.cycle_period)
    truncated = n_steps - len(ys)
    if truncated:
        log.warning("rollout left the terrain; %d of %d steps truncated", truncated, n_steps)
    empty = np.zeros((0,))
    return Dataset(
        np.array(xs).reshape(-1, X_SIZE) if xs else empty.reshape(0, X_SIZE),
        np.array(us).reshape(-1, U_SIZE) if us else empty.reshape(0, U_SIZE),
        np.array(ys).reshape(-1, OUT_SIZE) if ys else empty.reshape(0, OUT_SIZE),
        np.array(states).reshape(-1, 4),
        truncated,
    )


@dataclass(frozen=True)
class LossWeights:
    w_pose: float = 1.0
    w_epi: float = 0.5
    w_cal: float = 0.2
    lam: float = 0.5
    s_min: float = 1e-4
    s_max: float = 1e-2
    eps_band: float = 1e-8

    def __post_init__(self):
        if min(self.w_pose, self.w_epi, self.w_cal, self.lam) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if not self.s_max > self.s_min >= 0:
            raise ConfigurationError(f"need s_max > s_min >= 0, got [{self.s_min}, {self.s_max}]")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    M_train: int = 5
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    n_members: int = 3
    dropout: float = 0.1
    # terrain-only ablation: the u-branch never sees the command entries
    ablate_u_command: bool = False

    def __post_init__(self):
        if self.batch_size < 4:
            raise ConfigurationError(f"batch_size must be >= 4, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.M_train * self.n_members < 2:
            raise ConfigurationError("M_train * n_members must be >= 2")


def pearson(a, b):
    """Pearson correlation and its gradients; (0, 0, 0) when either side has no spread."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0 = a - a.mean()
    b0 = b - b.mean()
    saa = float(a0 @ a0)
    sbb = float(b0 @ b0)
    if saa <= 1e-300 or sbb <= 1e-300:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    denom = np.sqrt(saa * sbb)
    rho = float(a0 @ b0) / denom
    return rho, b0 / denom - rho * a0 / saa, a0 / denom - rho * b0 / sbb


@dataclass
class LossTerms:
    total: float
    pose: float
    epi: float
    cal: float
    rho: float = 0.0


def per_sample_error(mean, y) -> np.ndarray:
    """e_t: mean over the four legs of the Euclidean foothold error."""
    r = (np.asarray(mean) - np.asarray(y)).reshape(*np.shape(y)[:-1], 4, 3)
    return np.linalg.norm(r, axis=-1).mean(axis=-1)


def calibration_targets(e, lw: LossWeights) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    return lw.s_min + (lw.s_max - lw.s_min) * (e - e.min()) / ((e.max() - e.min()) + lw.eps_band)


def compute_loss(mean, var, y, lw: LossWeights, with_grad: bool = False):
    """Total, pose, hinge and calibration losses for a batch.

    ``var`` is the clamped epistemic variance.  With ``with_grad`` also
    returns dL/dmean and dL/dvar (same shapes as the inputs).
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    y = np.asarray(y, dtype=float)
    B, D = y.shape
    if B < 2:
        raise ConfigurationError(f"batch size must be >= 2, got {B}")
    r = mean - y
    pose = float((r**2).mean())
    gap = r**2 - var
    active = gap > 0
    epi = float(np.where(active, gap, 0.0).mean())

    legs = r.reshape(B, 4, 3)
    norms = np.linalg.norm(legs, axis=-1)
    e = norms.mean(axis=1)
    s = var.mean(axis=1)
    i_min, i_max = int(np.argmin(e)), int(np.argmax(e))
    e_min, e_max = e[i_min], e[i_max]
    band = lw.s_max - lw.s_min
    span = (e_max - e_min) + lw.eps_band
    s_star = lw.s_min + band * (e - e_min) / span
    diff = s - s_star
    rho, drho_de, drho_ds = pearson(e, s)
    cal = float(np.abs(diff).mean()) + lw.lam * (1.0 - rho)
    total = lw.w_pose * pose + lw.w_epi * epi + lw.w_cal * cal
    terms = LossTerms(total, pose, epi, cal, rho)
    if not with_grad:
        return terms

    n = B * D
    d_mean = lw.w_pose * 2.0 * r / n + lw.w_epi * np.where(active, 2.0 * r, 0.0) / n
    d_var = -lw.w_epi * active / n

    g = -lw.w_cal * np.sign(diff) / B  # dL/ds_star
    d_e = g * band / span
    d_e[i_min] += float(np.sum(g * band * (-1.0 / span + (e - e_min) / span**2)))
    d_e[i_max] += float(np.sum(g * band * (-(e - e_min) / span**2)))
    d_e += -lw.w_cal * lw.lam * drho_de
    d_s = lw.w_cal * np.sign(diff) / B - lw.w_cal * lw.lam * drho_ds

    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(norms[..., None] > 0, legs / norms[..., None], 0.0)
    d_mean += (d_e[:, None, None] * 0.25 * unit).reshape(B, D)
    d_var += d_s[:, None] / D
    return terms, d_mean, d_var


def _batch_passes(ensemble, x, u, M, seed):
    caches, outs = [], []
    for k, member in enumerate(ensemble):
        masks = stacked_masks(member, seed, k, M, rows=len(x))
        cache: dict = {}
        out = _forward(member, x[None], u[None], masks, cache)
        outs.append(np.broadcast_to(out, (M,) + out.shape[1:]))
        caches.append(cache)
    return outs, caches


def ensemble_loss(batch, ensemble, lw: LossWeights, M_train: int, seed) -> LossTerms:
    """Loss only (no gradient); same passes as :func:`backward`."""
    x, u, y = batch
    outs, _ = _batch_passes(ensemble, np.asarray(x, float), np.asarray(u, float), M_train, seed)
    passes = np.concatenate(outs, axis=0)
    mean, raw = pass_moments(passes)
    return compute_loss(mean, np.clip(raw, VAR_FLOOR, VAR_CEIL), y, lw)


def backward(batch, ensemble, lw: LossWeights, M_train: int, seed):
    """Loss terms and per-member gradients [(dW, db) per layer].

    Dropout masks are a pure function of (seed, member, pass), so repeated
    calls with the same ``seed`` see identical masks.
    """
    x, u, y = (np.asarray(a, dtype=float) for a in batch)
    outs, caches = _batch_passes(ensemble, x, u, M_train, seed)
    passes = np.concatenate(outs, axis=0)
    n = passes.shape[0]
    mean, raw = pass_moments(passes)
    var = np.clip(raw, VAR_FLOOR, VAR_CEIL)
    terms, d_mean, d_var = compute_loss(mean, var, y, lw, with_grad=True)
    d_raw = d_var * ((raw >= VAR_FLOOR) & (raw <= VAR_CEIL))
    grads = []
    for member, cache, out in zip(ensemble, caches, outs):
        d_out = d_mean / n + d_raw * 2.0 * (out - mean) / (n - 1)
        grads.append(backward_member(member, cache, d_out))
    return terms, grads


def _first_u_layer(member) -> int | None:
    for i, layer in enumerate(member):
        if layer.branch == "u":
            return i
    return None


@dataclass
class TrainingReport:
    rows: list = field(default_factory=list)  # (epoch, pose, epi, cal, total)

    def save(self, path) -> None:
        lines = ["epoch,L_pose,L_epi,L_cal,total"]
        lines += [f"{e},{p!r},{q!r},{c!r},{t!r}" for e, p, q, c, t in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")


class _Optimizer:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            for p, g, m in zip(params, grads, self.m):
                m *= self.cfg.momentum
                m += g
                p -= lr * m
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train(dataset: Dataset, config: TrainConfig, weights: LossWeights, ensemble=None):
    """Train the ensemble jointly; returns (ensemble, TrainingReport)."""
    n = len(dataset)
    if n < config.batch_size:
        raise ConfigurationError(f"dataset has {n} samples, fewer than batch_size {config.batch_size}")
    if ensemble is None:
        ensemble = build_ensemble(config.n_members, config.seed, dropout=config.dropout)
    ablate = [_first_u_layer(m) if config.ablate_u_command else None for m in ensemble]
    for member, i in zip(ensemble, ablate):
        if i is not None:
            member[i].weight[:, :3] = 0.0
    params = [a for member in ensemble for layer in member for a in (layer.weight, layer.bias)]
    opt = _Optimizer(params, config)
    report = TrainingReport()
    n_batches = n // config.batch_size
    for epoch in range(config.epochs):
        order = stream("shuffle", config.seed, epoch).permutation(n)
        acc = np.zeros(4)
        for b in range(n_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            batch = (dataset.x[idx], dataset.u[idx], dataset.y[idx])
            terms, grads = backward(batch, ensemble, weights, config.M_train, (config.seed, epoch, b))
            if not np.isfinite(terms.total):
                raise TrainingDivergedError(epoch, b, terms.total)
            for member_grads, i in zip(grads, ablate):
                if i is not None:
                    member_grads[i][0][:, :3] = 0.0
            flat = [a for member_grads in grads for pair in member_grads for a in pair]
            opt.step(params, flat)
            acc += (terms.pose, terms.epi, terms.cal, terms.total)
        acc /= max(n_batches, 1)
        report.rows.append((epoch, *acc.tolist()))
        log.debug("epoch %d: pose %.3g epi %.3g cal %.3g total %.3g", epoch, *acc)
    return ensemble, report


def id_command() -> Command:
    return Command.constant(0.4, 0.0, 0.0)
