"""Experiment orchestration behind the CLI subcommands.

Every command reads the experiment config, works per seed under
``<out>/seed<N>/``, and writes CSV tables (and, for ``report``, SVG figures).
Independent work items are pure functions of (config, seed, run), and results
are written by the parent process in a fixed order, so outputs do not depend
on the number of workers.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import svg
from .config import ExperimentConfig, dump_config
from .costmap import Costmap, roughness_costmap, uncertainty_costmap
from .errors import ConfigurationError, MissingInputError
from .feasibility import feasibility_error, save_records
from .gait import Command, RobotState
from .ood import (
    OOD,
    SignalTrace,
    id_threshold,
    per_leg_uncertainty,
    region_error,
    save_segmentation,
    segment_ood,
)
from .planner import FORMULATIONS, EpisodeConfig, World, scan_in_field, predict_at, run_episode
from .predictor import load_weights, predict, save_weights
from .rng import derive_seed, stream
from .terrain import generate_terrain, heightscan_variance, read_grid
from .training import Dataset, collect_dataset, per_sample_error, train

log = logging.getLogger(__name__)

MODELS = ("full", "ablation")
PROGRESS_BINS = np.linspace(0.0, 1.0, 11)


# ---------------------------------------------------------------- plumbing


@dataclass(frozen=True)
class SeedPaths:
    root: Path

    @classmethod
    def of(cls, out, seed: int) -> "SeedPaths":
        return cls(Path(out) / f"seed{seed}")

    def dir(self, name: str) -> Path:
        d = self.root / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    def need(self, rel: str) -> Path:
        p = self.root / rel
        if not p.exists():
            raise MissingInputError(f"{p} not found; run the producing command first")
        return p


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _map(fn, tasks, workers: int):
    """Order-preserving map; a process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _save_config(cfg: ExperimentConfig, out) -> None:
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "config.ini").write_text(dump_config(cfg))


# ---------------------------------------------------------------- collect


def ood_command(cfg: ExperimentConfig, *keys) -> Command:
    c = cfg.collect
    return Command(c.ood_vx, (0.0, 0.0), c.ood_wz, c.hold_steps, seed=derive_seed("ood-command", *keys))


def collect_id(cfg: ExperimentConfig, seed: int) -> Dataset:
    """Flat terrain, fixed command: the only data the predictor is trained on."""
    field = generate_terrain(cfg.id_terrain)
    c = cfg.collect
    mid_y = field.origin[1] + 0.5 * (field.y_max - field.origin[1])
    parts = [
        collect_dataset(
            field,
            cfg.gait,
            Command.constant(c.id_speed),
            c.id_steps,
            seed=derive_seed("id", seed, run),
            start=RobotState(field.origin[0] + 1.0, mid_y),
            dt=c.dt,
        )
        for run in range(c.id_runs)
    ]
    return Dataset.concatenate(parts)


def collect_eval(cfg: ExperimentConfig, seed: int, kind: str, run: int) -> Dataset:
    suite = cfg.test_suite
    field = generate_terrain(suite.spec(kind))
    start = RobotState(suite.start_x, suite.start_y[run % len(suite.start_y)])
    cmd = ood_command(cfg, "eval", seed, kind, run)
    return collect_dataset(
        field, cfg.gait, cmd, cfg.collect.eval_steps, derive_seed("eval", seed, kind, run), start, cfg.collect.dt
    )


def collect_corr(cfg: ExperimentConfig, seed: int, run: int) -> Dataset:
    field = generate_terrain(cfg.corr_terrain)
    mid_y = field.origin[1] + 0.5 * (field.y_max - field.origin[1])
    start = RobotState(field.origin[0] + 1.0, mid_y)
    cmd = ood_command(cfg, "corr", seed, run)
    return collect_dataset(
        field, cfg.gait, cmd, cfg.collect.corr_steps, derive_seed("corr", seed, run), start, cfg.collect.dt
    )


def _collect_task(cfg, seed, what, kind, run):
    if what == "id":
        return collect_id(cfg, seed)
    if what == "eval":
        return collect_eval(cfg, seed, kind, run)
    return collect_corr(cfg, seed, run)


def cmd_collect(cfg: ExperimentConfig, out, workers: int = 1) -> None:
    _save_config(cfg, out)
    runs = range(cfg.experiment.ood_runs)
    tasks, names = [], []
    for seed in cfg.experiment.seeds:
        tasks.append((cfg, seed, "id", "", 0))
        names.append((seed, "id.csv"))
        for kind in cfg.test_suite.kinds:
            for r in runs:
                tasks.append((cfg, seed, "eval", kind, r))
                names.append((seed, f"eval_{kind}_run{r}.csv"))
        for r in runs:
            tasks.append((cfg, seed, "corr", "", r))
            names.append((seed, f"corr_run{r}.csv"))
    for (seed, name), ds in zip(names, _map(_collect_task, tasks, workers)):
        ds.save(SeedPaths.of(out, seed).dir("data") / name)
        log.info("seed %d: wrote %s (%d samples)", seed, name, len(ds))


# ---------------------------------------------------------------- train


def train_model(cfg: ExperimentConfig, dataset: Dataset, seed: int, ablation: bool):
    tc = replace(cfg.train, seed=seed, ablate_u_command=ablation)
    return train(dataset, tc, cfg.loss)


def _train_task(cfg, seed, ablation, data_path):
    return train_model(cfg, Dataset.load(data_path), seed, ablation)


def cmd_train(cfg: ExperimentConfig, out, workers: int = 1) -> None:
    tasks = []
    for seed in cfg.experiment.seeds:
        data = SeedPaths.of(out, seed).need("data/id.csv")
        for ablation in (False, True):
            tasks.append((cfg, seed, ablation, data))
    for (_, seed, ablation, _), (ensemble, report) in zip(tasks, _map(_train_task, tasks, workers)):
        d = SeedPaths.of(out, seed).dir("model")
        name = "ablation" if ablation else "full"
        save_weights(ensemble, d / f"{name}.net")
        report.save(d / f"loss_{name}.csv")
        log.info("seed %d: trained %s model, final total loss %.4g", seed, name, report.rows[-1][-1])


def load_model(out, seed: int, name: str = "full"):
    return load_weights(SeedPaths.of(out, seed).need(f"model/{name}.net"))


# ---------------------------------------------------------------- eval-ood


def _predict_dataset(ensemble, ds: Dataset, M: int):
    return predict(ensemble, ds.x, ds.u, M, seed=0)


def scan_variance(ds: Dataset) -> np.ndarray:
    return heightscan_variance(ds.x[:, :102].reshape(-1, 6, 17))


@dataclass(frozen=True)
class RegionRow:
    terrain: str
    run: int
    method: str
    threshold: float
    id_error: float
    ood_error: float
    ood_steps: int
    steps: int

    @property
    def gap(self) -> float:
        return self.ood_error - self.id_error


def k_for(cfg: ExperimentConfig, kind: str) -> int:
    k = cfg.experiment.k_transitions
    return cfg.test_suite.transitions(kind) if k == "auto" else int(k)


def evaluate_regions(ensemble, id_data: Dataset, runs, k: int, dt: float, M: int):
    """Threshold, segment and score each (name, dataset) run for both signals.

    Returns per-run (traces, segmentations, errors) and the two thresholds.
    """
    pid = _predict_dataset(ensemble, id_data, M)
    thresholds = {
        "proposed": id_threshold([pid.scalar_summary]),
        "terrain_variance": id_threshold([scan_variance(id_data)]),
    }
    results = []
    for name, ds in runs:
        if len(ds) == 0:
            raise MissingInputError(f"{name}: empty rollout")
        pred = _predict_dataset(ensemble, ds, M)
        err = per_sample_error(pred.mean, ds.y)
        times = dt * np.arange(len(ds))
        traces = {
            "proposed": SignalTrace(times, np.atleast_1d(pred.scalar_summary), "proposed"),
            "terrain_variance": SignalTrace(times, scan_variance(ds), "terrain_variance"),
        }
        segs = {m: segment_ood(traces[m], thresholds[m], k) for m in traces}
        results.append((name, traces, segs, err))
    return thresholds, results


def cmd_eval_ood(cfg: ExperimentConfig, out, workers: int = 1) -> None:
    header = ("terrain", "run", "method", "threshold", "id_error", "ood_error", "gap", "ood_steps", "steps")
    for seed in cfg.experiment.seeds:
        paths = SeedPaths.of(out, seed)
        ensemble = load_model(out, seed)
        id_data = Dataset.load(paths.need("data/id.csv"))
        d = paths.dir("ood")
        rows = []
        for kind in cfg.test_suite.kinds:
            runs = [
                (r, Dataset.load(paths.need(f"data/eval_{kind}_run{r}.csv"))) for r in range(cfg.experiment.ood_runs)
            ]
            thresholds, results = evaluate_regions(
                ensemble, id_data, runs, k_for(cfg, kind), cfg.collect.dt, cfg.experiment.predict_M
            )
            for r, traces, segs, err in results:
                for method in ("terrain_variance", "proposed"):
                    id_e, ood_e = region_error(err, segs[method])
                    mask = segs[method].ood_mask()
                    rows.append(
                        RegionRow(kind, r, method, thresholds[method], id_e, ood_e, int(mask.sum()), len(err))
                    )
                    save_segmentation(d / f"segments_{kind}_run{r}_{method}.csv", traces[method], segs[method])
                write_csv(
                    d / f"trace_{kind}_run{r}.csv",
                    ("t", "s_bar", "var_h", "error", "label_proposed", "label_terrain_variance"),
                    zip(
                        traces["proposed"].times,
                        traces["proposed"].values,
                        traces["terrain_variance"].values,
                        err,
                        segs["proposed"].labels(),
                        segs["terrain_variance"].labels(),
                    ),
                )
        write_csv(
            d / "table.csv",
            header,
            [(r.terrain, r.run, r.method, r.threshold, r.id_error, r.ood_error, r.gap, r.ood_steps, r.steps) for r in rows],
        )
        write_csv(d / "gap_summary.csv", ("terrain", "runs", "proposed_wins", "majority"), gap_summary(rows))


def gap_summary(rows) -> list[tuple]:
    """Per terrain: in how many runs the proposed gap is >= the baseline gap.

    A gap is nan when a method finds no OOD (or no ID) steps; such a run
    counts as a loss for that method.
    """
    out = []
    terrains = list(dict.fromkeys(r.terrain for r in rows))
    for t in terrains:
        by_run: dict = {}
        for r in rows:
            if r.terrain == t:
                by_run.setdefault(r.run, {})[r.method] = r.gap
        wins = 0
        for gaps in by_run.values():
            p, b = gaps["proposed"], gaps["terrain_variance"]
            if np.isfinite(p) and (not np.isfinite(b) or p >= b):
                wins += 1
        out.append((t, len(by_run), wins, int(wins * 2 > len(by_run))))
    return out


# ---------------------------------------------------------------- eval-corr


def fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and Pearson rho (rho = 0 without spread)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    slope = float(xc @ yc) / sxx if sxx > 0 else 0.0
    rho = float(xc @ yc) / np.sqrt(sxx * syy) if sxx > 0 and syy > 0 else 0.0
    return slope, float(y.mean() - slope * x.mean()), rho


def cmd_eval_corr(cfg: ExperimentConfig, out, workers: int = 1) -> None:
    header = ("model", "pairs", "slope", "intercept", "rho", "id_mean_s_bar", "ood_mean_s_bar", "ood_id_ratio")
    for seed in cfg.experiment.seeds:
        paths = SeedPaths.of(out, seed)
        id_data = Dataset.load(paths.need("data/id.csv"))
        runs = [Dataset.load(paths.need(f"data/corr_run{r}.csv")) for r in range(cfg.experiment.ood_runs)]
        d = paths.dir("corr")
        summary = []
        for name in MODELS:
            ensemble = load_model(out, seed, name)
            M = cfg.experiment.predict_M
            id_mean = float(np.mean(_predict_dataset(ensemble, id_data, M).scalar_summary))
            pairs = []
            for r, ds in enumerate(runs):
                pred = _predict_dataset(ensemble, ds, M)
                err = per_sample_error(pred.mean, ds.y)
                pairs += [(r, i, s, e) for i, (s, e) in enumerate(zip(pred.scalar_summary, err))]
            write_csv(d / f"pairs_{name}.csv", ("run", "step", "s_bar", "error"), pairs)
            s = np.array([p[2] for p in pairs])
            e = np.array([p[3] for p in pairs])
            slope, intercept, rho = fit_line(s, e)
            ood_mean = float(s.mean())
            summary.append((name, len(pairs), slope, intercept, rho, id_mean, ood_mean, ood_mean / id_mean))
        write_csv(d / "summary.csv", header, summary)


# ---------------------------------------------------------------- plan


def reference_uncertainty_map(ensemble, world: World, ecfg: EpisodeConfig, spacing: float = 0.3) -> Costmap:
    """Arena-wide uncertainty map under the ID command, pooled over four headings."""
    g = world.grid
    xs = np.arange(g.origin[0], g.origin[0] + (g.width - 1) * g.resolution + 1e-9, spacing)
    ys = np.arange(g.origin[1], g.origin[1] + (g.height - 1) * g.resolution + 1e-9, spacing)
    X, Y = np.meshgrid(xs, ys)
    maps = []
    for psi in (0.0, 0.5 * np.pi, np.pi, -0.5 * np.pi):
        poses = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, psi)])
        poses = poses[scan_in_field(world.field, poses)]
        pred, feet = predict_at(ensemble, world.field, poses, np.zeros(len(poses)), (ecfg.cruise_speed, 0.0, 0.0), ecfg)
        legs = per_leg_uncertainty(pred.variance)
        maps.append(uncertainty_costmap([(f[:, :2], v) for f, v in zip(feet, legs)], ecfg.costmap, g).costs)
    return Costmap(np.mean(maps, axis=0), g.resolution, g.origin)


def matched_roughness_scale(world: World, ecfg: EpisodeConfig, target_mean: float) -> float:
    """Scale at which the roughness map's arena mean equals ``target_mean`` (bisection in log space)."""
    def mean_at(scale):
        return roughness_costmap(world.field, replace(ecfg.costmap, roughness_scale=scale), world.grid).costs.mean()

    lo, hi = 1e-3, 1e9
    if mean_at(hi) < target_mean:
        return hi
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        if mean_at(mid) < target_mean:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def episode_config(cfg: ExperimentConfig, roughness_scale: float) -> EpisodeConfig:
    e = cfg.episode
    return EpisodeConfig(
        mppi=cfg.mppi,
        costmap=replace(cfg.costmap, roughness_scale=roughness_scale),
        gait=cfg.gait,
        feasibility=cfg.feasibility,
        predict_M=cfg.experiment.predict_M,
        goal_radius=e.goal_radius,
        max_steps=e.max_steps,
        cruise_speed=e.cruise_speed,
        arena_margin=e.arena_margin,
    )


def start_state(cfg: ExperimentConfig, seed: int, run: int) -> RobotState:
    e = cfg.episode
    g = stream("start", seed, run)
    return RobotState(e.start_x, g.uniform(*e.start_y), g.uniform(*e.start_psi))


def _episode_task(cfg, seed, run, name, weight, world, ensemble, ecfg):
    mppi = replace(ecfg.mppi.with_formulation(name, weight), seed=derive_seed("mppi", cfg.mppi.seed, seed, run))
    ec = replace(ecfg, mppi=mppi, seed=derive_seed("episode", seed, run))
    return run_episode(start_state(cfg, seed, run), cfg.episode.goal, world, ensemble, ec)


def quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


def cmd_plan(cfg: ExperimentConfig, out, workers: int = 1, formulation: str | None = None) -> None:
    if formulation is not None and formulation not in FORMULATIONS:
        raise ConfigurationError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")
    names = FORMULATIONS if formulation is None else (formulation,)
    exp = cfg.experiment
    n_runs = max(exp.plan_runs, exp.progress_runs)
    for seed in cfg.experiment.seeds:
        paths = SeedPaths.of(out, seed)
        ensemble = load_model(out, seed)
        d = paths.dir("plan")
        ep_dir = paths.dir("plan/episodes")
        field = generate_terrain(cfg.plan_terrain)
        field.save(d / "terrain.grid")

        base = episode_config(cfg, cfg.costmap.roughness_scale)
        world = World.build(field, base)
        reference = reference_uncertainty_map(ensemble, world, base)
        if cfg.episode.roughness_scale == "matched":
            scale = matched_roughness_scale(world, base, float(reference.costs.mean()))
        else:
            scale = float(cfg.episode.roughness_scale)
        ecfg = episode_config(cfg, scale)
        world = World.build(field, ecfg)
        write_csv(d / "calibration.csv", ("reference_mean_cost", "roughness_scale"), [(float(reference.costs.mean()), scale)])
        reference.save(d / "costmap_uncertainty_reference.grid")
        for name, cm in world.costmaps.items():
            cm.save(d / f"costmap_{name}.grid")

        weight = cfg.mppi.middle_weight
        tasks = [(cfg, seed, r, name, weight, world, ensemble, ecfg) for r in range(n_runs) for name in names]
        logs = _map(_episode_task, tasks, workers)
        results = {}
        for (_, _, r, name, *_), ep in zip(tasks, logs):
            ep.save(ep_dir / f"{name}_run{r}.csv")
            save_records(ep_dir / f"{name}_run{r}_feasibility.csv", ep.records)
            results[(name, r)] = ep

        rows = []
        for r in range(n_runs):
            for name in names:
                ep = results[(name, r)]
                mean, std = feasibility_error(ep.records) if ep.records else (float("nan"), float("nan"))
                rows.append((r, name, mean, std, ep.progress, ep.status, len(ep.rows), int(r < exp.plan_runs)))
        write_csv(
            d / "episodes.csv",
            ("run", "formulation", "feas_mean", "feas_std", "progress", "status", "steps", "in_feasibility_table"),
            rows,
        )
        _write_plan_tables(d, rows, names, exp.plan_runs, exp.progress_runs)

        if "uncertainty" in names:
            sweep_rows = []
            tasks = [(cfg, seed, 0, "uncertainty", lam, world, ensemble, ecfg) for lam in exp.lambda_u_sweep]
            for i, (lam, ep) in enumerate(zip(exp.lambda_u_sweep, _map(_episode_task, tasks, workers))):
                ep.save(paths.dir("plan/sweep") / f"lambda{i}.csv")
                mean, std = feasibility_error(ep.records) if ep.records else (float("nan"), float("nan"))
                sweep_rows.append((i, lam, mean, std, ep.progress, ep.status, len(ep.rows)))
            write_csv(
                d / "sweep_summary.csv",
                ("index", "lambda_u", "feas_mean", "feas_std", "progress", "status", "steps"),
                sweep_rows,
            )


def _write_plan_tables(d: Path, rows, names, plan_runs: int, progress_runs: int) -> None:
    feas = {n: [r[2] for r in rows if r[1] == n and r[0] < plan_runs] for n in names}
    prog = {n: [r[4] for r in rows if r[1] == n and r[0] < progress_runs] for n in names}
    table = []
    for r in range(plan_runs):
        table.append((r, *[v for n in names for v in (rows_for(rows, n, r)[2], rows_for(rows, n, r)[3])]))
    header = ("run", *[f"{n}_{s}" for n in names for s in ("mean", "std")])
    write_csv(d / "feasibility_table.csv", header, table)

    summary = []
    for n in names:
        wins = {
            o: sum(1 for a, b in zip(feas[n], feas[o]) if a < b) for o in names if o != n
        }
        summary.append((n, plan_runs, float(np.mean(feas[n])), *[wins.get(o, "") for o in FORMULATIONS]))
    write_csv(
        d / "feasibility_summary.csv",
        ("formulation", "runs", "grand_mean", *[f"wins_vs_{o}" for o in FORMULATIONS]),
        summary,
    )

    write_csv(
        d / "progress_summary.csv",
        ("formulation", "runs", "q1", "median", "q3", "iqr"),
        [(n, progress_runs, *quartiles(prog[n]), quartiles(prog[n])[2] - quartiles(prog[n])[0]) for n in names],
    )
    hist = {n: np.histogram(prog[n], bins=PROGRESS_BINS)[0] for n in names}
    write_csv(
        d / "progress_histogram.csv",
        ("bin_lo", "bin_hi", *names),
        [(float(lo), float(hi), *[int(hist[n][i]) for n in names]) for i, (lo, hi) in enumerate(zip(PROGRESS_BINS[:-1], PROGRESS_BINS[1:]))],
    )


def rows_for(rows, name, run):
    return next(r for r in rows if r[1] == name and r[0] == run)


# ---------------------------------------------------------------- report


def _path_xy(path) -> np.ndarray:
    rows = read_csv(path)
    return np.array([(float(r["x"]), float(r["y"])) for r in rows]).reshape(-1, 2)


def cmd_report(cfg: ExperimentConfig, out, workers: int = 1) -> None:
    produced = 0
    for seed in cfg.experiment.seeds:
        paths = SeedPaths.of(out, seed)
        if not paths.root.exists():
            raise MissingInputError(f"{paths.root} not found; run collect/train/eval first")
        rep = paths.dir("report")
        produced += _report_losses(paths, rep)
        produced += _report_ood(paths, rep)
        produced += _report_corr(paths, rep)
        produced += _report_plan(cfg, paths, rep)
    if produced == 0:
        raise MissingInputError(f"no command outputs found under {out}")


def _report_losses(paths: SeedPaths, rep: Path) -> int:
    series = []
    for name in MODELS:
        p = paths.root / "model" / f"loss_{name}.csv"
        if p.exists():
            rows = read_csv(p)
            series.append((name, [float(r["epoch"]) for r in rows], [float(r["total"]) for r in rows]))
    if not series:
        return 0
    svg.line_plot("Training loss", series, "epoch", "total loss").save(rep / "loss.svg")
    return 1


def _report_ood(paths: SeedPaths, rep: Path) -> int:
    n = 0
    for trace in sorted((paths.root / "ood").glob("trace_*.csv")) if (paths.root / "ood").exists() else []:
        rows = read_csv(trace)
        t = np.array([float(r["t"]) for r in rows])
        table = {(r["terrain"], r["run"], r["method"]): r for r in read_csv(paths.root / "ood" / "table.csv")}
        key = trace.stem[len("trace_") :]
        kind, run = key.rsplit("_run", 1)
        for method, column in (("proposed", "s_bar"), ("terrain_variance", "var_h")):
            labels = [r[f"label_{method}"] for r in rows]
            bands = _label_bands(t, labels)
            thr = float(table[(kind, run, method)]["threshold"])
            fig = svg.line_plot(
                f"{kind} run {run}: {method}",
                [(column, t, [float(r[column]) for r in rows])],
                "t (s)",
                column,
                hline=thr,
                bands=bands,
            )
            fig.save(rep / f"trace_{key}_{method}.svg")
            n += 1
    return n


def _label_bands(t, labels):
    bands, start = [], None
    dt = t[1] - t[0] if len(t) > 1 else 1.0
    for i, lab in enumerate(list(labels) + ["ID"]):
        if lab == OOD and start is None:
            start = i
        elif lab != OOD and start is not None:
            bands.append((t[start], t[i - 1] + dt))
            start = None
    return bands


def _report_corr(paths: SeedPaths, rep: Path) -> int:
    summary = paths.root / "corr" / "summary.csv"
    if not summary.exists():
        return 0
    fits = {r["model"]: r for r in read_csv(summary)}
    groups = []
    for name in MODELS:
        rows = read_csv(paths.root / "corr" / f"pairs_{name}.csv")
        f = fits[name]
        groups.append(
            (
                f"{name} (rho {float(f['rho']):.2f})",
                [float(r["s_bar"]) for r in rows],
                [float(r["error"]) for r in rows],
                float(f["slope"]),
                float(f["intercept"]),
            )
        )
    svg.scatter_plot("Uncertainty vs foothold error", groups, "s_bar", "error (m)").save(rep / "correlation.svg")
    return 1


def _report_plan(cfg: ExperimentConfig, paths: SeedPaths, rep: Path) -> int:
    d = paths.root / "plan"
    if not (d / "episodes.csv").exists():
        return 0
    n = 0
    goal = cfg.episode.goal
    heights, res, origin = read_grid(d / "terrain.grid")
    step = max(1, int(round(0.1 / res)))
    eps = sorted({r["formulation"] for r in read_csv(d / "episodes.csv")}, key=FORMULATIONS.index)
    paths_run0 = [(name, _path_xy(d / "episodes" / f"{name}_run0.csv")) for name in eps]
    svg.heatmap_with_paths(
        "Paths (run 0) over terrain height", heights[::step, ::step], origin, res * step, paths_run0, goal
    ).save(rep / "paths.svg")
    n += 1
    for name in ("obstacle", "roughness", "uncertainty_reference"):
        p = d / f"costmap_{name}.grid"
        if p.exists():
            values, cres, corigin = read_grid(p)
            svg.heatmap_with_paths(f"{name} costmap", values, corigin, cres, [], goal, vmax=100.0).save(
                rep / f"costmap_{name}.svg"
            )
            n += 1
    sweep = d / "sweep_summary.csv"
    if sweep.exists():
        values, cres, corigin = read_grid(d / "costmap_uncertainty_reference.grid")
        overlays = [
            (f"lambda_u {float(r['lambda_u']):g}", _path_xy(d / "sweep" / f"lambda{r['index']}.csv"))
            for r in read_csv(sweep)
        ]
        svg.heatmap_with_paths("Uncertainty weight sweep", values, corigin, cres, overlays, goal, vmax=100.0).save(
            rep / "sweep.svg"
        )
        n += 1
    hist = read_csv(d / "progress_histogram.csv")
    edges = [float(hist[0]["bin_lo"])] + [float(r["bin_hi"]) for r in hist]
    groups = [(name, [int(r[name]) for r in hist]) for name in eps]
    svg.histogram_plot("Goal progress", edges, groups, "progress").save(rep / "progress.svg")
    return n + 1


COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "eval-ood": cmd_eval_ood,
    "eval-corr": cmd_eval_corr,
    "plan": cmd_plan,
    "report": cmd_report,
}
