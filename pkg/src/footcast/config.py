"""Experiment configuration: flat INI sections mapped onto the module dataclasses.

Each section corresponds to one dataclass; keys are its field names.  Tuples
are comma-separated.  Unknown sections or keys are rejected so that typos do
not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .costmap import CostmapConfig
from .errors import ConfigurationError
from .feasibility import FeasibilityConfig
from .gait import GaitConfig
from .planner import MppiConfig
from .terrain import TerrainSpec
from .training import LossWeights, TrainConfig


@dataclass(frozen=True)
class ExperimentSettings:
    seeds: tuple[int, ...] = (0, 1, 2)
    # "auto": one per rough block crossed on the test terrain, 0 on flat
    k_transitions: str = "auto"
    ood_runs: int = 3
    plan_runs: int = 10
    progress_runs: int = 20
    lambda_u_sweep: tuple[float, ...] = (0.01, 0.05, 0.2, 0.5)
    predict_M: int = 20
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"seeds must be distinct, got {self.seeds}")
        if self.k_transitions != "auto":
            try:
                bad = int(self.k_transitions) < 0
            except ValueError:
                bad = True
            if bad:
                raise ConfigurationError(f"k_transitions must be 'auto' or an integer >= 0, got {self.k_transitions!r}")
        if min(self.ood_runs, self.plan_runs, self.progress_runs) < 1:
            raise ConfigurationError("run counts must be >= 1")
        if self.predict_M < 1 or self.workers < 1:
            raise ConfigurationError("predict_M and workers must be >= 1")
        if len(self.lambda_u_sweep) != 4 or min(self.lambda_u_sweep) <= 0:
            raise ConfigurationError("lambda_u_sweep must list 4 positive weights")


@dataclass(frozen=True)
class CollectSettings:
    id_runs: int = 3
    id_steps: int = 300
    eval_steps: int = 250
    corr_steps: int = 200
    dt: float = 0.1
    id_speed: float = 0.4
    ood_vx: tuple[float, float] = (0.1, 1.0)
    ood_wz: tuple[float, float] = (-0.5, 0.5)
    hold_steps: int = 10

    def __post_init__(self):
        if min(self.id_runs, self.id_steps, self.eval_steps, self.corr_steps, self.hold_steps) < 1:
            raise ConfigurationError("collection counts must be >= 1")
        if not self.dt > 0:
            raise ConfigurationError("dt must be > 0")
        for name in ("ood_vx", "ood_wz"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"{name} range is empty: {lo} > {hi}")


@dataclass(frozen=True)
class TestSuiteSettings:
    """Strip terrains for the ID/OOD table: flat tiles with rough tile columns."""

    kinds: tuple[str, ...] = ("wavy", "stepped", "spiked")
    seed: int = 3
    amplitude: float = 0.1
    feature_scale: float = 0.5
    extent: tuple[float, float] = (16.0, 16.0)
    tile_size: float = 2.0
    rough_columns: tuple[int, ...] = (2, 3, 6, 7)
    start_x: float = 1.0
    start_y: tuple[float, ...] = (6.0, 8.0, 10.0)

    def __post_init__(self):
        bad = [k for k in self.kinds if k not in ("flat", "wavy", "stepped", "spiked", "ramp")]
        if bad:
            raise ConfigurationError(f"unknown test terrain kinds {bad}")

    def transitions(self, kind: str) -> int:
        """Number of flat-to-rough transitions along a straight run in +x."""
        if kind == "flat":
            return 0
        cols = sorted(set(self.rough_columns))
        return sum(1 for i, c in enumerate(cols) if i == 0 or cols[i - 1] != c - 1)

    def spec(self, kind: str) -> TerrainSpec:
        n_tx = int(self.extent[0] / self.tile_size + 1e-9) + 1
        n_ty = int(self.extent[1] / self.tile_size + 1e-9) + 1
        row = [kind if c in self.rough_columns else "flat" for c in range(n_tx)]
        return TerrainSpec(
            "mixed",
            self.seed,
            self.amplitude,
            self.feature_scale,
            self.extent,
            tile_size=self.tile_size,
            tile_kinds=tuple(row * n_ty),
        )


@dataclass(frozen=True)
class EpisodeSettings:
    max_steps: int = 150
    goal_radius: float = 0.3
    goal: tuple[float, float] = (10.0, 6.0)
    start_x: float = 2.0
    start_y: tuple[float, float] = (2.5, 9.5)
    start_psi: tuple[float, float] = (-0.5, 0.5)
    cruise_speed: float = 0.4
    arena_margin: float = 1.0
    # "matched" calibrates the roughness scale to the uncertainty map budget
    roughness_scale: str = "matched"

    def __post_init__(self):
        if self.max_steps < 1 or not self.goal_radius > 0:
            raise ConfigurationError("max_steps must be >= 1 and goal_radius > 0")
        if self.roughness_scale != "matched":
            try:
                if float(self.roughness_scale) < 0:
                    raise ValueError
            except ValueError:
                raise ConfigurationError(
                    f"roughness_scale must be 'matched' or a non-negative number, got {self.roughness_scale!r}"
                ) from None


_SECTIONS = {
    "experiment": ("experiment", ExperimentSettings),
    "collect": ("collect", CollectSettings),
    "id_terrain": ("id_terrain", TerrainSpec),
    "test_terrain": ("test_suite", TestSuiteSettings),
    "corr_terrain": ("corr_terrain", TerrainSpec),
    "plan_terrain": ("plan_terrain", TerrainSpec),
    "gait": ("gait", GaitConfig),
    "loss": ("loss", LossWeights),
    "train": ("train", TrainConfig),
    "mppi": ("mppi", MppiConfig),
    "costmap": ("costmap", CostmapConfig),
    "feasibility": ("feasibility", FeasibilityConfig),
    "episode": ("episode", EpisodeSettings),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSettings = ExperimentSettings()
    collect: CollectSettings = CollectSettings()
    id_terrain: TerrainSpec = TerrainSpec("flat", extent=(14.0, 6.0))
    test_suite: TestSuiteSettings = TestSuiteSettings()
    corr_terrain: TerrainSpec = TerrainSpec("spiked", seed=5, amplitude=0.1, extent=(14.0, 14.0))
    plan_terrain: TerrainSpec = TerrainSpec("mixed", seed=0, amplitude=0.25, extent=(12.0, 12.0))
    gait: GaitConfig = GaitConfig()
    loss: LossWeights = LossWeights()
    train: TrainConfig = TrainConfig()
    mppi: MppiConfig = MppiConfig()
    costmap: CostmapConfig = CostmapConfig()
    feasibility: FeasibilityConfig = FeasibilityConfig()
    episode: EpisodeSettings = EpisodeSettings()

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, experiment=replace(self.experiment, seeds=tuple(int(s) for s in seeds)))


def _parse_scalar(text: str, like, where: str):
    text = text.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {text!r} as {type(like).__name__}") from None
    return text


def _parse_value(text: str, default, where: str):
    if isinstance(default, tuple) or default is None:
        items = [t for t in text.split(",") if t.strip()]
        if default is None and not items:
            return None
        if default:
            flat = default[0]
            while isinstance(flat, tuple):
                flat = flat[0]
        else:
            flat = ""
        return tuple(_parse_scalar(t, flat, where) for t in items)
    return _parse_scalar(text, default, where)


def _format_value(value) -> str:
    if isinstance(value, tuple):
        flat = []
        for v in value:
            flat.extend(v if isinstance(v, tuple) else (v,))
        return ", ".join(_format_value(v) for v in flat)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _regroup(values: tuple, default):
    # hip offsets and similar nested tuples are written flat
    if default and isinstance(default[0], tuple):
        width = len(default[0])
        if len(values) % width:
            raise ConfigurationError(f"expected a multiple of {width} values, got {len(values)}")
        return tuple(tuple(values[i : i + width]) for i in range(0, len(values), width))
    return values


def _build(cls, base, items: dict, section: str):
    known = {f.name: f for f in fields(cls) if f.init}
    kwargs = {}
    for key, text in items.items():
        if key not in known:
            raise ConfigurationError(f"[{section}] unknown key {key!r}; expected one of {sorted(known)}")
        default = getattr(base, key)
        value = _parse_value(text, default, f"[{section}] {key}")
        if isinstance(value, tuple):
            value = _regroup(value, default)
        kwargs[key] = value
    return replace(base, **kwargs) if kwargs else base


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    parser.optionxform = str  # keep case (M_train, K_samples)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}".splitlines()[0]) from None
    cfg = ExperimentConfig()
    updates = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        attr, cls = _SECTIONS[section]
        try:
            updates[attr] = _build(cls, getattr(cfg, attr), dict(parser[section]), section)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{source}: [{section}] {exc}") from None
    return replace(cfg, **updates)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg``."""
    out = []
    for section, (attr, _) in _SECTIONS.items():
        out.append(f"[{section}]")
        obj = getattr(cfg, attr)
        for f in dataclasses.fields(obj):
            if f.init:
                out.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)
