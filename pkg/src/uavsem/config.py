"""Experiment configuration: TOML file -> :class:`ExperimentConfig`."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import EnvironmentParams, TrajectoryPlan
from .codec import COMPLETION_SCALE, Profile
from .predictor import PREDICTORS
from .scheduler import SLOT_ORDERS

METHODS = ("proposed", "uniform_sched", "no_generation", "single_stream")


class ConfigError(ValueError):
    pass


@dataclass
class SweepSpec:
    methods: tuple[str, ...] = METHODS
    snr_grid_db: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    sigma_grid_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    mismatch_snr_db: float = 15.0


@dataclass
class ExperimentConfig:
    env: EnvironmentParams = field(default_factory=EnvironmentParams)
    traj: TrajectoryPlan = field(default_factory=TrajectoryPlan.straight_pass)
    n_tot: int = 512
    profile: Profile = field(default_factory=Profile)
    slot_order: str = "snr_desc"
    predictor: str = "noisy_oracle"
    sigma_err_db: float = 0.0
    method: str = "proposed"
    completion_scale: float = COMPLETION_SCALE
    target_mean_snr_db: Optional[float] = 15.0
    link_budget_range_db: tuple[float, float] = (0.0, 250.0)
    trials: int = 20
    seed: int = 2026
    corpus: Optional[str] = None
    workers: int = 1
    sweep: SweepSpec = field(default_factory=SweepSpec)

    @property
    def K(self) -> int:
        return self.traj.horizon

    @property
    def gamma_min_db(self) -> float:
        return self.env.snr_threshold_db

    def validate(self) -> "ExperimentConfig":
        if self.n_tot <= 0:
            raise ConfigError("n_tot must be positive")
        if self.slot_order not in SLOT_ORDERS:
            raise ConfigError(f"slot_order must be one of {SLOT_ORDERS}")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {PREDICTORS}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        for m in self.sweep.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown sweep method {m!r}")
        if self.sigma_err_db < 0:
            raise ConfigError("sigma_err_db must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.sweep.snr_grid_db or not self.sweep.sigma_grid_db:
            raise ConfigError("sweep grids must be nonempty")
        lo, hi = self.link_budget_range_db
        if not lo < hi:
            raise ConfigError("link_budget_range_db must be increasing")
        return self

    def to_dict(self) -> dict[str, Any]:
        """JSON-friendly echo of the configuration."""
        env = dataclasses.asdict(self.env)
        env["elevation_threshold_deg"] = math.degrees(env.pop("elevation_threshold"))
        return {
            "seed": self.seed,
            "trials": self.trials,
            "n_tot": self.n_tot,
            "gamma_min_db": self.gamma_min_db,
            "slot_order": self.slot_order,
            "predictor": self.predictor,
            "sigma_err_db": self.sigma_err_db,
            "method": self.method,
            "completion_scale": self.completion_scale,
            "target_mean_snr_db": self.target_mean_snr_db,
            "link_budget_range_db": list(self.link_budget_range_db),
            "corpus": self.corpus,
            "profile": {"r_s": self.profile.r_s, "r_t": self.profile.r_t},
            "env": env,
            "trajectory": {
                "ground_user": self.traj.ground_user.tolist(),
                "waypoints": self.traj.waypoints.tolist(),
                "slot_duration": self.traj.slot_duration,
                "speeds": None if self.traj.speeds is None else self.traj.speeds.tolist(),
            },
            "sweep": dataclasses.asdict(self.sweep),
        }


_ENV_KEYS = {f.name for f in dataclasses.fields(EnvironmentParams)}


def _env_from(table: dict, gamma_min_db: Optional[float]) -> EnvironmentParams:
    t = dict(table)
    if "elevation_threshold_deg" in t:
        t["elevation_threshold"] = math.radians(t.pop("elevation_threshold_deg"))
    mode = t.pop("correlation", None)
    if mode == "speed":
        t["rho"] = None
    elif mode not in (None, "fixed"):
        raise ConfigError(f"env.correlation must be 'fixed' or 'speed', got {mode!r}")
    if gamma_min_db is not None:
        t["snr_threshold_db"] = gamma_min_db
    unknown = set(t) - _ENV_KEYS
    if unknown:
        raise ConfigError(f"unknown env keys: {sorted(unknown)}")
    return EnvironmentParams(**t)


def _traj_from(table: dict) -> TrajectoryPlan:
    t = dict(table)
    if "waypoints" in t:
        return TrajectoryPlan(
            np.asarray(t.get("ground_user", [0.0, 0.0, 0.0]), dtype=float),
            np.asarray(t["waypoints"], dtype=float),
            float(t.get("slot_duration", 1.0)),
            None if t.get("speeds") is None else np.asarray(t["speeds"], dtype=float),
        )
    allowed = {"K", "altitude", "start_x", "end_x", "offset_y", "slot_duration"}
    unknown = set(t) - allowed
    if unknown:
        raise ConfigError(f"unknown trajectory keys: {sorted(unknown)}")
    return TrajectoryPlan.straight_pass(**t)


def config_from_dict(d: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    d = dict(d)
    try:
        env = _env_from(d.pop("env", {}), d.pop("gamma_min_db", None))
        traj = _traj_from(d.pop("trajectory", {}))
        profile = Profile(**d.pop("profile", {}))
        sweep_t = dict(d.pop("sweep", {}))
        sweep = SweepSpec(
            methods=tuple(sweep_t.pop("methods", METHODS)),
            snr_grid_db=tuple(float(v) for v in sweep_t.pop("snr_grid_db", SweepSpec.snr_grid_db)),
            sigma_grid_db=tuple(float(v) for v in sweep_t.pop("sigma_grid_db", SweepSpec.sigma_grid_db)),
            mismatch_snr_db=float(sweep_t.pop("mismatch_snr_db", SweepSpec.mismatch_snr_db)),
        )
        if sweep_t:
            raise ConfigError(f"unknown sweep keys: {sorted(sweep_t)}")
        K = d.pop("K", None)
        if K is not None and K != traj.horizon:
            raise ConfigError(f"K={K} but the trajectory has {traj.horizon} waypoints")
        if "link_budget_range_db" in d:
            d["link_budget_range_db"] = tuple(float(v) for v in d["link_budget_range_db"])
        corpus = d.get("corpus")
        if corpus is not None and base_dir is not None and not Path(corpus).is_absolute():
            d["corpus"] = str((base_dir / corpus).resolve())
        known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"env", "traj", "profile", "sweep"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = ExperimentConfig(env=env, traj=traj, profile=profile, sweep=sweep, **d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as f:
            d = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(d, base_dir=path.parent)
