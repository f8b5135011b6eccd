"""SNR predictors over the scheduling horizon.

Every predictor returns a :class:`PredictedTrace` of length K. Two non-learned
implementations are provided: a noisy oracle (true SNR plus Gaussian dB error)
and a geometric forecaster driven by the planned trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import (
    ChannelTrace,
    EnvironmentParams,
    TrajectoryPlan,
    correlation_coefficient,
    distance_and_elevation,
    los_state,
    path_loss,
    usable_mask,
)

PREDICTORS = ("noisy_oracle", "geometric")


@dataclass(frozen=True)
class PredictorInput:
    history_snr: np.ndarray  # (M,) dB
    history_traj: np.ndarray  # (M, 3)
    planned_traj: TrajectoryPlan
    history_shadowing_estimate: Optional[float] = None

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.history_snr, dtype=float))
        t = np.atleast_2d(np.asarray(self.history_traj, dtype=float))
        if h.shape[0] < 1:
            raise ValueError("history must hold at least one slot")
        if t.shape != (h.shape[0], 3):
            raise ValueError("history_traj must be (M, 3) matching history_snr")
        object.__setattr__(self, "history_snr", h)
        object.__setattr__(self, "history_traj", t)


@dataclass(frozen=True)
class PredictedTrace:
    snr_db: np.ndarray
    usable: np.ndarray
    gamma_min_db: float

    @classmethod
    def from_snr(cls, snr_db, gamma_min_db: float) -> "PredictedTrace":
        snr = np.asarray(snr_db, dtype=float).copy()
        return cls(snr, usable_mask(snr, gamma_min_db), float(gamma_min_db))

    @property
    def K(self) -> int:
        return self.snr_db.shape[0]


def predict_noisy_oracle(true_trace: ChannelTrace, sigma_err_db: float, seed) -> PredictedTrace:
    """Realized SNR (dB) plus i.i.d. zero-mean Gaussian error of std ``sigma_err_db``."""
    if sigma_err_db < 0:
        raise ValueError("sigma_err_db must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    # always draw so the stream position does not depend on sigma
    eps = rng.standard_normal(true_trace.K) * sigma_err_db
    return PredictedTrace.from_snr(true_trace.snr_db + eps, true_trace.gamma_min_db)


def predict_geometric(inp: PredictorInput, env: EnvironmentParams) -> PredictedTrace:
    """Deterministic forecast from the planned waypoints.

    Path loss follows the planned geometry and threshold state model; the
    shadowing estimate decays geometrically with the per-slot correlation.
    """
    plan = inp.planned_traj
    chi = 0.0 if inp.history_shadowing_estimate is None else float(inp.history_shadowing_estimate)
    speeds = plan.slot_speeds()
    budget = env.link_budget_db
    snr = np.empty(plan.horizon)
    for j in range(plan.horizon):
        d, theta = distance_and_elevation(plan, j + 1)
        chi *= correlation_coefficient(speeds[j], plan.slot_duration, env)
        snr[j] = budget - (path_loss(d, los_state(theta, env), env) + chi)
    return PredictedTrace.from_snr(snr, env.snr_threshold_db)
