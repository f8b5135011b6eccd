"""Air-to-ground channel: geometry, LOS/NLOS state, path loss and AR(1) shadowing.

All per-slot quantities of one horizon are bundled in a :class:`ChannelTrace`.
Randomness only enters through the shadowing recursion, driven by a seeded
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class DegenerateGeometryError(ValueError):
    """UAV co-located with the ground user; elevation is undefined."""


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x_lin):
    return 10.0 * np.log10(np.asarray(x_lin, dtype=float))


@dataclass(frozen=True)
class TrajectoryPlan:
    """Planned UAV waypoints (one per slot) and the ground-user position."""

    ground_user: np.ndarray
    waypoints: np.ndarray  # (K, 3)
    slot_duration: float
    speeds: Optional[np.ndarray] = None

    def __post_init__(self):
        gu = np.asarray(self.ground_user, dtype=float).reshape(3)
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < 1:
            raise ValueError("waypoints must be a (K, 3) array with K >= 1")
        if gu[2] != 0.0:
            raise ValueError("ground user must lie at z = 0")
        if np.any(wp[:, 2] <= 0.0):
            raise ValueError("every waypoint needs a positive altitude")
        if not self.slot_duration > 0:
            raise ValueError("slot_duration must be positive")
        object.__setattr__(self, "ground_user", gu)
        object.__setattr__(self, "waypoints", wp)
        if self.speeds is not None:
            sp = np.asarray(self.speeds, dtype=float).reshape(-1)
            if sp.shape[0] != wp.shape[0]:
                raise ValueError("speeds must have one entry per waypoint")
            if np.any(sp < 0):
                raise ValueError("speeds must be nonnegative")
            object.__setattr__(self, "speeds", sp)

    @property
    def horizon(self) -> int:
        return self.waypoints.shape[0]

    def slot_speeds(self) -> np.ndarray:
        """Per-slot speed; derived from waypoint spacing when not supplied."""
        if self.speeds is not None:
            return self.speeds
        K = self.horizon
        if K == 1:
            return np.zeros(1)
        steps = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1) / self.slot_duration
        return np.concatenate([steps[:1], steps])

    @classmethod
    def straight_pass(
        cls,
        K: int = 10,
        altitude: float = 60.0,
        start_x: float = -150.0,
        end_x: float = 450.0,
        offset_y: float = 20.0,
        slot_duration: float = 1.0,
    ) -> "TrajectoryPlan":
        """Straight-line flyover of a ground user at the origin."""
        xs = np.linspace(start_x, end_x, K)
        wp = np.column_stack([xs, np.full(K, offset_y), np.full(K, altitude)])
        return cls(np.zeros(3), wp, slot_duration)


@dataclass(frozen=True)
class EnvironmentParams:
    """Propagation and link-budget constants.

    The logistic LOS parameters follow the usual degree convention: ``los_beta``
    is per degree and ``los_theta0_deg`` is in degrees.
    """

    carrier_freq: float = 2.4e9
    excess_loss_los: float = 1.0
    excess_loss_nlos: float = 20.0
    shadow_std_los: float = 3.0
    shadow_std_nlos: float = 8.0
    elevation_threshold: float = math.radians(25.0)
    los_alpha: float = 9.61
    los_beta: float = 0.16
    los_theta0_deg: float = 0.0
    decorrelation_distance: float = 50.0
    rho: Optional[float] = 0.9  # None -> speed-derived correlation
    tx_power: float = 1.0e-5
    noise_density: float = 4.0e-21
    bandwidth: float = 1.0e6
    snr_threshold_db: float = 5.0

    def __post_init__(self):
        for name in ("carrier_freq", "bandwidth", "tx_power", "noise_density", "decorrelation_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.shadow_std_los < 0 or self.shadow_std_nlos < 0:
            raise ValueError("shadowing std must be nonnegative")
        if self.excess_loss_nlos < self.excess_loss_los:
            raise ValueError("NLOS excess loss must be >= LOS excess loss")
        if not 0.0 <= self.elevation_threshold <= math.pi / 2:
            raise ValueError("elevation_threshold must lie in [0, pi/2]")
        if self.rho is not None and not 0.0 <= self.rho < 1.0:
            raise ValueError("fixed rho must lie in [0, 1)")

    @property
    def link_budget_db(self) -> float:
        """10*log10(P_t / (N_0 B))."""
        return 10.0 * math.log10(self.tx_power / (self.noise_density * self.bandwidth))

    def with_link_budget_db(self, budget_db: float) -> "EnvironmentParams":
        """Copy with the transmit power rescaled to hit ``budget_db``."""
        return replace(self, tx_power=self.noise_density * self.bandwidth * 10.0 ** (budget_db / 10.0))

    def shadow_std(self, los: bool) -> float:
        return self.shadow_std_los if los else self.shadow_std_nlos

    def excess_loss(self, los: bool) -> float:
        return self.excess_loss_los if los else self.excess_loss_nlos


def distance_and_elevation(traj: TrajectoryPlan, k: int) -> tuple[float, float]:
    """Distance and elevation angle for slot ``k`` (1-based)."""
    if not 1 <= k <= traj.horizon:
        raise IndexError(f"slot {k} outside 1..{traj.horizon}")
    q = traj.waypoints[k - 1]
    d = float(np.linalg.norm(q - traj.ground_user))
    if d == 0.0:
        raise DegenerateGeometryError("UAV at the ground-user position")
    return d, math.asin(min(1.0, q[2] / d))


def los_probability(theta: float, env: EnvironmentParams) -> float:
    """Logistic LOS probability at elevation ``theta`` (radians)."""
    deg = math.degrees(theta)
    return 1.0 / (1.0 + env.los_alpha * math.exp(-env.los_beta * (deg - env.los_theta0_deg)))


def los_state(theta: float, env: EnvironmentParams) -> bool:
    """Threshold state model; True means LOS."""
    return theta >= env.elevation_threshold


def path_loss(d: float, los: bool, env: EnvironmentParams) -> float:
    if not d > 0:
        raise ValueError("distance must be positive")
    return 20.0 * math.log10(4.0 * math.pi * env.carrier_freq * d / SPEED_OF_LIGHT) + env.excess_loss(los)


def correlation_coefficient(v: float, T: float, env: EnvironmentParams) -> float:
    if env.rho is not None:
        return env.rho
    return math.exp(-v * T / env.decorrelation_distance)


def step_shadowing(chi_prev: float, rho: float, los: bool, env: EnvironmentParams, rng: np.random.Generator) -> float:
    """One AR(1) step; the innovation uses the current slot's state variance."""
    xi = rng.normal(0.0, env.shadow_std(los))
    return rho * chi_prev + math.sqrt(max(0.0, 1.0 - rho * rho)) * xi


@dataclass(frozen=True)
class ChannelTrace:
    distance: np.ndarray
    elevation: np.ndarray
    los: np.ndarray
    path_loss_db: np.ndarray
    shadow_db: np.ndarray
    loss_db: np.ndarray
    gain_sq: np.ndarray
    snr_db: np.ndarray
    snr_lin: np.ndarray
    usable: np.ndarray
    link_budget_db: float
    gamma_min_db: float
    rho: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def K(self) -> int:
        return self.snr_db.shape[0]

    @property
    def mean_snr_db(self) -> float:
        return float(np.mean(self.snr_db))

    @property
    def outage_count(self) -> int:
        return int(np.count_nonzero(~self.usable))

    def with_link_budget_db(self, budget_db: float) -> "ChannelTrace":
        """Same losses and shadowing, different P_t/(N_0 B)."""
        snr_db, snr_lin, usable = _snr_fields(self.loss_db, self.gain_sq, budget_db, self.gamma_min_db)
        return replace(self, snr_db=snr_db, snr_lin=snr_lin, usable=usable, link_budget_db=float(budget_db))

    def calibrated(self, target_mean_snr_db: float) -> "ChannelTrace":
        """Shift the link budget so the per-slot mean SNR (dB) equals the target."""
        return self.with_link_budget_db(target_mean_snr_db + float(np.mean(self.loss_db)))

    def rows(self) -> list[dict]:
        return [
            {
                "slot": k + 1,
                "d_m": float(self.distance[k]),
                "theta_rad": float(self.elevation[k]),
                "state": "LOS" if self.los[k] else "NLOS",
                "pl_db": float(self.path_loss_db[k]),
                "shadow_db": float(self.shadow_db[k]),
                "loss_db": float(self.loss_db[k]),
                "snr_db": float(self.snr_db[k]),
                "usable": int(self.usable[k]),
            }
            for k in range(self.K)
        ]


def usable_mask(snr_db, gamma_min_db: float) -> np.ndarray:
    return np.asarray(snr_db, dtype=float) >= gamma_min_db


def _snr_fields(loss_db, gain_sq, budget_db, gamma_min_db):
    snr_db = budget_db - loss_db
    snr_lin = 10.0 ** (budget_db / 10.0) * gain_sq
    return snr_db, snr_lin, usable_mask(snr_db, gamma_min_db)


def realize_trace(traj: TrajectoryPlan, env: EnvironmentParams, seed) -> ChannelTrace:
    """Realize one horizon of the A2G channel.

    Shadowing starts from the stationary law of the first slot's state and is
    advanced once per slot, so the generator is consumed in slot order.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    K = traj.horizon
    speeds = traj.slot_speeds()
    dist = np.empty(K)
    elev = np.empty(K)
    los = np.empty(K, dtype=bool)
    pl = np.empty(K)
    chi = np.empty(K)
    rhos = np.empty(K)
    for k in range(K):
        dist[k], elev[k] = distance_and_elevation(traj, k + 1)
        los[k] = los_state(elev[k], env)
        pl[k] = path_loss(dist[k], los[k], env)
    chi_prev = rng.normal(0.0, env.shadow_std(los[0]))
    for k in range(K):
        rhos[k] = correlation_coefficient(speeds[k], traj.slot_duration, env)
        chi[k] = step_shadowing(chi_prev, rhos[k], los[k], env, rng)
        chi_prev = chi[k]
    loss = pl + chi
    gain_sq = 10.0 ** (-loss / 10.0)
    budget = env.link_budget_db
    snr_db, snr_lin, usable = _snr_fields(loss, gain_sq, budget, env.snr_threshold_db)
    return ChannelTrace(
        distance=dist,
        elevation=elev,
        los=los,
        path_loss_db=pl,
        shadow_db=chi,
        loss_db=loss,
        gain_sq=gain_sq,
        snr_db=snr_db,
        snr_lin=snr_lin,
        usable=usable,
        link_budget_db=budget,
        gamma_min_db=env.snr_threshold_db,
        rho=rhos,
    )
