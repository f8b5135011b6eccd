"""End-to-end trials, paired-seed sweeps and result aggregation."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import codec, phy
from .channel import ChannelTrace, realize_trace
from .config import ExperimentConfig
from .imageio import load_corpus, to_unit
from .metrics import psnr, ssim
from .predictor import PredictedTrace, PredictorInput, predict_geometric, predict_noisy_oracle
from .scheduler import (
    NoUsableSlots,
    allocate_budgets,
    make_blocks,
    schedule_blocks,
    slot_weights,
    uniform_budgets,
)

CHANNEL_STREAM = 0
PHY_STREAM = 1
PREDICTOR_STREAM = 2

RESULT_COLUMNS = ("method", "sweep_var", "value", "psnr_mean", "psnr_se", "ssim_mean", "ssim_se", "trials")


class CalibrationError(RuntimeError):
    """Requested mean SNR needs a link budget outside the configured range."""


@dataclass
class TrialResult:
    method: str
    psnr: float
    ssim: float
    delivered: int
    erased: int
    unscheduled: int
    structure_lost: bool
    samples_tx: int
    per_slot_used: list[int]
    mean_snr_db: float
    outage_slots: int
    no_usable_slots: bool = False
    image: str = ""
    trial: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrialContext:
    """Everything shared by all methods in one paired trial."""

    trace: ChannelTrace
    image: np.ndarray
    blocks: codec.BlockSet
    trial_seed: int
    image_name: str = ""
    trial: int = 0
    predictions: dict = field(default_factory=dict)


def trial_seed(base_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, np.uint64)[0])


def calibrate(trace: ChannelTrace, target_db: float, budget_range=(-math.inf, math.inf)) -> ChannelTrace:
    out = trace.calibrated(target_db)
    lo, hi = budget_range
    if not (lo <= out.link_budget_db <= hi) or not math.isfinite(out.link_budget_db):
        raise CalibrationError(
            f"mean SNR {target_db} dB needs link budget {out.link_budget_db:.1f} dB outside [{lo}, {hi}]"
        )
    return out


def make_context(cfg: ExperimentConfig, image: np.ndarray, seed: int, target_db: Optional[float], name="", trial=0):
    trace = realize_trace(cfg.traj, cfg.env, phy.derive_seed(seed, CHANNEL_STREAM))
    if target_db is not None:
        trace = calibrate(trace, target_db, cfg.link_budget_range_db)
    return TrialContext(trace, image, codec.encode(image, cfg.profile), seed, name, trial)


def predict(cfg: ExperimentConfig, ctx: TrialContext, sigma_err_db: float) -> PredictedTrace:
    key = (cfg.predictor, sigma_err_db)
    if key not in ctx.predictions:
        if cfg.predictor == "noisy_oracle":
            pred = predict_noisy_oracle(ctx.trace, sigma_err_db, phy.derive_seed(ctx.trial_seed, PREDICTOR_STREAM))
        else:
            env = cfg.env.with_link_budget_db(ctx.trace.link_budget_db)
            first = cfg.traj.waypoints[:1]
            inp = PredictorInput(ctx.trace.snr_db[:1], first, cfg.traj, None)
            pred = predict_geometric(inp, env)
        ctx.predictions[key] = pred
    return ctx.predictions[key]


def _metrics(x: np.ndarray, x_hat: np.ndarray) -> tuple[float, float]:
    a, b = to_unit(x), to_unit(x_hat)
    return psnr(a, b), ssim(a, b)


def _outage_row(cfg, ctx, method) -> TrialResult:
    x_hat = np.zeros_like(ctx.image)
    p, s = _metrics(ctx.image, x_hat)
    n_blocks = 1 if method == "single_stream" else 1 + codec.GRID * codec.GRID
    return TrialResult(
        method, p, s, 0, n_blocks, n_blocks, True, 0, [0] * cfg.K,
        ctx.trace.mean_snr_db, ctx.trace.outage_count, True, ctx.image_name, ctx.trial,
    )


def run_block_method(cfg: ExperimentConfig, ctx: TrialContext, method: str, pred: PredictedTrace) -> TrialResult:
    blocks = make_blocks(cfg.profile.r_s, cfg.profile.r_t)
    if method == "uniform_sched":
        alloc = uniform_budgets(cfg.K, cfg.n_tot)
    else:
        try:
            alloc = allocate_budgets(slot_weights(pred, cfg.gamma_min_db), cfg.n_tot)
        except NoUsableSlots:
            return _outage_row(cfg, ctx, method)
    sched = schedule_blocks(blocks, alloc, pred, cfg.slot_order)
    vectors = {b.id: ctx.blocks.block(b.id) for b in blocks}
    outcomes = phy.transmit_schedule(sched, vectors, ctx.trace.snr_db, cfg.gamma_min_db, ctx.trial_seed)
    rx = phy.assemble_reception(blocks, outcomes, cfg.profile, ctx.image.shape)
    mode = "zero_fill" if method == "no_generation" else "conditional"
    x_hat = codec.decode(codec.complete_missing(rx, mode, cfg.completion_scale))
    p, s = _metrics(ctx.image, x_hat)
    delivered = sum(o.status is phy.Status.DELIVERED for o in outcomes)
    unscheduled = len(sched.unscheduled)
    return TrialResult(
        method, p, s, delivered, len(blocks) - delivered, unscheduled, rx.structure_lost,
        int(sched.per_slot_used.sum()), [int(v) for v in sched.per_slot_used],
        ctx.trace.mean_snr_db, ctx.trace.outage_count, False, ctx.image_name, ctx.trial,
    )


def stream_layout(n: int, slots: Sequence[int]) -> np.ndarray:
    """Slot index of every stream symbol: round-robin over ``slots``."""
    slots = np.asarray(slots, dtype=int)
    return slots[np.arange(n) % slots.size]


def run_single_stream(cfg: ExperimentConfig, ctx: TrialContext, pred: PredictedTrace) -> TrialResult:
    """One entangled coefficient stream, interleaved over the predicted-usable slots.

    A single power-normalisation scale covers the whole stream; symbols landing
    in realized-outage slots are erased (decoded as zeros).
    """
    slots = np.flatnonzero(pred.usable)
    if slots.size == 0:
        return _outage_row(cfg, ctx, "single_stream")
    vec = codec.encode_stream(ctx.image, cfg.n_tot)
    where = stream_layout(vec.size, slots)
    scale = phy.block_scale(vec)
    received = np.zeros_like(vec)
    used = np.zeros(cfg.K, dtype=int)
    for k in slots:
        idx = np.flatnonzero(where == k)
        used[k] = idx.size
        snr_db = float(ctx.trace.snr_db[k])
        if snr_db < cfg.gamma_min_db:
            continue
        rng = np.random.default_rng(phy.derive_seed(ctx.trial_seed, PHY_STREAM, int(k)))
        received[idx] = vec[idx] + scale * phy.awgn(idx.size, 10.0 ** (snr_db / 10.0), rng)
    x_hat = codec.decode_stream(received, ctx.image.shape)
    p, s = _metrics(ctx.image, x_hat)
    lost = int(np.count_nonzero(~ctx.trace.usable[where]))
    return TrialResult(
        "single_stream", p, s, int(lost == 0), int(lost > 0), 0, False, int(used.sum()),
        [int(v) for v in used], ctx.trace.mean_snr_db, ctx.trace.outage_count, False, ctx.image_name, ctx.trial,
    )


def run_method(cfg: ExperimentConfig, ctx: TrialContext, method: str, sigma_err_db: Optional[float] = None) -> TrialResult:
    pred = predict(cfg, ctx, cfg.sigma_err_db if sigma_err_db is None else sigma_err_db)
    if method == "single_stream":
        return run_single_stream(cfg, ctx, pred)
    return run_block_method(cfg, ctx, method, pred)


def run_trial(
    cfg: ExperimentConfig,
    image: np.ndarray,
    seed: int,
    method: Optional[str] = None,
    target_db: Optional[float] = None,
    sigma_err_db: Optional[float] = None,
) -> TrialResult:
    """One image through channel -> predictor -> scheduler -> phy -> codec."""
    target = cfg.target_mean_snr_db if target_db is None else target_db
    ctx = make_context(cfg, image, seed, target)
    return run_method(cfg, ctx, method or cfg.method, sigma_err_db)


# -- sweeps --


@dataclass(frozen=True)
class WorkUnit:
    sweep_var: str
    value: float
    trial: int


def _run_unit(args) -> list[TrialResult] | str:
    cfg, unit, corpus = args
    name, image = corpus[unit.trial % len(corpus)]
    seed = trial_seed(cfg.seed, unit.trial)
    if unit.sweep_var == "mean_snr_db":
        target, sigma = unit.value, cfg.sigma_err_db
    else:
        target, sigma = cfg.sweep.mismatch_snr_db, unit.value
    try:
        ctx = make_context(cfg, image, seed, target, name, unit.trial)
    except CalibrationError as e:
        return str(e)
    return [run_method(cfg, ctx, m, sigma) for m in cfg.sweep.methods]


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class SweepResult:
    sweep_var: str
    grid: tuple[float, ...]
    trials: dict = field(default_factory=dict)  # (method, value) -> [TrialResult]
    failures: dict = field(default_factory=dict)  # value -> message

    def rows(self, methods: Sequence[str]) -> list[dict]:
        out = []
        for m in methods:
            for v in self.grid:
                res = self.trials.get((m, v), [])
                pm, ps = mean_se([r.psnr for r in res])
                sm, ss = mean_se([r.ssim for r in res])
                out.append(
                    {
                        "method": m,
                        "sweep_var": self.sweep_var,
                        "value": v,
                        "psnr_mean": pm,
                        "psnr_se": ps,
                        "ssim_mean": sm,
                        "ssim_se": ss,
                        "trials": len(res),
                    }
                )
        return out


def run_sweep(
    cfg: ExperimentConfig,
    sweep_var: str,
    grid: Sequence[float],
    trials: Optional[int] = None,
    workers: Optional[int] = None,
    corpus=None,
) -> SweepResult:
    """Paired-seed sweep: every method and grid point sees trial t's seed and image."""
    if not grid:
        raise ValueError("sweep grid is empty")
    if sweep_var not in ("mean_snr_db", "sigma_err_db"):
        raise ValueError(f"unknown sweep variable {sweep_var!r}")
    n = cfg.trials if trials is None else trials
    workers = cfg.workers if workers is None else workers
    corpus = corpus if corpus is not None else load_corpus(cfg.corpus)
    units = [WorkUnit(sweep_var, float(v), t) for v in grid for t in range(n)]
    args = [(cfg, u, corpus) for u in units]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_unit, args, chunksize=max(1, len(args) // (4 * workers))))
    else:
        results = [_run_unit(a) for a in args]
    out = SweepResult(sweep_var, tuple(float(v) for v in grid))
    # ordered reduction by (grid point, trial); executor.map preserves input order
    for u, res in zip(units, results):
        if isinstance(res, str):
            out.failures.setdefault(u.value, res)
            continue
        for r in res:
            out.trials.setdefault((r.method, u.value), []).append(r)
    for v in out.failures:
        for m in cfg.sweep.methods:
            out.trials.pop((m, v), None)
    return out


def sweep_snr(cfg: ExperimentConfig, **kw) -> SweepResult:
    return run_sweep(cfg, "mean_snr_db", cfg.sweep.snr_grid_db, **kw)


def sweep_mismatch(cfg: ExperimentConfig, **kw) -> SweepResult:
    return run_sweep(cfg, "sigma_err_db", cfg.sweep.sigma_grid_db, **kw)
