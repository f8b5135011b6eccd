"""Command-line entry point: ``uavsem <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import METHODS, ConfigError, ExperimentConfig, load_config
from .experiment import (
    RESULT_COLUMNS,
    CalibrationError,
    calibrate,
    make_context,
    predict,
    run_method,
    run_sweep,
    trial_seed,
)
from .imageio import load_corpus, load_image
from .scheduler import NoUsableSlots, allocate_budgets, make_blocks, schedule_blocks, slot_weights

log = logging.getLogger("uavsem")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3

TRACE_COLUMNS = ("slot", "d_m", "theta_rad", "state", "pl_db", "shadow_db", "loss_db", "snr_db", "usable")
SCHEDULE_COLUMNS = ("block_id", "kind", "r", "slot")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(rows, columns, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r[k]) for k in columns})


def _emit(rows, columns, out: Optional[str], filename: str) -> None:
    if out is None:
        write_csv(rows, columns, sys.stdout)
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    with (path / filename).open("w", newline="") as fh:
        write_csv(rows, columns, fh)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "method", None) is not None:
        overrides["method"] = args.method
    return dataclasses.replace(cfg, **overrides).validate()


def _trace(cfg: ExperimentConfig, seed: int):
    ctx_seed = trial_seed(seed, 0)
    from .channel import realize_trace
    from .phy import derive_seed

    trace = realize_trace(cfg.traj, cfg.env, derive_seed(ctx_seed, 0))
    if cfg.target_mean_snr_db is not None:
        trace = calibrate(trace, cfg.target_mean_snr_db, cfg.link_budget_range_db)
    return trace


def cmd_channel_trace(args) -> int:
    cfg = _config(args)
    _emit(_trace(cfg, cfg.seed).rows(), TRACE_COLUMNS, args.out, "channel_trace.csv")
    return EXIT_OK


def cmd_schedule(args) -> int:
    cfg = _config(args)
    _, image = load_corpus(cfg.corpus)[0]
    ctx = make_context(cfg, image, trial_seed(cfg.seed, 0), cfg.target_mean_snr_db)
    pred = predict(cfg, ctx, cfg.sigma_err_db)
    blocks = make_blocks(cfg.profile.r_s, cfg.profile.r_t)
    try:
        alloc = allocate_budgets(slot_weights(pred, cfg.gamma_min_db), cfg.n_tot)
    except NoUsableSlots:
        log.warning("no predicted-usable slot: every block unscheduled")
        rows = [{"block_id": b.id, "kind": b.kind, "r": b.length, "slot": "-"} for b in blocks]
    else:
        rows = schedule_blocks(blocks, alloc, pred, cfg.slot_order).rows()
    _emit(rows, SCHEDULE_COLUMNS, args.out, "schedule.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.image:
        name, image = Path(args.image).stem, load_image(args.image)
    else:
        name, image = load_corpus(cfg.corpus)[0]
    ctx = make_context(cfg, image, trial_seed(cfg.seed, 0), cfg.target_mean_snr_db, name)
    report = run_method(cfg, ctx, cfg.method).as_dict()
    report["psnr"] = "INFINITE" if math.isinf(report["psnr"]) else report["psnr"]
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def write_plot(rows, path: Path, xlabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "uavsem"
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for metric, ax in zip(("psnr", "ssim"), axes):
        for m in dict.fromkeys(r["method"] for r in rows):
            pts = [r for r in rows if r["method"] == m and r["trials"] > 0]
            ax.errorbar(
                [r["value"] for r in pts],
                [r[f"{metric}_mean"] for r in pts],
                yerr=[r[f"{metric}_se"] for r in pts],
                marker="o",
                capsize=3,
                label=m,
            )
        ax.set_xlabel(xlabel)
        ax.set_ylabel(metric.upper() + (" (dB)" if metric == "psnr" else ""))
        ax.grid(alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sweep(args, sweep_var: str) -> int:
    cfg = _config(args)
    grid = cfg.sweep.snr_grid_db if sweep_var == "mean_snr_db" else cfg.sweep.sigma_grid_db
    res = run_sweep(cfg, sweep_var, grid)
    rows = res.rows(cfg.sweep.methods)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "results.csv").open("w", newline="") as fh:
        write_csv(rows, RESULT_COLUMNS, fh)
    meta = {
        "version": __version__,
        "command": args.command,
        "sweep_var": sweep_var,
        "grid": list(grid),
        "config": cfg.to_dict(),
        "calibration_failures": {repr(k): v for k, v in sorted(res.failures.items())},
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if args.plot:
        label = "mean realized SNR (dB)" if sweep_var == "mean_snr_db" else "prediction error std (dB)"
        write_plot(rows, out / "plot.svg", label)
    buf = io.StringIO()
    write_csv(rows, RESULT_COLUMNS, buf)
    sys.stdout.write(buf.getvalue())
    for v, msg in sorted(res.failures.items()):
        log.error("grid point %s: %s", v, msg)
    return EXIT_CALIBRATION if res.failures else EXIT_OK


def cmd_sweep_snr(args) -> int:
    return _sweep(args, "mean_snr_db")


def cmd_sweep_mismatch(args) -> int:
    return _sweep(args, "sigma_err_db")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavsem", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False, out_required=False):
        sp.add_argument("--config", help="TOML experiment configuration")
        sp.add_argument("--seed", type=int, help="override the configured 64-bit seed")
        sp.add_argument("--out", required=out_required, help="output directory")
        if trials:
            sp.add_argument("--trials", type=int, help="trials per grid point")
            sp.add_argument("--workers", type=int, help="worker processes")
            sp.add_argument("--plot", action="store_true", help="also write plot.svg")

    sp = sub.add_parser("simulate", help="run one trial and print its report")
    common(sp)
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--image", help="PNG/PPM image (default: first corpus image)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep-snr", help="sweep the mean realized SNR")
    common(sp, trials=True, out_required=True)
    sp.set_defaults(func=cmd_sweep_snr)

    sp = sub.add_parser("sweep-mismatch", help="sweep the prediction error std")
    common(sp, trials=True, out_required=True)
    sp.set_defaults(func=cmd_sweep_mismatch)

    sp = sub.add_parser("channel-trace", help="dump one realized channel trace as CSV")
    common(sp)
    sp.set_defaults(func=cmd_channel_trace)

    sp = sub.add_parser("schedule", help="print the block-to-slot assignment as CSV")
    common(sp)
    sp.set_defaults(func=cmd_schedule)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(logging.INFO)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except CalibrationError as e:
        log.error("calibration error: %s", e)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
