"""Command-line entry point.

    tweezer-transfer {profile,topology,sweep,trajectory} --config run.toml
        [--seed N] [--out DIR] [--workers N]

Each subcommand writes CSV files plus ``run.log`` (the validated
configuration) into the output directory. On failure a single JSON line
``{"error": ..., "key": ..., "message": ...}`` goes to stderr and the exit
status is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfiguration, load_config
from .csvio import comment_line, write_csv
from .dynamics import propagate
from .ensemble import (
    DIAGNOSTIC_FIELDS,
    run_sweep,
    sample_initial_state,
    thermal_efficiency,
    trajectory_rng,
)
from .events import TransitTracker
from .potential import analyze_topology, profile_samples, vertical_profile

log = logging.getLogger("tweezer_transfer")


def cmd_profile(cfg: RunConfiguration):
    w0, u0 = cfg.trap.beam1.waist, cfg.trap.beam1.depth
    rows = []
    for d in cfg.separations:
        trap = cfg.trap.with_separation(d * w0)
        z = profile_samples(trap, cfg.profile_half_width, cfg.profile_points)
        for zi, ui in zip(z, vertical_profile(trap, z)):
            rows.append((d, zi / w0, ui / u0))
    return [
        write_csv(
            cfg.output_dir / "profile.csv",
            ["separation_w0", "z_w0", "potential_U0"],
            rows,
            cfg.seed,
        )
    ]


def cmd_topology(cfg: RunConfiguration):
    w0, u0 = cfg.trap.beam1.waist, cfg.trap.beam1.depth
    rows = []
    for d in cfg.separations:
        topo = analyze_topology(cfg.trap.with_separation(d * w0))
        minima = list(topo.minima_z) + [None] * (2 - len(topo.minima_z))
        rows.append(
            (
                d,
                topo.classification.value,
                len(topo.minima_z),
                *(None if m is None else m / w0 for m in minima),
                topo.barrier_height / u0,
                None if topo.barrier_top is None else topo.barrier_top / u0,
            )
        )
    header = [
        "separation_w0",
        "classification",
        "n_minima",
        "minimum1_z_w0",
        "minimum2_z_w0",
        "barrier_height_U0",
        "barrier_top_U0",
    ]
    return [write_csv(cfg.output_dir / "topology.csv", header, rows, cfg.seed)]


def cmd_sweep(cfg: RunConfiguration):
    hist = run_sweep(
        cfg.trap,
        cfg.separations,
        cfg.sampler,
        cfg.integrator,
        energy_bin_edges=cfg.energy_bin_edges,
        workers=cfg.workers,
    )
    p = hist.probabilities()
    se = hist.standard_errors()
    edges = hist.energy_bin_edges
    hist_rows = []
    for i, d in enumerate(hist.separation_values):
        for j in range(len(edges) - 1):
            empty = bool(np.ma.getmaskarray(p)[i, j])
            hist_rows.append(
                (
                    d,
                    edges[j],
                    edges[j + 1],
                    int(hist.transits[i, j]),
                    int(hist.transfers[i, j]),
                    None if empty else float(p[i, j]),
                    None if empty else float(se[i, j]),
                )
            )
    curve = thermal_efficiency(hist, cfg.thermal)
    eff = curve.efficiency
    has_peak = eff.count() > 0 and eff.max() > 0
    norm = curve.normalize().efficiency if has_peak else None
    eff_rows = []
    for i, d in enumerate(curve.separation_values):
        missing = bool(np.ma.getmaskarray(eff)[i])
        eff_rows.append(
            (
                d,
                None if missing else float(eff[i]),
                None if missing or norm is None else float(norm[i]),
            )
        )
    diag_rows = [
        (d, *(int(v) for v in hist.diagnostics[i]))
        for i, d in enumerate(hist.separation_values)
    ]
    out = cfg.output_dir
    return [
        write_csv(
            out / "histogram.csv",
            [
                "separation_w0",
                "energy_lo_U0",
                "energy_hi_U0",
                "transits",
                "transfers",
                "probability",
                "probability_stderr",
            ],
            hist_rows,
            cfg.seed,
        ),
        write_csv(
            out / "efficiency.csv",
            ["separation_w0", "efficiency", "efficiency_normalized"],
            eff_rows,
            cfg.seed,
        ),
        write_csv(
            out / "diagnostics.csv",
            ["separation_w0", *DIAGNOSTIC_FIELDS],
            diag_rows,
            cfg.seed,
        ),
    ]


def cmd_trajectory(cfg: RunConfiguration):
    w0 = cfg.trap.beam1.waist
    trap = cfg.trap.with_separation(cfg.trajectory_separation * w0)
    rng = trajectory_rng(cfg.seed, 0, cfg.trajectory_index)
    state = sample_initial_state(rng, trap, cfg.sampler)
    params = replace(cfg.integrator, max_steps=cfg.trajectory_steps)
    tracker = TransitTracker(trap)
    report = propagate(state, trap, params, tracker, record_every=cfg.record_every)
    log.info(
        "trajectory: %s after %d steps, %d transits, energy drift %.3e U0",
        report.cause.value,
        report.n_steps,
        len(report.transits),
        report.energy_drift,
    )
    traj_header = ["time_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s", "energy_J"]
    transit_header = [
        "entry_beam",
        "exit_beam",
        "transferred",
        "entry_energy_J",
        "exit_energy_J",
        "entry_time_s",
        "exit_time_s",
    ]
    transit_rows = [
        (
            int(r.entry_beam),
            int(r.exit_beam),
            int(r.transferred),
            r.entry_energy,
            r.exit_energy,
            r.entry_time,
            r.exit_time,
        )
        for r in report.transits
    ]
    out = cfg.output_dir
    return [
        write_csv(out / "trajectory.csv", traj_header, report.samples.tolist(), cfg.seed),
        write_csv(out / "transits.csv", transit_header, transit_rows, cfg.seed),
    ]


COMMANDS = {
    "profile": cmd_profile,
    "topology": cmd_topology,
    "sweep": cmd_sweep,
    "trajectory": cmd_trajectory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tweezer-transfer",
        description="Transfer of classical particles between two crossed Gaussian beams.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker processes for sweeps")
    return parser


def _attach_log(cfg: RunConfiguration) -> logging.Handler:
    path = cfg.output_dir / "run.log"
    path.write_text(comment_line(cfg.seed) + "\n", encoding="utf-8")
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = None
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.out, args.workers)
        try:
            cfg.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create {cfg.output_dir}: {exc.strerror or exc}") from exc
        handler = _attach_log(cfg)
        for key, value in cfg.to_natural_units().items():
            log.info("config %s = %r", key, value)
        for path in COMMANDS[args.subcommand](cfg):
            log.info("wrote %s", Path(path).name)
    except Exception as exc:  # noqa: BLE001 - reported as one machine-readable line
        err = {
            "error": type(exc).__name__,
            "key": getattr(exc, "key", None),
            "message": str(exc),
        }
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
