"""Serialization of runs: trajectory CSV, iteration CSV and JSON summaries.

Floats in CSV files are written with 17 significant digits so that every
value survives a round trip; JSON floats use Python's shortest round-trip
representation. Nothing time-dependent is written, so repeated runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import tomli

from . import _kernels
from .flight import TrajectoryLog
from .scenario import ScenarioConfig, dump_config

__all__ = [
    "TRAJECTORY_HEADER",
    "ITERATION_HEADER",
    "trajectory_rows",
    "write_trajectory",
    "write_iterations",
    "summary",
    "write_json",
    "min_distances",
    "comparison",
]

TRAJECTORY_HEADER = ["step", "t", "qx", "qy", "vx", "vy", "ax", "ay", "step_energy_J", "step_bits", "ee_cum"]
ITERATION_HEADER = ["outer_step", "iter", "objective", "grad_norm", "penalty"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def trajectory_rows(traj: TrajectoryLog) -> list[list]:
    """One row per time index 0..S.

    Rows 0..S-1 describe the control interval starting there. The last row
    holds the terminal state, zero acceleration, the kinetic-energy term as
    its energy and no bits, so the column sums equal the trajectory totals.
    """
    dt = traj.config.dt
    rows = []
    bits_cum = energy_cum = 0.0
    for rec in traj.steps:
        bits = float(rec.bits.sum())
        bits_cum += bits
        energy_cum += rec.step_energy
        rows.append([rec.step, rec.step * dt, *rec.position, *rec.velocity, *rec.accel,
                     rec.step_energy, bits, bits_cum / energy_cum, *rec.snr])
    s = len(traj.steps)
    energy_cum += traj.kinetic_energy
    rows.append([s, s * dt, *traj.positions[-1], *traj.velocities[-1], 0.0, 0.0,
                 traj.kinetic_energy, 0.0, bits_cum / energy_cum, *traj.terminal_snr])
    return rows


def write_trajectory(path, traj: TrajectoryLog) -> None:
    k = len(traj.terminal_snr)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER + [f"snr_u{i}" for i in range(k)])
        for row in trajectory_rows(traj):
            w.writerow([_fmt(v) for v in row])


def write_iterations(path, logs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ITERATION_HEADER)
        for outer, lg in enumerate(logs):
            for i in range(len(lg)):
                w.writerow([_fmt(outer), _fmt(i), _fmt(lg.objective[i]), _fmt(lg.grad_norm[i]),
                            _fmt(lg.penalty[i])])


def scenario_echo(config: ScenarioConfig) -> dict:
    return tomli.loads(dump_config(config))


def summary(traj: TrajectoryLog, mode: str, source: str, logs=None) -> dict:
    cfg = traj.config
    out = {
        "mode": mode,
        "scenario_source": source,
        "seed": cfg.rng_seed,
        "backend": "numba" if _kernels.USE_NUMBA else "numpy",
        "num_steps": cfg.num_steps,
        "total_bits": traj.total_bits,
        "total_energy": traj.total_energy,
        "kinetic_energy": traj.kinetic_energy,
        "ee": traj.ee,
        "terminal_error": traj.terminal_error,
        "max_speed": float(np.hypot(*traj.velocities.T).max()),
        "min_speed": float(np.hypot(*traj.velocities.T).min()),
        "max_accel": float(np.hypot(*traj.controls.T).max()),
    }
    if logs is not None:
        out["solver_iterations"] = int(sum(len(lg) for lg in logs))
    out["scenario"] = scenario_echo(cfg)
    return out


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n")


def min_distances(traj: TrajectoryLog) -> list[float]:
    """Closest approach of the flown path (time samples) to every cluster centroid."""
    centers = np.asarray(traj.config.clusters.centers, dtype=float)
    d = np.linalg.norm(traj.positions[:, None, :] - centers[None], axis=2)
    return [float(x) for x in d.min(axis=0)]


def _totals(traj: TrajectoryLog) -> dict:
    return {"total_bits": traj.total_bits, "total_energy": traj.total_energy, "ee": traj.ee,
            "terminal_error": traj.terminal_error}


def comparison(empc: TrajectoryLog, baseline: TrajectoryLog) -> dict:
    return {
        "empc": _totals(empc),
        "baseline": _totals(baseline),
        "ee_ratio": empc.ee / baseline.ee,
        "step_bit_gap": [float(x) for x in empc.step_bits() - baseline.step_bits()],
        "dominant_cluster": empc.config.clusters.dominant_index(),
        "min_distance_to_centroid": {"empc": min_distances(empc), "baseline": min_distances(baseline)},
    }
