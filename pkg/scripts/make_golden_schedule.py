#!/usr/bin/env python3
"""Calibrate and freeze the shipped rotation schedule.

Regenerates src/rmlab/data/golden_schedule.json deterministically:

1. Start from the sequential two-window construction with a coarse trim
   found by a 2-D scan: drive area scaled by 0.97, phasing shift and
   drive-window detuning split scaled by 0.87, phasing window stretched
   to 0.0609 us.
2. Nelder-Mead over (omega_amp, delta_amp, d2, d3) pulls the
   noise-averaged means of A_alpha/2 toward (0.53, 0.57, 0.55) while a
   penalty holds every noiseless axis fidelity at or above 0.995. The
   target vector sits inside the feasibility boundary: fidelity >= 0.995
   caps how far the means can rise above the ideal 0.5, so the published
   center values are approached from below, within their windows.
3. Export on the uniform 0.5 ns grid, then re-verify everything from the
   loaded JSON: fidelities, then a 10^5-draw Monte Carlo of the A_alpha/2
   means and spreads under 3 percent amplitude noise.

The artifact is only overwritten when all checks pass.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rmlab.pulses import (
    RealisticParams,
    calibrate,
    mc_rotation_stats,
    realistic_schedule,
    schedule_from_json,
    schedule_to_json,
)

OUT = Path(__file__).resolve().parent.parent / "src" / "rmlab" / "data" / "golden_schedule.json"

FIDELITY_FLOOR = 0.995
MEAN_CENTERS = (0.55, 0.56, 0.58)
MEAN_TOL = 0.05
STD_CENTERS = (0.06, 0.05, 0.04)
STD_TOL = 0.03
STATS_TARGETS = (0.53, 0.57, 0.55)
EPS_PERCENT = 3.0
N_DRAWS = 100_000
MC_SEED = 2026


def main() -> int:
    t0 = time.time()
    base = RealisticParams(omega_start=0.0609, delta_start=0.0609)
    start = replace(
        base,
        omega_amp=base.omega_amp * 0.97,
        d2=base.d2 * 0.87,
        delta_amp=base.delta_amp * 0.87,
    )
    result = calibrate(
        start=start,
        objective="stats",
        stats_targets=STATS_TARGETS,
        fidelity_floor=FIDELITY_FLOOR,
        maxiter=4000,
        free=("omega_amp", "delta_amp", "d2", "d3"),
    )
    print(f"calibrated in {result.n_evaluations} evaluations, "
          f"objective {result.objective:.2e}, fidelities "
          f"{np.round(result.fidelities, 6)}")

    text = schedule_to_json(realistic_schedule(result.params))
    loaded = schedule_from_json(text)

    # every acceptance check runs on the loaded grid schedule, not the
    # analytic one, so grid smearing is covered
    stats = mc_rotation_stats(
        loaded, EPS_PERCENT, N_DRAWS, np.random.default_rng(MC_SEED)
    )
    print(f"grid fidelities {np.round(stats.fidelities, 6)}")
    print(f"MC means {np.round(stats.half_means, 4)} "
          f"stds {np.round(stats.half_stds, 4)} ({N_DRAWS} draws)")

    failures = []
    for a, fid in enumerate(stats.fidelities, start=1):
        if fid < FIDELITY_FLOOR:
            failures.append(f"fidelity[{a}] = {fid:.6f} < {FIDELITY_FLOOR}")
    for a, (m, c) in enumerate(zip(stats.half_means, MEAN_CENTERS), start=1):
        if abs(m - c) > MEAN_TOL:
            failures.append(f"mean[{a}] = {m:.4f} outside {c} +- {MEAN_TOL}")
    for a, (s, c) in enumerate(zip(stats.half_stds, STD_CENTERS), start=1):
        if abs(s - c) > STD_TOL:
            failures.append(f"std[{a}] = {s:.4f} outside {c} +- {STD_TOL}")
    if failures:
        for line in failures:
            print("FAIL:", line)
        return 1

    doc = json.loads(text)
    doc["calibration"] = {
        "knobs": {k: getattr(result.params, k) for k in RealisticParams._FIELDS},
        "noiseless_fidelities": list(stats.fidelities),
        "mc_half_means": list(stats.half_means),
        "mc_half_stds": list(stats.half_stds),
        "eps_percent": EPS_PERCENT,
        "n_draws": N_DRAWS,
        "mc_seed": MC_SEED,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc) + "\n")
    print(f"wrote {OUT} in {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
