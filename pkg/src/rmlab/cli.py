"""Config-driven experiment runner.

Subcommands: run (full pipeline to CSV + measurement records), oracle
(exact statevector reference for the same config), calibrate (pulse
search plus noise report), validate (check a config and exit).

Repetitions are independent: each gets a seed derived from the master
seed by index, so results do not depend on the thread count, only on the
config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    config_to_dict,
    load_config,
    shipped_config_names,
    validate,
)
from .estimators import (
    hamiltonian_variance,
    observable_expectation,
    purity_estimate,
    results_to_csv,
)
from .pauli import ROTATION_ORDER, TWO_PI
from .protocol import (
    BIT_CONVENTION,
    EXACT_SHOTS,
    MeasurementRecord,
    run_ideal,
    run_pulsed,
    sample_unitaries,
    save_record,
)
from .pulses import (
    FluctuationModel,
    axis_fidelity,
    calibrate,
    default_realistic_params,
    golden_schedule,
    mc_rotation_stats,
    realistic_schedule,
    schedule_to_json,
    single_qubit_propagator,
)
from .scenarios import PreparedScenario, prepare_scenario
from .statevector import exact_purity, expectation
from .pauli import square_observable


def _sites_label(sites) -> str:
    return "sites=" + ",".join(str(s) for s in sites)


def _rep_seed(master: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, rep]).generate_state(1)[0])


def _one_repetition(args) -> tuple[int, dict[str, float], MeasurementRecord]:
    cfg, scen, rep = args
    prot = cfg.protocol
    seed = _rep_seed(cfg.seed, rep)
    rng = np.random.default_rng(seed)
    samples = sample_unitaries(cfg.scenario.num_sites, prot.n_unitaries, rng)
    if prot.mode == "ideal":
        record = run_ideal(scen.state, samples, prot.n_meas, readout=prot.readout, seed=seed)
    else:
        fluct = FluctuationModel(prot.eps_percent, prot.fluctuation_scope)
        record = run_pulsed(
            scen.state,
            samples,
            golden_schedule(),
            fluct=fluct,
            h_mod=scen.hamiltonian,
            n_meas=prot.n_meas,
            readout=prot.readout,
            seed=seed,
            tol=prot.tol,
        )
    values: dict[str, float] = {}
    for sites in cfg.targets.subsystems:
        values[f"purity:{_sites_label(sites)}"] = purity_estimate(record, sites).value
    if cfg.targets.energy:
        values["energy:model"] = observable_expectation(record, scen.hamiltonian)
    if cfg.targets.variance:
        values["variance:model"] = hamiltonian_variance(record, scen.hamiltonian).value
    return rep, values, record


def cmd_run(cfg: ExperimentConfig, out_dir: Path, threads: int) -> int:
    scen = prepare_scenario(cfg.scenario)  # prepared once, reused by every repetition
    prot = cfg.protocol
    work = [(cfg, scen, rep) for rep in range(prot.n_ave)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(_one_repetition, work))
    else:
        done = [_one_repetition(w) for w in work]
    done.sort(key=lambda item: item[0])

    out_dir.mkdir(parents=True, exist_ok=True)
    records_dir = out_dir / "records"
    records_dir.mkdir(exist_ok=True)
    for rep, _, record in done:
        save_record(record, records_dir / f"rep_{rep:03d}.ndjson")

    rows = []
    keys = list(done[0][1].keys())
    for key in keys:
        series = np.array([values[key] for _, values, _ in done])
        quantity, target = key.split(":", 1)
        rows.append(
            {
                "quantity": quantity,
                "target": target,
                "L": cfg.scenario.num_sites,
                "N_U": prot.n_unitaries,
                "N_meas": prot.n_meas,
                "eps_percent": prot.eps_percent,
                "mode": prot.mode,
                "value": float(series.mean()),
                "std": float(series.std(ddof=1)) if len(series) > 1 else 0.0,
                "seed": cfg.seed,
            }
        )
    (out_dir / "results.csv").write_text(results_to_csv(rows))
    _write_meta(cfg, out_dir, extra={"descriptor": scen.descriptor})
    print(f"wrote {out_dir / 'results.csv'} ({len(rows)} rows, {prot.n_ave} repetitions)")
    return 0


def cmd_oracle(cfg: ExperimentConfig, out_dir: Path) -> int:
    """Exact reference values for the configured scenario, no sampling."""
    scen = prepare_scenario(cfg.scenario)
    rows = []

    def row(quantity: str, target: str, value: float) -> dict:
        return {
            "quantity": quantity,
            "target": target,
            "L": cfg.scenario.num_sites,
            "N_U": 0,
            "N_meas": EXACT_SHOTS,
            "eps_percent": 0.0,
            "mode": "oracle",
            "value": value,
            "std": 0.0,
            "seed": cfg.seed,
        }

    for sites in cfg.targets.subsystems:
        rows.append(row("purity", _sites_label(sites), exact_purity(scen.state, sites)))
    if cfg.targets.energy:
        rows.append(row("energy", "model", expectation(scen.state, scen.hamiltonian)))
    if cfg.targets.variance:
        h = scen.hamiltonian
        eh = expectation(scen.state, h)
        eh2 = expectation(scen.state, square_observable(h))
        rows.append(row("variance", "model", (eh2 - eh * eh) / eh2))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "oracle.csv").write_text(results_to_csv(rows))
    _write_meta(cfg, out_dir, extra={"descriptor": scen.descriptor}, name="oracle_meta.json")
    print(f"wrote {out_dir / 'oracle.csv'} ({len(rows)} rows)")
    return 0


def cmd_calibrate(args) -> int:
    out = Path(args.out)
    if args.schedule == "golden":
        schedule = golden_schedule()
        source = "shipped golden schedule"
    else:
        result = calibrate(
            start=default_realistic_params(),
            objective=args.objective,
            fidelity_floor=args.floor,
            stats_targets=(0.53, 0.57, 0.55) if args.objective == "stats" else None,
            seed=args.seed,
            maxiter=args.maxiter,
        )
        schedule = realistic_schedule(result.params)
        source = f"calibrated ({result.n_evaluations} evaluations)"
    fids = [axis_fidelity(single_qubit_propagator(schedule, a), a) for a in (1, 2, 3)]
    report = {
        "source": source,
        "noiseless_fidelities": fids,
        "fidelity_floor": args.floor,
        "floor_satisfied": bool(min(fids) >= args.floor),
    }
    if args.mc_draws > 0:
        rng = np.random.default_rng(args.seed)
        stats = mc_rotation_stats(schedule, args.eps_percent, args.mc_draws, rng)
        report["mc"] = {
            "eps_percent": args.eps_percent,
            "n_draws": args.mc_draws,
            "half_means": list(stats.half_means),
            "half_stds": list(stats.half_stds),
        }
    out.mkdir(parents=True, exist_ok=True)
    (out / "schedule.json").write_text(schedule_to_json(schedule))
    (out / "calibration_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'schedule.json'}")
    print(f"fidelities: {', '.join(f'{f:.5f}' for f in fids)} (floor {args.floor})")
    if "mc" in report:
        means = ", ".join(f"{m:.4f}" for m in report["mc"]["half_means"])
        print(f"A_a/2 means at eps={args.eps_percent}%: {means}")
    return 0 if report["floor_satisfied"] else 1


def _write_meta(cfg: ExperimentConfig, out_dir: Path, extra: dict, name: str = "run_meta.json") -> None:
    meta = {
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "bit_convention": BIT_CONVENTION,
        "rotation_order": ROTATION_ORDER,
        "seed": cfg.seed,
        "version": __version__,
    }
    meta.update(extra)
    (out_dir / name).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rmlab",
        description="randomized-measurement toolbox for an interacting chain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a config end to end")
    run_p.add_argument("config", help="path to a JSON config, or a shipped name: "
                       + ", ".join(shipped_config_names()))
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the config output directory")
    run_p.add_argument("--threads", type=int, default=1)
    run_p.add_argument("--allow-large", action="store_true",
                       help="lift the N_U*N_meas shot budget")

    orc_p = sub.add_parser("oracle", help="exact reference values for a config")
    orc_p.add_argument("config")
    orc_p.add_argument("--seed", type=int, default=None)
    orc_p.add_argument("--out", default=None)

    val_p = sub.add_parser("validate", help="check a config, print all violations")
    val_p.add_argument("config")
    val_p.add_argument("--allow-large", action="store_true")

    cal_p = sub.add_parser("calibrate", help="pulse calibration and noise report")
    cal_p.add_argument("--schedule", choices=["golden", "search"], default="golden",
                       help="use the shipped schedule or search from scratch")
    cal_p.add_argument("--objective", choices=["fidelity", "stats"], default="fidelity")
    cal_p.add_argument("--floor", type=float, default=0.995)
    cal_p.add_argument("--maxiter", type=int, default=4000)
    cal_p.add_argument("--mc-draws", type=int, default=20_000)
    cal_p.add_argument("--eps-percent", type=float, default=3.0)
    cal_p.add_argument("--seed", type=int, default=7)
    cal_p.add_argument("--out", default="calibration")

    args = parser.parse_args(argv)

    if args.command == "calibrate":
        return cmd_calibrate(args)

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        for line in e.violations:
            print(f"config error: {line}", file=sys.stderr)
        return 1

    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out=args.out)

    allow_large = getattr(args, "allow_large", False)
    errs, warns = validate(cfg, allow_large=allow_large)
    for w in warns:
        print(f"warning: {w}", file=sys.stderr)
    if errs:
        for line in errs:
            print(f"config error: {line}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"ok: {config_hash(cfg)}")
        return 0
    out_dir = Path(cfg.out)
    if args.command == "oracle":
        return cmd_oracle(cfg, out_dir)
    return cmd_run(cfg, out_dir, max(1, args.threads))


if __name__ == "__main__":
    raise SystemExit(main())
