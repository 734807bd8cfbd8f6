"""Command-line workbench.

    mpfusion simulate         evaluate detector presets at one operating point
    mpfusion sweep-snr        same, across an SNR grid
    mpfusion verify-linearity check that fused decision variables are linear
                              in the local scores (weight extraction report)
    mpfusion gaussianity      KS distance of conditioned decision variables
                              from moment-matched normals
    mpfusion optimize         linear fusion designs (per-node / network / blind)

Every subcommand takes --config (JSON run configuration), --seed, --out,
--trials and --threads; command-line values override the config file.  All
JSON reports carry a top-level spec_version; CSV numbers use 9 significant
digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import config as config_mod
from . import discrete, optimizer, pipeline, quadratic, rng, scenario
from .graph import MrfParams
from .performance import gaussianity_check
from .sensing import q_function

_DEFAULT_RHO_GRID = (-12.0, -9.0, -6.0, -3.0, 0.0)


# ---------------------------------------------------------------------------
# plumbing


def _sanitize(obj):
    """Make a payload json.dump-safe: numpy scalars/arrays out, NaN -> None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_json(path, payload: dict) -> None:
    body = {"spec_version": config_mod.FORMAT_VERSION}
    body.update(_sanitize(payload))
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_run(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    if args.seed is not None:
        cfg = config_mod.RunConfig(cfg.scenario, cfg.detector, cfg.evaluation,
                                   int(args.seed))
    ev = cfg.evaluation
    updates = {}
    if args.trials is not None:
        updates["trials"] = int(args.trials)
    if args.threads is not None:
        updates["threads"] = int(args.threads)
    if updates:
        from dataclasses import replace
        ev = replace(ev, **updates)
        cfg = config_mod.RunConfig(cfg.scenario, cfg.detector, ev, cfg.seed)
    return cfg


def _out_dir(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run configuration")
    sub.add_argument("--seed", type=int, default=None,
                     help="master seed (overrides config)")
    sub.add_argument("--out", default=None, help="output directory (default ./out)")
    sub.add_argument("--trials", type=int, default=None,
                     help="evaluation slots / sample count (overrides config)")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads for sweeps (overrides config)")


def _result_rows(results) -> list:
    rows = []
    for res in results:
        for (label, rho, delta, node, pf, pd, _se_pf, se_pd) in res.rows():
            rows.append((label, rho, delta, node, pf, pd, se_pd))
    return rows


_CSV_HEADER = ("method", "rho_db", "delta_rho_db", "node", "pf", "pd", "stderr")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_run(args)
    out = _out_dir(args)
    results = pipeline.evaluate_cell(
        cfg.scenario, cfg.evaluation.methods, cfg.seed,
        iterations=cfg.detector.iterations,
        training_labels=cfg.detector.training_labels,
        training_slots=cfg.evaluation.training_slots,
        calibration_slots=cfg.evaluation.calibration_slots,
        eval_slots=cfg.evaluation.trials)
    _write_csv(os.path.join(out, "results.csv"), _CSV_HEADER, _result_rows(results))
    _write_json(os.path.join(out, "report.json"), {
        "command": "simulate",
        "config": config_mod.to_dict(cfg),
        "results": [{"method": r.label,
                     "rho_db": r.rho_db,
                     "delta_rho_db": r.delta_rho_db,
                     "thresholds": r.thresholds,
                     "report": r.report.to_dict(),
                     "extras": r.extras} for r in results],
    })
    for r in results:
        pd_avg = np.nanmean(r.report.pd)
        pf_avg = np.nanmean(r.report.pf)
        print(f"{r.label:>10s}  rho={r.rho_db:+.1f} dB  "
              f"mean_pf={pf_avg:.4f}  mean_pd={pd_avg:.4f}")
    print(f"wrote {out}/results.csv and {out}/report.json")
    return 0


def cmd_sweep_snr(args) -> int:
    cfg = _load_run(args)
    out = _out_dir(args)
    grid = cfg.evaluation.rho_grid or _DEFAULT_RHO_GRID
    results = pipeline.sweep_rho(
        cfg.scenario, cfg.evaluation.methods, grid, cfg.seed,
        delta_rule=cfg.evaluation.delta_rule,
        proportional_factor=cfg.evaluation.proportional_factor,
        threads=cfg.evaluation.threads,
        iterations=cfg.detector.iterations,
        training_labels=cfg.detector.training_labels,
        training_slots=cfg.evaluation.training_slots,
        calibration_slots=cfg.evaluation.calibration_slots,
        eval_slots=cfg.evaluation.trials)
    _write_csv(os.path.join(out, "sweep.csv"), _CSV_HEADER, _result_rows(results))
    _write_json(os.path.join(out, "sweep.json"), {
        "command": "sweep-snr",
        "config": config_mod.to_dict(cfg),
        "rho_grid": list(grid),
        "results": [{"method": r.label,
                     "rho_db": r.rho_db,
                     "delta_rho_db": r.delta_rho_db,
                     "thresholds": r.thresholds,
                     "report": r.report.to_dict()} for r in results],
    })
    print(f"swept {len(grid)} operating points x "
          f"{len(cfg.evaluation.methods)} methods -> {out}/sweep.csv")
    return 0


def cmd_verify_linearity(args) -> int:
    cfg = _load_run(args)
    out = _out_dir(args)
    # --trials means random probes here, not slots; 200 is plenty
    trials = 200 if args.trials is None else int(args.trials)
    scn = cfg.scenario
    top = scn.topology()

    # node energies from the nominal templates; couplings random but weak
    # enough to keep every local curvature negative through the iterations
    templates = scenario.nominal_templates(scn)
    energies = scn.sample_count * templates ** 2
    draw = rng.stream(cfg.seed, rng.COUPLING_DRAW)
    scale = 0.05 * float(np.min(energies))
    couplings = {e: float(draw.uniform(-scale, scale)) for e in top.edges}
    params = MrfParams(top, couplings, convention=cfg.detector.coupling_convention)

    payload = {"command": "verify-linearity",
               "config": config_mod.to_dict(cfg),
               "couplings": {f"{i}-{j}": c for (i, j), c in couplings.items()},
               "energies": energies,
               "results": []}
    worst = 0.0
    gen = rng.stream(cfg.seed, rng.PROBES)
    for convention in (quadratic.PAPER, quadratic.EXACT):
        inst = quadratic.QuadraticInstance(top, params, tuple(energies),
                                           convention=convention)
        for iteration in range(1, 5):
            weights = quadratic.extract_weights(inst, iteration)
            residual = quadratic.verify_linearity(inst, iteration, trials, gen,
                                                  weights=weights)
            violations = weights.locality_violations(top)
            payload["results"].append({
                "convention": convention,
                "iteration": iteration,
                "max_residual": residual,
                "locality_violations": violations,
            })
            worst = max(worst, residual)
            if convention == quadratic.PAPER:
                weights.to_csv(os.path.join(out, f"weights_l{iteration}.csv"))
    payload["max_residual_overall"] = worst
    _write_json(os.path.join(out, "linearity.json"), payload)
    print(f"max |lambda - (W gamma + w0)| over all probes: {worst:.3e}")
    print(f"wrote {out}/linearity.json and per-iteration weight tables")
    return 0 if worst < 1e-9 else 1


def cmd_gaussianity(args) -> int:
    cfg = _load_run(args)
    out = _out_dir(args)
    trials = 10000 if args.trials is None else int(args.trials)
    pattern = tuple(int(b) for b in args.pattern.split(","))
    scn = cfg.scenario
    reports = []
    cdf_rows = []
    for algorithm in (discrete.MAX_PRODUCT, discrete.SUM_PRODUCT):
        lam, _, _ = pipeline.conditioned_samples(
            scn, algorithm, pattern, trials, cfg.seed,
            iterations=cfg.detector.iterations)
        for j in range(1, scn.node_count + 1):
            rep = gaussianity_check(lam[j - 1])
            reports.append({"algorithm": algorithm, "node": j,
                            "ks": rep.ks_statistic, "mean": rep.mean,
                            "std": rep.std, "count": rep.count})
            qs = np.linspace(0.0, 1.0, 257)[1:-1]
            values = np.quantile(lam[j - 1], qs)
            fitted = 1.0 - q_function((values - rep.mean) / rep.std)
            for q, val, fit in zip(qs, values, fitted):
                cdf_rows.append((algorithm, j, val, q, fit))
    _write_json(os.path.join(out, "gaussianity.json"), {
        "command": "gaussianity",
        "config": config_mod.to_dict(cfg),
        "pattern": list(pattern),
        "trials": trials,
        "reports": reports,
    })
    _write_csv(os.path.join(out, "cdf.csv"),
               ("algorithm", "node", "value", "empirical_cdf", "normal_cdf"),
               cdf_rows)
    worst = max(r["ks"] for r in reports)
    print(f"worst KS distance across engines/nodes: {worst:.4f}")
    print(f"wrote {out}/gaussianity.json and {out}/cdf.csv")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load_run(args)
    out = _out_dir(args)
    scn = cfg.scenario
    top = scn.topology()
    stats = scenario.scenario_stats(scn)
    moments = optimizer.moments_from_scenario(stats)

    hood = {j: optimizer.optimize_p2(moments[j], top, j, scn.far, seed=cfg.seed)
            for j in top.nodes}
    network = optimizer.optimize_p1(moments, top, scn.far, seed=cfg.seed)

    payload = {
        "command": "optimize",
        "config": config_mod.to_dict(cfg),
        "neighbourhood": {str(j): {"coefficients": s.coefficients,
                                   "threshold": s.threshold,
                                   "pd": s.pd,
                                   "converged": s.converged}
                          for j, s in hood.items()},
        "network": {"weights": network.weights,
                    "thresholds": network.thresholds,
                    "pf": network.pf,
                    "pd": network.pd,
                    "reward": network.reward,
                    "cost": network.cost,
                    "feasible": network.feasible,
                    "notes": list(network.notes)},
    }
    if args.blind:
        camp = scenario.run_campaign(scn, cfg.evaluation.calibration_slots,
                                     cfg.seed, index=1)
        blind = optimizer.blind_adapt(camp.gamma, top, scn.far,
                                      rounds=cfg.detector.majority_rounds,
                                      truth=camp.x, seed=cfg.seed)
        payload["blind"] = {
            "label_accuracy_initial": blind.initial_accuracy,
            "label_accuracy_final": blind.final_accuracy,
            "solutions": {str(j): {"coefficients": s.coefficients,
                                   "threshold": s.threshold,
                                   "pd": s.pd}
                          for j, s in blind.solutions.items()},
        }
    _write_json(os.path.join(out, "solution.json"), payload)
    mean_pd = float(np.mean([s.pd for s in hood.values()]))
    print(f"neighbourhood design: mean model pd = {mean_pd:.4f}")
    print(f"network design: reward = {network.reward:.4f}, "
          f"feasible = {network.feasible}")
    print(f"wrote {out}/solution.json")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpfusion",
        description="Distributed-detection workbench: message-passing fusion "
                    "of local spectrum-sensing scores on small Markov graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evaluate presets at one operating point")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-snr", help="evaluate presets across an SNR grid")
    _add_common(p)
    p.set_defaults(func=cmd_sweep_snr)

    p = sub.add_parser("verify-linearity",
                       help="extract fusion weights and report max residual")
    _add_common(p)
    p.set_defaults(func=cmd_verify_linearity)

    p = sub.add_parser("gaussianity",
                       help="KS distance of conditioned decision variables")
    _add_common(p)
    p.add_argument("--pattern", default="1,0",
                   help="pinned transmitter pattern, e.g. '1,0'")
    p.set_defaults(func=cmd_gaussianity)

    p = sub.add_parser("optimize", help="linear fusion designs")
    _add_common(p)
    p.add_argument("--blind", action="store_true",
                   help="also run the blind bootstrap design")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (config_mod.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
