"""Command line front end.

Subcommands
-----------
single       run one platoon through a disturbance scenario, write trace CSVs
ring         run one ring-road simulation, write counter and event CSVs
sweep-single run every follower mix for a platoon size and score it
sweep-ring   run the density / policy / size / penetration grid
matrix       print the communication matrix of a platoon configuration
report       render text tables from persisted sweep output

Exit codes: 0 success, 2 bad configuration, 3 single run ended in a
collision, 4 sweep finished with failed runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import Config, ConfigFileError, load_config_file, spec_hash
from .experiments import (
    emit_reports,
    make_ring_spec,
    ring_run_metrics,
    sweep_ring,
    sweep_single,
)
from .metrics import min_gap, peak_abs_accel
from .ring import BASELINES, PLATOON_POLICIES, RingSpec, SpawnError, run_ring
from .scenarios import (
    BRAKING,
    SINUSOIDAL,
    ScenarioError,
    SingleScenario,
    run_single_platoon,
)
from .topology import (
    ConfigError,
    connectivity_matrix,
    extended_connectivity_matrix,
    parse_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLISION = 3
EXIT_PARTIAL = 4


def _load_params(path: str | None) -> Config:
    if path is None:
        return Config()
    return load_config_file(path)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_single(args) -> int:
    cfg = _load_params(args.params)
    scn = SingleScenario(kind=args.scenario, config=args.config,
                         duration=args.duration)
    trace = run_single_platoon(scn, cfg.dynamics, cfg.controllers,
                               control_dt=args.control_dt)
    h = spec_hash(cfg, {"command": "single", "config": args.config,
                        "scenario": args.scenario, "duration": args.duration})
    stem = os.path.join(args.out, "single_run", f"{args.config}_{args.scenario}")
    _write(stem + ".csv", trace.rows_csv(header_comment=f"spec_hash={h}"))
    _write(stem + "_events.csv", trace.events_csv())

    from .experiments import analysis_window
    facts = {"spec_hash": h, "config": args.config, "scenario": args.scenario,
             "collided": trace.terminated_by_collision}
    if not trace.terminated_by_collision:
        window = analysis_window(trace, scn)
        facts["window"] = [round(window.t0, 6), round(window.t1, 6)]
        facts["min_gap"] = {str(i): round(g, 6)
                            for i, g in min_gap(trace, window).items()}
        facts["peak_abs_accel"] = {str(i): round(a, 6)
                                   for i, a in peak_abs_accel(trace, window).items()}
    _write(stem + ".json", json.dumps(facts, indent=1, sort_keys=True) + "\n")
    print(f"wrote {stem}.csv ({trace.times.size} rows)")
    if trace.terminated_by_collision:
        print("run terminated by collision")
        return EXIT_COLLISION
    return EXIT_OK


def cmd_ring(args) -> int:
    cfg = _load_params(args.params)
    mob = cfg.mobility
    spec = RingSpec(
        density=args.density,
        penetration=args.penetration,
        platoon_size=args.platoon_size,
        platoon_policy=args.policy,
        baseline=args.baseline,
        circumference=mob.circumference,
        lanes=mob.lanes,
        speed_classes_kmh=mob.speed_classes_kmh,
        speed_jitter_kmh=mob.speed_jitter_kmh,
        duration=args.duration if args.duration is not None else mob.ring_duration,
        warmup=args.warmup if args.warmup is not None else mob.ring_warmup,
        seed=args.seed,
        volatility_sample_dt=mob.volatility_sample_dt,
        counter_window=mob.counter_window,
        record_full_trace=args.full_trace,
    )
    trace = run_ring(spec, cfg.dynamics, cfg.controllers)
    h = spec_hash(cfg, {"command": "ring", "density": args.density,
                        "penetration": args.penetration,
                        "platoon_size": args.platoon_size,
                        "policy": args.policy, "baseline": args.baseline,
                        "seed": args.seed, "duration": spec.duration,
                        "warmup": spec.warmup})
    stem = os.path.join(args.out, "ring_run", f"seed{args.seed}")
    _write(stem + "_counters.csv", trace.counters_csv())
    _write(stem + "_events.csv", trace.events_csv())
    metrics = {"spec_hash": h, **ring_run_metrics(trace)}
    _write(stem + ".json", json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    if args.full_trace and trace.full is not None:
        _write(stem + "_trace.csv", trace.full.rows_csv(header_comment=f"spec_hash={h}"))
    print(f"{trace.n_vehicles} vehicles, end_time={trace.end_time:.1f}s")
    if metrics["throughput"] is not None:
        print(f"road throughput: {metrics['throughput']:.0f} veh/h")
    if metrics["xi_median"] is not None:
        print(f"median speed volatility: {metrics['xi_median']:.4f}")
    if trace.terminated_by_collision:
        print("run terminated by collision")
        return EXIT_COLLISION
    return EXIT_OK


def cmd_sweep_single(args) -> int:
    cfg = _load_params(args.params)
    kinds = (SINUSOIDAL, BRAKING) if args.scenario == "both" else (args.scenario,)
    summary = sweep_single(args.platoon_size, args.out, kinds=kinds, cfg=cfg,
                           jobs=args.jobs, seed=args.seed,
                           duration=args.duration)
    for kind, info in summary["scenarios"].items():
        print(f"{kind}: {info['mixed_reports']} mixed"
              f" + {info['baseline_reports']} baseline reports")
        for key in ("worst_delta_a", "worst_delta_d", "best_eta"):
            if key in info:
                e = info[key]
                print(f"  {key}: {e['config']} = {e['value']:.3f}")
    if summary["failed"]:
        print(f"{len(summary['failed'])} runs failed")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep_ring(args) -> int:
    cfg = _load_params(args.params)
    summary = sweep_ring(
        args.out, cfg=cfg, repetitions=args.repetitions, jobs=args.jobs,
        seed=args.seed, dry_run=args.dry_run,
        duration=args.duration, warmup=args.warmup,
        densities=args.density if args.density else None,
    )
    if args.dry_run:
        print(f"{summary['cell_count']} cells, {summary['run_count']} runs")
        for cell_id in summary["cells"]:
            print(cell_id)
        return EXIT_OK
    collisions = sum(a["collisions"] for a in summary["cells"].values())
    print(f"{summary['cell_count']} cells x {summary['repetitions']} reps,"
          f" {collisions} collided runs")
    if summary["failed"]:
        print(f"{len(summary['failed'])} runs failed")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = parse_config(args.config)
    if args.extended:
        m = extended_connectivity_matrix(cfg, head_externally_guided=args.head_guided)
    else:
        m = connectivity_matrix(cfg)
    print(m.to_text())
    return EXIT_OK


def cmd_report(args) -> int:
    written = emit_reports(args.out)
    if not written:
        print(f"no sweep output found under {args.out}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixcacc",
        description="Mixed-platoon cooperative cruise control simulator.",
    )
    parser.add_argument("--params", help="parameter file (INI)", default=None)
    parser.add_argument("--out", help="output directory", default="out")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("single", help="run one platoon scenario")
    p.add_argument("config", help="platoon configuration string, e.g. -PLG")
    p.add_argument("--scenario", choices=[SINUSOIDAL, BRAKING],
                   default=SINUSOIDAL)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--control-dt", type=float, default=0.1)
    p.set_defaults(func=cmd_single)

    p = sub.add_parser("ring", help="run one ring-road simulation")
    p.add_argument("--density", type=float, required=True,
                   help="vehicles per km per direction")
    p.add_argument("--penetration", type=float, default=0.0)
    p.add_argument("--platoon-size", type=int, default=8)
    p.add_argument("--policy", choices=PLATOON_POLICIES, default="P")
    p.add_argument("--baseline", choices=BASELINES, default="ACC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--full-trace", action="store_true")
    p.set_defaults(func=cmd_ring)

    p = sub.add_parser("sweep-single", help="score every follower mix")
    p.add_argument("--platoon-size", "-n", type=int, default=4)
    p.add_argument("--scenario", choices=[SINUSOIDAL, BRAKING, "both"],
                   default="both")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_sweep_single)

    p = sub.add_parser("sweep-ring", help="run the ring experiment grid")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dry-run", action="store_true",
                   help="list the grid cells without running")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--density", type=float, action="append", default=None,
                   help="restrict to one or more densities")
    p.set_defaults(func=cmd_sweep_ring)

    p = sub.add_parser("matrix", help="print a communication matrix")
    p.add_argument("config")
    p.add_argument("--extended", action="store_true",
                   help="include the external reference column")
    p.add_argument("--head-guided", action="store_true",
                   help="head vehicle follows an external reference")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", help="render tables from sweep output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, SpawnError, ConfigFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
