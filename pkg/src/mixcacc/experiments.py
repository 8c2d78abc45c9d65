"""Experiment campaigns: composition sweeps and the ring-road grid.

Single-platoon sweeps enumerate every follower mix for a platoon size (or a
seeded sample for very large spaces), run both disturbance scenarios and
score each mix against the reference runs.  Ring sweeps cover the full
density, policy, platoon size and penetration grid.  Both persist one JSON
file per run so that interrupted campaigns resume without recomputation, and
both embed the resolved parameter hash in every output.
"""

from __future__ import annotations

import itertools
import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import Config, spec_hash
from .metrics import (
    MetricReport,
    MetricsError,
    SPEED_FLOOR,
    Window,
    braking_window,
    max_platoon_occupancy,
    mean_throughput,
    min_gap,
    peak_abs_accel,
    sinusoidal_window,
    throughput_series,
    volatility,
)
from .ring import BASELINES, DEVICES, PLATOON_POLICIES, RingSpec, run_ring
from .scenarios import BRAKING, SINUSOIDAL, SingleScenario, run_single_platoon

MIX_LETTERS = "GLP"          # follower alphabet, kept in lexicographic order
BASELINE_LETTERS = "AGLP"
FULL_ENUMERATION_MAX = 8     # platoon sizes enumerated exhaustively
SAMPLED_CONFIG_COUNT = 1000


def mixed_configs(n: int) -> list[str]:
    """All follower mixes of an independent-head platoon, lexicographic."""
    return [
        "-" + "".join(t)
        for t in itertools.product(MIX_LETTERS, repeat=n - 1)
    ]


def baseline_configs(n: int) -> list[str]:
    return ["-" + letter * (n - 1) for letter in BASELINE_LETTERS]


def sampled_configs(n: int, count: int = SAMPLED_CONFIG_COUNT, seed: int = 0) -> list[str]:
    """Distinct random follower mixes for spaces too large to enumerate."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < count:
        cfg = "-" + "".join(rng.choice(list(MIX_LETTERS), size=n - 1))
        if cfg not in seen:
            seen.add(cfg)
            out.append(cfg)
    return out


def configs_for_sweep(n: int, seed: int = 0) -> list[str]:
    if n - 1 <= 0:
        raise ValueError("platoon size must be at least 2")
    if n <= FULL_ENUMERATION_MAX:
        return mixed_configs(n)
    return sampled_configs(n, SAMPLED_CONFIG_COUNT, seed)


# ---------------------------------------------------------------------------
# Single-platoon evaluation
# ---------------------------------------------------------------------------

@dataclass
class ReferenceData:
    """Per-scenario reference curves extracted from the homogeneous runs."""

    kind: str
    acc_peaks: dict[int, float]
    acc_occupancy: float
    min_gaps: dict[str, dict[int, float]] = field(default_factory=dict)


def scenario_for(kind: str, config: str, duration: float | None = None) -> SingleScenario:
    return SingleScenario(kind=kind, config=config, duration=duration)


def analysis_window(trace, scn: SingleScenario) -> Window:
    if scn.kind == SINUSOIDAL:
        return sinusoidal_window(scn.warmup, scn.frequency)
    return braking_window(trace)


def _speed_floor(kind: str) -> float | None:
    return SPEED_FLOOR if kind == BRAKING else None


def build_reference(kind: str, n: int, cfg: Config, duration: float | None = None):
    """Run the four homogeneous platoons and collect the reference curves."""
    traces = {}
    for letter in BASELINE_LETTERS:
        scn = scenario_for(kind, "-" + letter * (n - 1), duration)
        traces[letter] = (run_single_platoon(scn, cfg.dynamics, cfg.controllers), scn)
    acc_trace, acc_scn = traces["A"]
    if acc_trace.terminated_by_collision:
        raise MetricsError("reference ACC platoon collided; cannot build references")
    acc_window = analysis_window(acc_trace, acc_scn)
    floor = _speed_floor(kind)
    ref = ReferenceData(
        kind=kind,
        acc_peaks=peak_abs_accel(acc_trace, acc_window, floor),
        acc_occupancy=max_platoon_occupancy(acc_trace, acc_window),
    )
    for letter, (trace, scn) in traces.items():
        if trace.terminated_by_collision:
            raise MetricsError(f"homogeneous {letter} reference platoon collided")
        ref.min_gaps[letter] = min_gap(trace, analysis_window(trace, scn))
    return ref, traces


def build_report(trace, scn: SingleScenario, ref: ReferenceData) -> MetricReport:
    """Score one platoon trace against the reference curves."""
    if trace.terminated_by_collision:
        return MetricReport(
            config=trace.config, scenario=scn.kind,
            delta_a=float("nan"), delta_a_vehicle=-1,
            delta_d=float("nan"), delta_d_vehicle=-1,
            eta=float("nan"), window=(float("nan"), float("nan")),
            collided=True,
        )
    window = analysis_window(trace, scn)
    floor = _speed_floor(scn.kind)
    own_peaks = peak_abs_accel(trace, window, floor)
    per_a = {i: ref.acc_peaks[i] - own_peaks[i] for i in own_peaks}
    worst_a = min(per_a, key=lambda i: (per_a[i], i))
    own_gaps = min_gap(trace, window)
    per_d = {}
    for i, g in own_gaps.items():
        letter = trace.controllers[i]
        per_d[i] = g - ref.min_gaps[letter][i]
    worst_d = min(per_d, key=lambda i: (per_d[i], i))
    occupancy = max_platoon_occupancy(trace, window)
    return MetricReport(
        config=trace.config, scenario=scn.kind,
        delta_a=per_a[worst_a], delta_a_vehicle=worst_a,
        delta_d=per_d[worst_d], delta_d_vehicle=worst_d,
        eta=ref.acc_occupancy / occupancy,
        window=(window.t0, window.t1),
    )


def _single_worker(args):
    config, kind, duration, ref, cfg = args
    scn = scenario_for(kind, config, duration)
    trace = run_single_platoon(scn, cfg.dynamics, cfg.controllers)
    return config, build_report(trace, scn, ref)


def _atomic_write_json(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _load_if_current(path: str, expect_hash: str):
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None
    if payload.get("spec_hash") != expect_hash:
        return None
    return payload


def sweep_single(
    n: int,
    out_dir: str,
    kinds: tuple[str, ...] = (SINUSOIDAL, BRAKING),
    cfg: Config | None = None,
    jobs: int = 1,
    seed: int = 0,
    duration: float | None = None,
) -> dict:
    """Run and score every follower mix plus the four baselines per scenario.

    One JSON report per (scenario, config) is written under ``out_dir``;
    existing reports with a matching parameter hash are reused.
    """
    cfg = cfg or Config()
    configs = configs_for_sweep(n, seed)
    summary: dict = {"n": n, "scenarios": {}, "failed": []}
    for kind in kinds:
        h = spec_hash(cfg, {"sweep": "single", "n": n, "kind": kind,
                            "duration": duration, "seed": seed})
        kind_dir = os.path.join(out_dir, "single", kind)
        os.makedirs(os.path.join(kind_dir, "mixed"), exist_ok=True)
        os.makedirs(os.path.join(kind_dir, "baseline"), exist_ok=True)
        ref, base_traces = build_reference(kind, n, cfg, duration)

        reports: dict[str, dict] = {}
        for bcfg in baseline_configs(n):
            path = os.path.join(kind_dir, "baseline", f"{bcfg}.json")
            cached = _load_if_current(path, h)
            if cached is None:
                trace, scn = base_traces[bcfg[1]]
                rep = build_report(trace, scn, ref)
                cached = {"spec_hash": h, "role": "baseline", **rep.to_json_dict()}
                _atomic_write_json(path, cached)
            reports[f"baseline/{bcfg}"] = cached

        todo = []
        for mcfg in configs:
            path = os.path.join(kind_dir, "mixed", f"{mcfg}.json")
            cached = _load_if_current(path, h)
            if cached is not None:
                reports[f"mixed/{mcfg}"] = cached
            else:
                todo.append(mcfg)

        jobs_args = [(c, kind, duration, ref, cfg) for c in todo]
        if jobs > 1 and len(jobs_args) > 1:
            with multiprocessing.Pool(jobs) as pool:
                results = pool.map(_single_worker, jobs_args)
        else:
            results = [_single_worker(a) for a in jobs_args]
        for mcfg, rep in results:
            path = os.path.join(kind_dir, "mixed", f"{mcfg}.json")
            payload = {"spec_hash": h, "role": "mixed", **rep.to_json_dict()}
            _atomic_write_json(path, payload)
            reports[f"mixed/{mcfg}"] = payload

        mixed = {k: v for k, v in reports.items() if v["role"] == "mixed"
                 and not v["collided"]}
        worst = {}
        if mixed:
            wa = min(mixed, key=lambda k: (mixed[k]["delta_a"], k))
            wd = min(mixed, key=lambda k: (mixed[k]["delta_d"], k))
            be = max(mixed, key=lambda k: (mixed[k]["eta"], k))
            worst = {
                "worst_delta_a": {"config": mixed[wa]["config"],
                                  "value": mixed[wa]["delta_a"],
                                  "vehicle": mixed[wa]["delta_a_vehicle"]},
                "worst_delta_d": {"config": mixed[wd]["config"],
                                  "value": mixed[wd]["delta_d"],
                                  "vehicle": mixed[wd]["delta_d_vehicle"]},
                "best_eta": {"config": mixed[be]["config"],
                             "value": mixed[be]["eta"]},
            }
        summary["scenarios"][kind] = {
            "spec_hash": h,
            "mixed_reports": sum(1 for v in reports.values() if v["role"] == "mixed"),
            "baseline_reports": sum(1 for v in reports.values() if v["role"] == "baseline"),
            "collisions": sorted(v["config"] for v in reports.values() if v["collided"]),
            **worst,
        }
    _atomic_write_json(os.path.join(out_dir, "single", "summary.json"), summary)
    return summary


# ---------------------------------------------------------------------------
# Ring grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingCell:
    """One cell of the ring experiment grid."""

    density: float
    category: str          # baseline or platoon
    policy: str            # ACC / IDM or P / L / G / MIX
    platoon_size: int = 0
    penetration: float = 0.0

    @property
    def cell_id(self) -> str:
        if self.category == "baseline":
            return f"d{self.density:g}-{self.policy}"
        return (
            f"d{self.density:g}-{self.policy}"
            f"-N{self.platoon_size}-R{self.penetration:g}"
        )


def ring_cells(
    densities=(10, 20, 40, 60, 80, 100, 120, 140, 160, 180),
    sizes=(4, 8, 16),
    rates=(0.25, 0.5, 0.75),
    policies=PLATOON_POLICIES,
    baselines=BASELINES,
) -> list[RingCell]:
    """Full factorial ring grid: per density, the baselines plus every
    (policy, platoon size, penetration) combination."""
    cells = []
    for d in densities:
        for b in baselines:
            cells.append(RingCell(density=d, category="baseline", policy=b))
        for pol in policies:
            for n in sizes:
                for r in rates:
                    cells.append(RingCell(
                        density=d, category="platoon", policy=pol,
                        platoon_size=n, penetration=r,
                    ))
    return cells


def run_seed(master: int, cell_index: int, rep: int) -> int:
    """Stable per-run seed derived from the master seed."""
    ss = np.random.SeedSequence([master, cell_index, rep])
    return int(ss.generate_state(1)[0])


def make_ring_spec(
    cell: RingCell,
    cfg: Config,
    seed: int,
    duration: float | None = None,
    warmup: float | None = None,
) -> RingSpec:
    mob = cfg.mobility
    return RingSpec(
        density=cell.density,
        penetration=cell.penetration if cell.category == "platoon" else 0.0,
        platoon_size=cell.platoon_size if cell.category == "platoon" else 8,
        platoon_policy=cell.policy if cell.category == "platoon" else "P",
        baseline=cell.policy if cell.category == "baseline" else "ACC",
        circumference=mob.circumference,
        lanes=mob.lanes,
        speed_classes_kmh=mob.speed_classes_kmh,
        speed_jitter_kmh=mob.speed_jitter_kmh,
        duration=duration if duration is not None else mob.ring_duration,
        warmup=warmup if warmup is not None else mob.ring_warmup,
        seed=seed,
        volatility_sample_dt=mob.volatility_sample_dt,
        counter_window=mob.counter_window,
    )


def ring_run_metrics(trace) -> dict:
    """Scalar observables of one ring run."""
    out = {
        "n_vehicles": trace.n_vehicles,
        "collided": trace.terminated_by_collision,
        "end_time": round(trace.end_time, 6),
        "throughput": None,
        "mean_speed": None,
        "xi_median": None,
        "xi": [],
    }
    spec = trace.spec
    if trace.counter_times.size and trace.end_time > spec.warmup + spec.counter_window:
        series = throughput_series(
            trace.counter_times, trace.counter_devices, DEVICES,
            spec.warmup, trace.end_time, spec.counter_window,
        )
        out["throughput"] = round(mean_throughput(series), 6)
    if trace.speed_samples.shape[0] >= 2:
        xi = volatility(trace.speed_samples)
        out["xi"] = [round(float(x), 6) for x in xi]
        out["xi_median"] = round(float(np.nanmedian(xi)), 6)
        out["mean_speed"] = round(float(trace.speed_samples.mean()), 6)
    return out


def _ring_worker(args):
    cell, rep, seed, duration, warmup, cfg = args
    spec = make_ring_spec(cell, cfg, seed, duration, warmup)
    trace = run_ring(spec, cfg.dynamics, cfg.controllers)
    return cell, rep, seed, ring_run_metrics(trace)


def confidence_halfwidth(values, level: float = 0.95) -> float:
    """Half-width of the Student-t confidence interval of the mean."""
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        return float("nan")
    crit = stats.t.ppf(0.5 + level / 2.0, vals.size - 1)
    return float(crit * vals.std(ddof=1) / math.sqrt(vals.size))


def sweep_ring(
    out_dir: str,
    cfg: Config | None = None,
    repetitions: int = 10,
    jobs: int = 1,
    seed: int = 0,
    dry_run: bool = False,
    duration: float | None = None,
    warmup: float | None = None,
    densities=None,
    sizes=None,
    rates=None,
) -> dict:
    """Run the ring grid; resumable, one JSON per (cell, repetition)."""
    cfg = cfg or Config()
    mob = cfg.mobility
    cells = ring_cells(
        densities if densities is not None else mob.densities,
        sizes if sizes is not None else mob.platoon_sizes,
        rates if rates is not None else mob.penetration_rates,
    )
    if dry_run:
        return {
            "cells": [c.cell_id for c in cells],
            "cell_count": len(cells),
            "run_count": len(cells) * repetitions,
            "dry_run": True,
        }
    h = spec_hash(cfg, {"sweep": "ring", "duration": duration,
                        "warmup": warmup, "seed": seed})
    results: dict[str, list[dict]] = {c.cell_id: [] for c in cells}
    todo = []
    failed = []
    for ci, cell in enumerate(cells):
        cell_dir = os.path.join(out_dir, "ring", cell.cell_id)
        os.makedirs(cell_dir, exist_ok=True)
        for rep in range(repetitions):
            path = os.path.join(cell_dir, f"rep{rep}.json")
            cached = _load_if_current(path, h)
            if cached is not None:
                results[cell.cell_id].append(cached)
            else:
                todo.append((cell, rep, run_seed(seed, ci, rep), duration, warmup, cfg))

    def persist(cell, rep, run_seed_value, metrics):
        payload = {
            "spec_hash": h, "cell": cell.cell_id, "rep": rep,
            "seed": run_seed_value, **metrics,
        }
        path = os.path.join(out_dir, "ring", cell.cell_id, f"rep{rep}.json")
        _atomic_write_json(path, payload)
        results[cell.cell_id].append(payload)

    if jobs > 1 and len(todo) > 1:
        with multiprocessing.Pool(jobs) as pool:
            for cell, rep, s, metrics in pool.imap_unordered(_ring_worker, todo):
                persist(cell, rep, s, metrics)
    else:
        for args in todo:
            try:
                cell, rep, s, metrics = _ring_worker(args)
            except Exception as exc:  # keep sweeping, report at the end
                failed.append({"cell": args[0].cell_id, "rep": args[1],
                               "error": str(exc)})
                continue
            persist(cell, rep, s, metrics)

    aggregate = {}
    for cell in cells:
        runs = sorted(results[cell.cell_id], key=lambda r: r["rep"])
        ok = [r for r in runs if not r["collided"] and r["throughput"] is not None]
        thr = [r["throughput"] for r in ok]
        aggregate[cell.cell_id] = {
            "runs": len(runs),
            "collisions": sum(1 for r in runs if r["collided"]),
            "throughput_mean": round(float(np.mean(thr)), 3) if thr else None,
            "throughput_ci95": round(confidence_halfwidth(thr), 3) if len(thr) > 1 else None,
            "xi_median": round(float(np.median([r["xi_median"] for r in ok
                                                if r["xi_median"] is not None])), 6)
            if ok else None,
        }
    summary = {
        "spec_hash": h,
        "cell_count": len(cells),
        "repetitions": repetitions,
        "cells": aggregate,
        "failed": failed,
    }
    _atomic_write_json(os.path.join(out_dir, "ring", "summary.json"), summary)
    return summary


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def emit_reports(out_dir: str) -> list[str]:
    """Render text tables from persisted sweep results; returns paths written."""
    written = []
    single_summary = os.path.join(out_dir, "single", "summary.json")
    if os.path.exists(single_summary):
        with open(single_summary, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        lines = []
        for kind, info in sorted(summary.get("scenarios", {}).items()):
            lines.append(f"scenario: {kind}  (spec_hash={info['spec_hash']})")
            lines.append(
                f"  reports: {info['mixed_reports']} mixed"
                f" + {info['baseline_reports']} baseline"
            )
            for key in ("worst_delta_a", "worst_delta_d", "best_eta"):
                if key in info:
                    e = info[key]
                    veh = f" (vehicle {e['vehicle']})" if "vehicle" in e else ""
                    lines.append(f"  {key}: {e['config']} = {e['value']:.3f}{veh}")
            if info.get("collisions"):
                lines.append(f"  collisions: {', '.join(info['collisions'])}")
            lines.append("")
        path = os.path.join(out_dir, "single", "table.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines))
        written.append(path)

    ring_summary = os.path.join(out_dir, "ring", "summary.json")
    if os.path.exists(ring_summary):
        with open(ring_summary, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        lines = [f"spec_hash={summary['spec_hash']}"]
        header = f"{'cell':32s} {'runs':>4s} {'crash':>5s} {'thr veh/h':>10s} {'ci95':>8s} {'xi_med':>8s}"
        lines.append(header)
        for cell_id, agg in summary["cells"].items():
            thr = "-" if agg["throughput_mean"] is None else f"{agg['throughput_mean']:.0f}"
            ci = "-" if agg["throughput_ci95"] is None else f"{agg['throughput_ci95']:.0f}"
            xi = "-" if agg["xi_median"] is None else f"{agg['xi_median']:.3f}"
            lines.append(
                f"{cell_id:32s} {agg['runs']:4d} {agg['collisions']:5d}"
                f" {thr:>10s} {ci:>8s} {xi:>8s}"
            )
        path = os.path.join(out_dir, "ring", "table.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(path)
    return written
