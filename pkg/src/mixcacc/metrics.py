"""Comfort, safety and efficiency metrics over simulation traces.

Single-platoon metrics compare a mixed platoon against reference runs: the
acceleration margin against the all-ACC platoon, the gap margin against the
homogeneous platoon of each follower's own controller, and the occupancy gain
as the ratio of maximum platoon footprints.  Ring metrics are throughput from
roadside counters and per-vehicle speed volatility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_FLOOR = 5.0 / 3.6          # m/s, samples below this are near-standstill
BRAKE_DETECT_U = -7.2            # m/s^2, commanded input marking emergency onset


class MetricsError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


@dataclass(frozen=True)
class Window:
    t0: float
    t1: float

    @property
    def span(self) -> float:
        return self.t1 - self.t0


def sinusoidal_window(warmup: float, frequency: float, periods: int = 5) -> Window:
    """Analysis window: an integer number of leader periods after warmup."""
    return Window(warmup, warmup + periods / frequency)


def braking_window(trace, u_threshold: float = BRAKE_DETECT_U) -> Window:
    """Window from the head's emergency onset until the platoon has stopped.

    The window opens at the first tick where the head commands at most
    ``u_threshold`` and closes at the first subsequent tick where every
    vehicle is slower than 5 km/h; if the platoon never gets that slow the
    window runs to the end of the trace.
    """
    onset = np.flatnonzero(trace.ctrl_input[:, 0] <= u_threshold)
    if onset.size == 0:
        raise MetricsError("no emergency braking onset in trace")
    k0 = int(onset[0])
    slow = np.all(trace.speed[k0:] < SPEED_FLOOR, axis=1)
    stopped = np.flatnonzero(slow)
    k1 = k0 + int(stopped[0]) if stopped.size else len(trace.times) - 1
    return Window(float(trace.times[k0]), float(trace.times[k1]))


def _window_slice(trace, window: Window) -> np.ndarray:
    mask = trace.window_mask(window.t0, window.t1)
    if not mask.any():
        raise MetricsError(f"empty analysis window {window}")
    return mask


@dataclass
class PlatoonMetric:
    """Per-platoon scalar with the extremal follower attached."""

    value: float
    vehicle: int
    per_vehicle: dict[int, float] = field(default_factory=dict)


def peak_abs_accel(
    trace, window: Window, speed_floor: float | None = None
) -> dict[int, float]:
    """Largest absolute realized acceleration per follower inside the window.

    With ``speed_floor`` set, ticks where the vehicle is slower than the floor
    are ignored (jerky standstill samples are not representative).
    """
    mask = _window_slice(trace, window)
    out: dict[int, float] = {}
    for i in range(1, trace.n_vehicles):
        a = np.abs(trace.accel[mask, i])
        if speed_floor is not None:
            keep = trace.speed[mask, i] >= speed_floor
            a = a[keep]
        if a.size == 0:
            raise MetricsError(f"no usable acceleration samples for vehicle {i}")
        out[i] = float(a.max())
    return out


def delta_a(
    trace_c,
    trace_ref,
    window_c: Window,
    window_ref: Window | None = None,
    speed_floor: float | None = None,
) -> PlatoonMetric:
    """Acceleration margin of a platoon against the all-ACC reference.

    Positive per-vehicle values mean the studied controller needed milder
    accelerations than ACC in the same seat; the platoon value is the worst
    (smallest) follower margin.
    """
    window_ref = window_ref or window_c
    ref = peak_abs_accel(trace_ref, window_ref, speed_floor)
    own = peak_abs_accel(trace_c, window_c, speed_floor)
    if set(ref) != set(own):
        raise MetricsError("platoon size mismatch between trace and reference")
    per = {i: ref[i] - own[i] for i in own}
    worst = min(per, key=lambda i: (per[i], i))
    return PlatoonMetric(per[worst], worst, per)


def min_gap(trace, window: Window) -> dict[int, float]:
    """Smallest bumper gap per follower inside the window."""
    mask = _window_slice(trace, window)
    return {
        i: float(np.nanmin(trace.gap[mask, i]))
        for i in range(1, trace.n_vehicles)
    }


def delta_d(
    trace_c,
    homogeneous: dict[str, object],
    window_c: Window,
    windows_h: dict[str, Window],
) -> PlatoonMetric:
    """Gap margin of each follower against its own-controller homogeneous run.

    Negative per-vehicle values mean the mixed platoon compressed that
    follower's gap below what the controller achieves among its own kind.
    """
    own = min_gap(trace_c, window_c)
    per: dict[int, float] = {}
    for i in range(1, trace_c.n_vehicles):
        letter = trace_c.controllers[i]
        if letter not in homogeneous:
            raise MetricsError(f"missing homogeneous reference for controller {letter!r}")
        ref = homogeneous[letter]
        ref_gaps = min_gap(ref, windows_h[letter])
        if i not in ref_gaps:
            raise MetricsError(f"homogeneous reference shorter than platoon at vehicle {i}")
        per[i] = own[i] - ref_gaps[i]
    worst = min(per, key=lambda i: (per[i], i))
    return PlatoonMetric(per[worst], worst, per)


def max_platoon_occupancy(trace, window: Window) -> float:
    """Largest total follower gap length inside the window (lengths excluded)."""
    mask = _window_slice(trace, window)
    total = np.nansum(trace.gap[mask, 1:], axis=1)
    return float(total.max())


def eta(trace_c, trace_ref, window_c: Window, window_ref: Window | None = None) -> float:
    """Occupancy gain: maximum ACC footprint over maximum studied footprint."""
    window_ref = window_ref or window_c
    own = max_platoon_occupancy(trace_c, window_c)
    ref = max_platoon_occupancy(trace_ref, window_ref)
    if own <= 0.0:
        raise MetricsError("degenerate occupancy in studied trace")
    return ref / own


@dataclass
class MetricReport:
    """Flat result record for one (config, scenario) cell."""

    config: str
    scenario: str
    delta_a: float
    delta_a_vehicle: int
    delta_d: float
    delta_d_vehicle: int
    eta: float
    window: tuple[float, float] = (0.0, 0.0)
    collided: bool = False

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "scenario": self.scenario,
            "delta_a": None if math.isnan(self.delta_a) else round(self.delta_a, 6),
            "delta_a_vehicle": self.delta_a_vehicle,
            "delta_d": None if math.isnan(self.delta_d) else round(self.delta_d, 6),
            "delta_d_vehicle": self.delta_d_vehicle,
            "eta": None if math.isnan(self.eta) else round(self.eta, 6),
            "window": [round(self.window[0], 6), round(self.window[1], 6)],
            "collided": self.collided,
        }


# ---------------------------------------------------------------------------
# Ring metrics
# ---------------------------------------------------------------------------

def throughput_series(
    counter_times: np.ndarray,
    counter_devices: np.ndarray,
    devices: tuple[str, ...],
    t_start: float,
    t_end: float,
    window_s: float = 15.0,
) -> dict[str, np.ndarray]:
    """Per-device vehicle flux in veh/h over consecutive counting windows.

    Returns the window start times, one series per device, and the road-level
    series (mean across devices).
    """
    n_windows = int(math.floor((t_end - t_start) / window_s))
    if n_windows < 1:
        raise MetricsError("observation period shorter than one counting window")
    edges = t_start + np.arange(n_windows + 1) * window_s
    out: dict[str, np.ndarray] = {"t": edges[:-1]}
    per_device = []
    for dev in devices:
        sel = counter_times[counter_devices == dev]
        sel = sel[(sel >= t_start) & (sel < edges[-1])]
        counts, _ = np.histogram(sel, bins=edges)
        series = counts * (3600.0 / window_s)
        out[dev] = series
        per_device.append(series)
    out["road"] = np.mean(per_device, axis=0)
    return out


def mean_throughput(series: dict[str, np.ndarray]) -> float:
    """Average road-level throughput across counting windows, veh/h."""
    return float(series["road"].mean())


def volatility(speed_samples: np.ndarray) -> np.ndarray:
    """Per-vehicle speed volatility: sample std over absolute mean.

    ``speed_samples`` has shape (samples, vehicles).  Vehicles with a zero
    mean speed have undefined volatility and get NaN.
    """
    if speed_samples.ndim != 2 or speed_samples.shape[0] < 2:
        raise MetricsError("need at least two speed samples per vehicle")
    mean = speed_samples.mean(axis=0)
    std = speed_samples.std(axis=0, ddof=1)
    out = np.full(mean.shape, np.nan)
    ok = np.abs(mean) > 0.0
    out[ok] = std[ok] / np.abs(mean[ok])
    return out


def boxplot_stats(values: np.ndarray) -> dict[str, float | list[float]]:
    """Quartiles, median, 1.5 IQR whiskers and outliers of a sample."""
    vals = np.asarray(values, dtype=float)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise MetricsError("no finite values to summarize")
    q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_lim = q1 - 1.5 * iqr
    hi_lim = q3 + 1.5 * iqr
    inside = vals[(vals >= lo_lim) & (vals <= hi_lim)]
    whisk_lo = float(inside.min()) if inside.size else float(q1)
    whisk_hi = float(inside.max()) if inside.size else float(q3)
    outliers = vals[(vals < lo_lim) | (vals > hi_lim)]
    return {
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "whisker_low": whisk_lo,
        "whisker_high": whisk_hi,
        "outliers": sorted(float(x) for x in outliers),
    }
