"""Single-platoon disturbance experiments on an open road.

The platoon head is driven by a commanded speed profile (sinusoidal speed
perturbation or an emergency braking ramp) and does not react to the platoon.
Followers run the controller given by the composition string.  Controllers and
beacons run on a 10 Hz grid while the vehicle dynamics integrate at 100 Hz.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .controllers import (
    Beacon,
    ControllerSet,
    GsblMode,
    acc_control,
    cruise_accel,
    gsbl_accel_head,
    gsbl_control,
    gsbl_mode_update,
    idm_control,
    path_control,
    ploeg_control,
)
from .dynamics import (
    DynamicsParams,
    STANDSTILL_BRAKE,
    STANDSTILL_GAP,
    STANDSTILL_SPEED,
    VehicleState,
    step_vehicle,
)
from .topology import (
    EXTERNAL_REF,
    INDEPENDENT,
    PlatoonConfig,
    elect_ego_leaders,
    parse_config,
)

CONTROL_DT = 0.1       # controller and beacon period [s]
PROFILE_GAIN = 0.5     # speed correction gain of the profile-driven head [1/s]

SINUSOIDAL = "sinusoidal"
BRAKING = "braking"

_DEFAULT_DURATION = {SINUSOIDAL: 100.0, BRAKING: 60.0}


class ScenarioError(ValueError):
    """Raised for scenario setups that cannot be simulated."""


@dataclass
class SingleScenario:
    """Parameters of one open-road platoon experiment."""

    kind: str
    config: str
    duration: float | None = None
    warmup: float = 30.0
    base_speed: float = 27.78       # m/s, 100 km/h
    amplitude: float = 2.78         # m/s, sinusoidal speed swing
    frequency: float = 0.1          # Hz
    brake_decel: float = 8.0        # m/s^2, emergency ramp
    brake_onset: float = 30.0       # s
    initial_gap_offsets: dict[int, float] | None = None

    def __post_init__(self):
        if self.kind not in (SINUSOIDAL, BRAKING):
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.duration is None:
            self.duration = _DEFAULT_DURATION[self.kind]
        if self.duration <= 0.0:
            raise ScenarioError("duration must be positive")
        if self.kind == SINUSOIDAL and self.frequency <= 0.0:
            raise ScenarioError("sinusoidal scenario needs a positive frequency")


def leader_target_speed(scn: SingleScenario, t: float) -> float:
    """Commanded speed of the profile-driven head at time t."""
    if scn.kind == SINUSOIDAL:
        return scn.base_speed + scn.amplitude * math.sin(
            2.0 * math.pi * scn.frequency * t
        )
    if t < scn.brake_onset:
        return scn.base_speed
    return max(0.0, scn.base_speed - scn.brake_decel * (t - scn.brake_onset))


def leader_target_accel(scn: SingleScenario, t: float) -> float:
    """Feed-forward acceleration of the commanded profile."""
    if scn.kind == SINUSOIDAL:
        w = 2.0 * math.pi * scn.frequency
        return scn.amplitude * w * math.cos(w * t)
    if t < scn.brake_onset:
        return 0.0
    return -scn.brake_decel if leader_target_speed(scn, t) > 0.0 else 0.0


@dataclass
class TraceEvent:
    time: float
    kind: str               # collision, mode_switch, lane_change, stale_beacon
    veh_a: int
    veh_b: int | None = None
    detail: str = ""


@dataclass
class Trace:
    """Time-indexed per-vehicle record of one simulation run.

    All 2-D arrays have shape (ticks, vehicles).  ``gap`` is the bumper gap to
    the predecessor (NaN where there is none), ``mode`` holds the supervisory
    state of spring-damper vehicles (-1 elsewhere: 0 cruise, 1 override).
    """

    times: np.ndarray
    controllers: tuple[str, ...]
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    ctrl_input: np.ndarray
    gap: np.ndarray
    lane: np.ndarray
    mode: np.ndarray
    events: list[TraceEvent] = field(default_factory=list)
    scenario_kind: str = ""
    config: str = ""
    terminated_by_collision: bool = False

    @property
    def n_vehicles(self) -> int:
        return len(self.controllers)

    def window_mask(self, t0: float, t1: float) -> np.ndarray:
        return (self.times >= t0 - 1e-9) & (self.times <= t1 + 1e-9)

    def rows_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "veh", "lane", "x", "v", "a", "u", "gap", "ctrl", "mode"])
        mode_names = {0: "cruise", 1: "override"}
        for k, t in enumerate(self.times):
            for i in range(self.n_vehicles):
                w.writerow([
                    f"{t:.6f}",
                    i,
                    int(self.lane[k, i]),
                    f"{self.position[k, i]:.6f}",
                    f"{self.speed[k, i]:.6f}",
                    f"{self.accel[k, i]:.6f}",
                    f"{self.ctrl_input[k, i]:.6f}",
                    f"{self.gap[k, i]:.6f}",
                    self.controllers[i],
                    mode_names.get(int(self.mode[k, i]), ""),
                ])
        return buf.getvalue()

    def events_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kind", "veh_a", "veh_b", "detail"])
        for ev in self.events:
            w.writerow([
                f"{ev.time:.6f}",
                ev.kind,
                ev.veh_a,
                "" if ev.veh_b is None else ev.veh_b,
                ev.detail,
            ])
        return buf.getvalue()

    def serialize(self) -> bytes:
        return (self.rows_csv() + self.events_csv()).encode()


def _validate_supported(cfg: PlatoonConfig, leaders: dict[int, int | None]) -> None:
    for i in range(1, cfg.size):
        if cfg[i] == "P" and leaders[i] is EXTERNAL_REF:
            raise ScenarioError(
                f"follower {i} in {cfg} runs the constant-spacing controller "
                "without any leader to elect"
            )


def run_single_platoon(
    scn: SingleScenario,
    dyn: DynamicsParams | None = None,
    ctrl: ControllerSet | None = None,
    control_dt: float = CONTROL_DT,
) -> Trace:
    """Simulate one scenario and return the full trace.

    Vehicles start at their own controller's equilibrium gap at the base
    speed (optionally offset per follower for perturbation studies).  The run
    is truncated at the first collision.
    """
    dyn = dyn or DynamicsParams()
    ctrl = ctrl or ControllerSet()
    cfg = parse_config(scn.config) if isinstance(scn.config, str) else scn.config
    leaders = elect_ego_leaders(cfg)
    _validate_supported(cfg, leaders)
    n = cfg.size
    sub = round(control_dt / dyn.dt)
    if abs(sub * dyn.dt - control_dt) > 1e-9 or sub < 1:
        raise ScenarioError("control_dt must be a multiple of the dynamics dt")

    offsets = scn.initial_gap_offsets or {}
    states: list[VehicleState] = []
    for i, letter in enumerate(cfg):
        if i == 0:
            pos = 0.0
        else:
            gap = ctrl.equilibrium_gap(letter, scn.base_speed) + offsets.get(i, 0.0)
            pos = states[i - 1].rear - gap
        states.append(VehicleState(position=pos, speed=scn.base_speed))

    ploeg_state = {
        i: replace(ctrl.ploeg, u_state=states[i].accel)
        for i in range(1, n) if cfg[i] == "L"
    }
    path_state = {i: replace(ctrl.path) for i in range(1, n) if cfg[i] == "P"}
    gsbl_state = {
        i: replace(ctrl.gsbl, v_r=scn.base_speed, r=ctrl.gsbl.r_default)
        for i in range(n) if cfg[i] == "G"
    }

    ticks = round(scn.duration / control_dt) + 1
    times = np.arange(ticks) * control_dt
    shape = (ticks, n)
    position = np.zeros(shape)
    speed = np.zeros(shape)
    accel = np.zeros(shape)
    ctrl_input = np.zeros(shape)
    gap = np.full(shape, np.nan)
    lane = np.zeros(shape, dtype=np.int8)
    mode = np.full(shape, -1, dtype=np.int8)
    events: list[TraceEvent] = []
    collided = False
    last_k = ticks - 1

    def record(k: int) -> None:
        for i, s in enumerate(states):
            position[k, i] = s.position
            speed[k, i] = s.speed
            accel[k, i] = s.accel
            ctrl_input[k, i] = s.ctrl_input
            if i > 0:
                gap[k, i] = states[i - 1].rear - s.position
            if i in gsbl_state:
                mode[k, i] = 1 if gsbl_state[i].mode is GsblMode.OVERRIDE else 0

    for k in range(ticks):
        t = times[k]
        record(k)
        if k == ticks - 1:
            break

        beacons = [
            Beacon(i, s.position, s.speed, s.accel, s.ctrl_input, t, s.length)
            for i, s in enumerate(states)
        ]
        u = np.zeros(n)
        v_t = leader_target_speed(scn, t)
        for i, letter in enumerate(cfg):
            ego = states[i]
            if i == 0:
                if letter == "G":
                    gap_rear = ego.rear - states[1].position
                    u[i] = gsbl_accel_head(
                        gap_rear, states[1].speed, ego.speed, v_t,
                        ctrl.gsbl.k, ctrl.gsbl.h, ctrl.gsbl.r_default, ctrl.gsbl.d,
                    )
                else:
                    u[i] = leader_target_accel(scn, t) + PROFILE_GAIN * (v_t - ego.speed)
                continue
            pred_b = beacons[i - 1]
            if letter == "A":
                u[i] = acc_control(ego, states[i - 1], ctrl.acc)
            elif letter == "L":
                u[i] = ploeg_control(ego, pred_b, ploeg_state[i], now=t)
                if ploeg_state[i].stale_held:
                    events.append(TraceEvent(t, "stale_beacon", i, i - 1))
            elif letter == "P":
                lead = leaders[i]
                u[i] = path_control(ego, pred_b, beacons[lead], path_state[i], now=t)
                if path_state[i].stale_held:
                    events.append(TraceEvent(t, "stale_beacon", i, lead))
            elif letter == "G":
                p = gsbl_state[i]
                lead = leaders[i]
                if lead is EXTERNAL_REF:
                    p = replace(p, mode=GsblMode.CRUISE, v_r=v_t, r=p.r_default)
                else:
                    new_p = gsbl_mode_update(p, beacons[lead], ego, states[i - 1])
                    if new_p.mode is not p.mode:
                        events.append(TraceEvent(
                            t, "mode_switch", i, lead,
                            f"{p.mode.value}->{new_p.mode.value}",
                        ))
                    p = new_p
                gsbl_state[i] = p
                succ_b = beacons[i + 1] if i + 1 < n else None
                u[i] = gsbl_control(ego, pred_b, succ_b, p)
            elif letter == "I":
                u[i] = idm_control(ego, states[i - 1], ctrl.idm)

        hold = [
            i > 0
            and states[i].speed < STANDSTILL_SPEED
            and states[i - 1].speed < STANDSTILL_SPEED
            and states[i - 1].rear - states[i].position < STANDSTILL_GAP
            for i in range(n)
        ]

        for _ in range(sub):
            for i in range(n):
                cmd = u[i]
                flt = ploeg_state.get(i)
                if flt is not None:
                    # the actuation filter runs at the physics rate while its
                    # drive target u[i] is held over the control period
                    flt.u_state += (dyn.dt / flt.H) * (u[i] - flt.u_state)
                    cmd = flt.u_state
                if hold[i]:
                    cmd = min(cmd, STANDSTILL_BRAKE)
                # followers commanding past the service brake floor get the
                # emergency allowance; the head sticks to the scripted maneuver
                states[i] = step_vehicle(states[i], cmd, dyn, i > 0 and cmd < dyn.u_min)

        crash = None
        for i in range(1, n):
            if states[i - 1].rear - states[i].position <= 0.0:
                crash = i
                break
        if crash is not None:
            record(k + 1)
            events.append(TraceEvent(
                times[k + 1], "collision", crash, crash - 1,
                f"gap={states[crash - 1].rear - states[crash].position:.3f}",
            ))
            collided = True
            last_k = k + 1
            break

    end = last_k + 1
    return Trace(
        times=times[:end],
        controllers=tuple(cfg),
        position=position[:end],
        speed=speed[:end],
        accel=accel[:end],
        ctrl_input=ctrl_input[:end],
        gap=gap[:end],
        lane=lane[:end],
        mode=mode[:end],
        events=events,
        scenario_kind=scn.kind,
        config=str(cfg),
        terminated_by_collision=collided,
    )
