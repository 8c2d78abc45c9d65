"""Longitudinal vehicle motion with a first-order actuation lag.

Commanded accelerations are clamped, then tracked by the powertrain with time
constant ``tau``.  Integration is semi-implicit Euler: the updated acceleration
feeds the speed update, the updated speed feeds the position update.  Speeds
never go negative; at standstill a negative actuation state is zeroed so a
stopped vehicle does not report phantom deceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

VEHICLE_LENGTH = 4.0  # m, every vehicle is a passenger car

# Auto-hold: below this crawl speed, with the predecessor also crawling and
# the gap short, the brake is applied and held so queued vehicles rest
# instead of creeping into the bumper ahead (released once the predecessor
# moves off).  Needed because time-headway spacing policies command a zero
# gap at standstill.
STANDSTILL_SPEED = 0.5   # m/s
STANDSTILL_GAP = 3.0     # m
STANDSTILL_BRAKE = -0.5  # m/s^2


@dataclass
class DynamicsParams:
    """Actuation lag and integration settings shared by all vehicles."""

    tau: float = 0.5             # powertrain lag time constant [s]
    dt: float = 0.01             # integration step [s]
    u_min: float = -8.0          # commanded acceleration clamp [m/s^2]
    u_max: float = 2.5
    emergency_u_min: float = -9.0  # clamp while emergency braking is commanded

    def __post_init__(self):
        if self.tau <= 0.0 or self.dt <= 0.0:
            raise ValueError("tau and dt must be positive")
        if not self.u_min < 0.0 < self.u_max:
            raise ValueError("input clamp must satisfy u_min < 0 < u_max")
        if self.emergency_u_min > self.u_min:
            raise ValueError("emergency_u_min cannot be tighter than u_min")


@dataclass
class VehicleState:
    """Kinematic state of one vehicle.

    ``position`` is the front bumper coordinate and grows in the driving
    direction.  ``accel`` is the realized acceleration after the lag,
    ``ctrl_input`` the last commanded acceleration after clamping.
    """

    position: float
    speed: float
    accel: float = 0.0
    ctrl_input: float = 0.0
    length: float = VEHICLE_LENGTH
    lane: int = 0

    @property
    def rear(self) -> float:
        return self.position - self.length


def clamp_input(u_cmd: float, params: DynamicsParams, emergency: bool = False) -> float:
    """Clamp a commanded acceleration to the admissible actuator range."""
    lo = params.emergency_u_min if emergency else params.u_min
    return min(params.u_max, max(lo, u_cmd))


def step_vehicle(
    state: VehicleState,
    u_cmd: float,
    params: DynamicsParams,
    emergency: bool = False,
) -> VehicleState:
    """Advance one vehicle by one integration step of ``params.dt`` seconds."""
    if not math.isfinite(u_cmd):
        raise ValueError(f"non-finite control input: {u_cmd!r}")
    u = clamp_input(u_cmd, params, emergency)
    accel = state.accel + (params.dt / params.tau) * (u - state.accel)
    speed = state.speed + accel * params.dt
    if speed <= 0.0:
        speed = 0.0
        if accel < 0.0:
            accel = 0.0
    position = state.position + speed * params.dt
    return replace(
        state, position=position, speed=speed, accel=accel, ctrl_input=u
    )


def step_arrays(
    pos: np.ndarray,
    speed: np.ndarray,
    accel: np.ndarray,
    u_cmd: np.ndarray,
    params: DynamicsParams,
    tau: np.ndarray | float | None = None,
) -> None:
    """Vectorized form of :func:`step_vehicle`; mutates the arrays in place.

    ``tau`` may be a per-vehicle array; entries equal to ``params.dt`` make the
    actuation track the command exactly (used for lag-free driver models).
    ``u_cmd`` is clamped in place; commands below ``u_min`` count as commanded
    emergency braking and are admitted down to ``emergency_u_min``.
    """
    if tau is None:
        tau = params.tau
    np.clip(u_cmd, params.emergency_u_min, params.u_max, out=u_cmd)
    accel += (params.dt / tau) * (u_cmd - accel)
    speed += accel * params.dt
    stopped = speed <= 0.0
    if stopped.any():
        speed[stopped] = 0.0
        accel[stopped & (accel < 0.0)] = 0.0
    pos += speed * params.dt
