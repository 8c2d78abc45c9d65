"""Flat key-value configuration of all model parameters.

The file format is INI with one section per model area and parameter names
matching the usual symbols (H, lambda, kp, kd, C1, xi, omega_n, k, h, r).
Every experiment output embeds a hash of the resolved configuration so that
result files can be matched to the exact parameter set that produced them.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, field

from .controllers import (
    AccParams,
    ControllerSet,
    GsblParams,
    IdmParams,
    PathParams,
    PloegParams,
)
from .dynamics import DynamicsParams


class ConfigFileError(ValueError):
    """Raised for malformed or inconsistent configuration files."""


@dataclass
class MobilitySpec:
    """Road and experiment-grid defaults for the ring experiments."""

    lanes: int = 3
    circumference: float = 10_000.0
    speed_classes_kmh: tuple[float, ...] = (100.0, 115.0, 130.0)
    speed_jitter_kmh: float = 5.0
    densities: tuple[float, ...] = (10, 20, 40, 60, 80, 100, 120, 140, 160, 180)
    platoon_sizes: tuple[int, ...] = (4, 8, 16)
    penetration_rates: tuple[float, ...] = (0.25, 0.5, 0.75)
    ring_duration: float = 600.0
    ring_warmup: float = 120.0
    counter_window: float = 15.0
    volatility_sample_dt: float = 0.5


@dataclass
class Config:
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    controllers: ControllerSet = field(default_factory=ControllerSet)
    mobility: MobilitySpec = field(default_factory=MobilitySpec)


def default_config() -> Config:
    return Config()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def config_to_text(cfg: Config) -> str:
    """Serialize a configuration to the INI text format."""
    c = cfg.controllers
    sections = {
        "dynamics": {
            "powertrain lag": cfg.dynamics.tau,
            "dt": cfg.dynamics.dt,
            "u_min": cfg.dynamics.u_min,
            "u_max": cfg.dynamics.u_max,
            "emergency u_min": cfg.dynamics.emergency_u_min,
        },
        "acc": {"H": c.acc.H, "lambda": c.acc.lam},
        "ploeg": {"H": c.ploeg.H, "kp": c.ploeg.kp, "kd": c.ploeg.kd},
        "path": {
            "C1": c.path.c1, "xi": c.path.xi, "omega_n": c.path.omega_n,
            "dd": c.path.dd,
        },
        "gsbl": {
            "k": c.gsbl.k, "h": c.gsbl.h, "r": c.gsbl.r_default,
            "r_min": c.gsbl.r_min, "r_max": c.gsbl.r_max, "d": c.gsbl.d,
            "delta_a": c.gsbl.delta_a, "delta_t": c.gsbl.delta_t,
        },
        "idm": {
            "v0": c.idm.v0, "T": c.idm.T, "a_max": c.idm.a_max,
            "b_comf": c.idm.b_comf, "s0": c.idm.s0, "delta": c.idm.delta,
        },
        "mobility": {
            "lanes": cfg.mobility.lanes,
            "circumference": cfg.mobility.circumference,
            "desired speeds": cfg.mobility.speed_classes_kmh,
            "speed jitter": cfg.mobility.speed_jitter_kmh,
            "densities": cfg.mobility.densities,
            "platoon sizes": cfg.mobility.platoon_sizes,
            "penetration rates": cfg.mobility.penetration_rates,
            "duration": cfg.mobility.ring_duration,
            "warmup": cfg.mobility.ring_warmup,
            "counter window": cfg.mobility.counter_window,
            "volatility sample dt": cfg.mobility.volatility_sample_dt,
        },
    }
    out = []
    for name, entries in sections.items():
        out.append(f"[{name}]")
        for key, value in entries.items():
            out.append(f"{key} = {_fmt(value)}")
        out.append("")
    return "\n".join(out)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x.strip()) for x in text.split(","))


def load_config(text: str) -> Config:
    """Parse configuration text; unspecified values keep their defaults."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigFileError(f"cannot parse configuration: {exc}") from exc

    def get(section, key, cast=float, default=None):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except ValueError as exc:
                raise ConfigFileError(
                    f"bad value {raw!r} for [{section}] {key}"
                ) from exc
        return default

    base = Config()
    try:
        dyn = DynamicsParams(
            tau=get("dynamics", "powertrain lag", float, base.dynamics.tau),
            dt=get("dynamics", "dt", float, base.dynamics.dt),
            u_min=get("dynamics", "u_min", float, base.dynamics.u_min),
            u_max=get("dynamics", "u_max", float, base.dynamics.u_max),
            emergency_u_min=get(
                "dynamics", "emergency u_min", float, base.dynamics.emergency_u_min
            ),
        )
        ctrl = ControllerSet(
            acc=AccParams(
                H=get("acc", "H", float, base.controllers.acc.H),
                lam=get("acc", "lambda", float, base.controllers.acc.lam),
            ),
            ploeg=PloegParams(
                H=get("ploeg", "H", float, base.controllers.ploeg.H),
                kp=get("ploeg", "kp", float, base.controllers.ploeg.kp),
                kd=get("ploeg", "kd", float, base.controllers.ploeg.kd),
            ),
            path=PathParams(
                c1=get("path", "C1", float, base.controllers.path.c1),
                xi=get("path", "xi", float, base.controllers.path.xi),
                omega_n=get("path", "omega_n", float, base.controllers.path.omega_n),
                dd=get("path", "dd", float, base.controllers.path.dd),
            ),
            gsbl=GsblParams(
                k=get("gsbl", "k", float, base.controllers.gsbl.k),
                h=get("gsbl", "h", float, base.controllers.gsbl.h),
                r_default=get("gsbl", "r", float, base.controllers.gsbl.r_default),
                r_min=get("gsbl", "r_min", float, base.controllers.gsbl.r_min),
                r_max=get("gsbl", "r_max", float, base.controllers.gsbl.r_max),
                d=get("gsbl", "d", float, base.controllers.gsbl.d),
                delta_a=get("gsbl", "delta_a", float, base.controllers.gsbl.delta_a),
                delta_t=get("gsbl", "delta_t", float, base.controllers.gsbl.delta_t),
            ),
            idm=IdmParams(
                v0=get("idm", "v0", float, base.controllers.idm.v0),
                T=get("idm", "T", float, base.controllers.idm.T),
                a_max=get("idm", "a_max", float, base.controllers.idm.a_max),
                b_comf=get("idm", "b_comf", float, base.controllers.idm.b_comf),
                s0=get("idm", "s0", float, base.controllers.idm.s0),
                delta=get("idm", "delta", float, base.controllers.idm.delta),
            ),
        )
        mob = MobilitySpec(
            lanes=get("mobility", "lanes", int, base.mobility.lanes),
            circumference=get(
                "mobility", "circumference", float, base.mobility.circumference
            ),
            speed_classes_kmh=get(
                "mobility", "desired speeds", _floats, base.mobility.speed_classes_kmh
            ),
            speed_jitter_kmh=get(
                "mobility", "speed jitter", float, base.mobility.speed_jitter_kmh
            ),
            densities=get("mobility", "densities", _floats, base.mobility.densities),
            platoon_sizes=get(
                "mobility", "platoon sizes",
                lambda s: tuple(int(float(x)) for x in s.split(",")),
                base.mobility.platoon_sizes,
            ),
            penetration_rates=get(
                "mobility", "penetration rates", _floats,
                base.mobility.penetration_rates,
            ),
            ring_duration=get("mobility", "duration", float, base.mobility.ring_duration),
            ring_warmup=get("mobility", "warmup", float, base.mobility.ring_warmup),
            counter_window=get(
                "mobility", "counter window", float, base.mobility.counter_window
            ),
            volatility_sample_dt=get(
                "mobility", "volatility sample dt", float,
                base.mobility.volatility_sample_dt,
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigFileError):
            raise
        raise ConfigFileError(str(exc)) from exc
    return Config(dynamics=dyn, controllers=ctrl, mobility=mob)


def load_config_file(path) -> Config:
    with io.open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def resolved_dict(cfg: Config) -> dict:
    """Canonical nested dict of every resolved parameter."""
    c = cfg.controllers
    return {
        "dynamics": {
            "tau": cfg.dynamics.tau, "dt": cfg.dynamics.dt,
            "u_min": cfg.dynamics.u_min, "u_max": cfg.dynamics.u_max,
            "emergency_u_min": cfg.dynamics.emergency_u_min,
        },
        "acc": {"H": c.acc.H, "lambda": c.acc.lam},
        "ploeg": {"H": c.ploeg.H, "kp": c.ploeg.kp, "kd": c.ploeg.kd},
        "path": {
            "C1": c.path.c1, "xi": c.path.xi, "omega_n": c.path.omega_n,
            "dd": c.path.dd,
        },
        "gsbl": {
            "k": c.gsbl.k, "h": c.gsbl.h, "r": c.gsbl.r_default,
            "r_min": c.gsbl.r_min, "r_max": c.gsbl.r_max, "d": c.gsbl.d,
            "delta_a": c.gsbl.delta_a, "delta_t": c.gsbl.delta_t,
        },
        "idm": {
            "v0": c.idm.v0, "T": c.idm.T, "a_max": c.idm.a_max,
            "b_comf": c.idm.b_comf, "s0": c.idm.s0, "delta": c.idm.delta,
        },
        "mobility": {
            "lanes": cfg.mobility.lanes,
            "circumference": cfg.mobility.circumference,
            "speed_classes_kmh": list(cfg.mobility.speed_classes_kmh),
            "speed_jitter_kmh": cfg.mobility.speed_jitter_kmh,
            "densities": list(cfg.mobility.densities),
            "platoon_sizes": list(cfg.mobility.platoon_sizes),
            "penetration_rates": list(cfg.mobility.penetration_rates),
            "ring_duration": cfg.mobility.ring_duration,
            "ring_warmup": cfg.mobility.ring_warmup,
            "counter_window": cfg.mobility.counter_window,
            "volatility_sample_dt": cfg.mobility.volatility_sample_dt,
        },
    }


def spec_hash(cfg: Config, extra: dict | None = None) -> str:
    """Stable hash of the resolved configuration plus experiment parameters."""
    payload = {"config": resolved_dict(cfg)}
    if extra:
        payload["experiment"] = extra
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
