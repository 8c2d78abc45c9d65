"""Simulator and analysis toolkit for mixed cooperative platoons."""

from .config import Config, ConfigFileError, default_config, load_config_file, spec_hash
from .controllers import (
    AccParams,
    Beacon,
    ControllerSet,
    GsblMode,
    GsblParams,
    IdmParams,
    PathParams,
    PloegParams,
    acc_accel,
    gsbl_mode_update,
    idm_accel,
    path_gains,
)
from .dynamics import DynamicsParams, VehicleState, step_vehicle
from .metrics import (
    MetricReport,
    Window,
    boxplot_stats,
    braking_window,
    delta_a,
    delta_d,
    eta,
    min_gap,
    peak_abs_accel,
    sinusoidal_window,
    throughput_series,
    volatility,
)
from .ring import RingSpec, RingTrace, SpawnError, run_ring
from .scenarios import ScenarioError, SingleScenario, Trace, run_single_platoon
from .topology import (
    ConfigError,
    ConnectivityMatrix,
    PlatoonConfig,
    connectivity_matrix,
    elect_ego_leaders,
    extended_connectivity_matrix,
    parse_config,
)

__version__ = "0.1.0"

__all__ = [
    "AccParams",
    "Beacon",
    "Config",
    "ConfigError",
    "ConfigFileError",
    "ConnectivityMatrix",
    "ControllerSet",
    "DynamicsParams",
    "GsblMode",
    "GsblParams",
    "IdmParams",
    "MetricReport",
    "PathParams",
    "PlatoonConfig",
    "PloegParams",
    "RingSpec",
    "RingTrace",
    "ScenarioError",
    "SingleScenario",
    "SpawnError",
    "Trace",
    "VehicleState",
    "Window",
    "acc_accel",
    "boxplot_stats",
    "braking_window",
    "connectivity_matrix",
    "default_config",
    "delta_a",
    "delta_d",
    "elect_ego_leaders",
    "eta",
    "extended_connectivity_matrix",
    "gsbl_mode_update",
    "idm_accel",
    "load_config_file",
    "min_gap",
    "parse_config",
    "path_gains",
    "peak_abs_accel",
    "run_ring",
    "run_single_platoon",
    "sinusoidal_window",
    "spec_hash",
    "step_vehicle",
    "throughput_series",
    "volatility",
    "__version__",
]
