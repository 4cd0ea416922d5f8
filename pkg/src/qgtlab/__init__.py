"""Virtual measurements of the quantum geometric tensor of two-level systems."""

from .errors import (
    AdiabaticityViolation,
    AdiabaticityWarning,
    ConfigError,
    DegeneratePoint,
    GridTooCoarse,
    InvalidStep,
    NumericalError,
    QGTLabError,
    SingularMetric,
    WindowTooNarrow,
)
from .model import HamiltonianFamily, ParameterPoint, bloch_sphere, custom, eigensystem, trs_band
from .oracle import QGTValue, bloch_qgt, metric_overlap_fd, qgt_spectral
from .protocols import (
    DriveConfig,
    QuenchConfig,
    RampConfig,
    ShotModel,
    berry_response,
    drive_metric,
    quench_metric,
)
from .geometry import (
    CurvatureGrid,
    MetricGrid,
    chern_number,
    chern_plaquette,
    euler_characteristic,
    euler_trs_reduced,
    sphere_grid,
    torus_grid,
)
from .experiments import Scenario, __version__, load_scenario, run_scenario, write_outputs
