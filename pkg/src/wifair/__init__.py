"""Airtime-fair contention window allocation for multi-rate WLANs.

The package pairs a closed-form throughput/airtime model of slotted
CSMA/CA with an equal-airtime window optimizer, a slot-level Monte Carlo
oracle and an emulation of the AP control loop that keeps the WLAN at the
fair point as conditions change.
"""

from .errors import (
    ConvergenceError,
    InfeasibleError,
    InvalidRateError,
    OrderingError,
    ValidationError,
    WifairError,
)
from .phy import PhyProfile, StationSpec
from .model import AttemptVector, ModelMetrics, PerStationMetrics, SlotDistribution
from .optimizer import Allocation, SolverConfig, solve_equal_airtime
from .simulator import CaptureConfig, SimConfig, SimResult
from .controller import BeaconAssignment, ControllerConfig, run_closed_loop

__all__ = [
    "Allocation",
    "AttemptVector",
    "BeaconAssignment",
    "CaptureConfig",
    "ControllerConfig",
    "ConvergenceError",
    "InfeasibleError",
    "InvalidRateError",
    "ModelMetrics",
    "OrderingError",
    "PerStationMetrics",
    "PhyProfile",
    "SimConfig",
    "SimResult",
    "SlotDistribution",
    "SolverConfig",
    "StationSpec",
    "ValidationError",
    "WifairError",
    "run_closed_loop",
    "solve_equal_airtime",
]

__version__ = "0.1.0"
