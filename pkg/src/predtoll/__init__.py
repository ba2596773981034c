"""Predictive dynamic toll optimization with a closed-loop evaluation harness."""

from .config import CycleConfig, ScenarioConfig, TollSettings, load_config
from .demand import ODDemand, TripRecord
from .network import Link, Network
from .optimizer import GAParams, TollConstraints, optimize
from .prediction import predict_consistent
from .route_choice import ChoiceCoefficients, RouteChoiceModel
from .supply import NetworkState, simulate
from .timetables import GuidanceTable, TollSchedule

__all__ = [
    "ChoiceCoefficients",
    "CycleConfig",
    "GAParams",
    "GuidanceTable",
    "Link",
    "Network",
    "NetworkState",
    "ODDemand",
    "RouteChoiceModel",
    "ScenarioConfig",
    "TollConstraints",
    "TollSchedule",
    "TollSettings",
    "TripRecord",
    "load_config",
    "optimize",
    "predict_consistent",
    "simulate",
]
