"""Minimizing-movements simulation of volume-preserving mean curvature flow in the plane.

Typical use::

    from flatflow import FlowConfig, GridSpec, Ellipse, run_flow, run_checks
    cfg = FlowConfig(Ellipse(a=1.5, b=0.75), GridSpec.square(256), h=5e-3, T=0.5)
    trace = run_flow(cfg)
    verdicts = run_checks(trace)
"""
from .contour import Contour, extract_contours
from .distance import SignedDistanceField, signed_distance
from .exceptions import ConfigError, FlatFlowError, NonConvergenceError
from .flow import FlowConfig, FlowTrace, StepReport, StepSettings, run_checks, run_flow
from .grid import (Circle, Dumbbell, Ellipse, FourierStar, GridSpec, IndicatorField, Stadium,
                   UnionOfCircles, field_volume, rasterize)
from .step import StepConfig, StepResult, volume_bisection
from .two_point import TwoPointReport, two_point_report

__version__ = "0.1.0"

__all__ = [
    "Circle", "ConfigError", "Contour", "Dumbbell", "Ellipse", "FlatFlowError", "FlowConfig",
    "FlowTrace", "FourierStar", "GridSpec", "IndicatorField", "NonConvergenceError",
    "SignedDistanceField", "Stadium", "StepConfig", "StepReport", "StepResult", "StepSettings",
    "TwoPointReport", "UnionOfCircles", "extract_contours", "field_volume", "rasterize",
    "run_checks", "run_flow", "signed_distance", "two_point_report", "volume_bisection",
]
