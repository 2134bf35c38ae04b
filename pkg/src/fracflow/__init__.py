"""Threshold dynamics with fractional heat-type kernels.

Kernels, the critical time scale, set geometry, the diffused indicator,
interface velocity measurement and the iterated thresholding scheme.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .kernels import Family, KernelSpec, RadialTable, eval_kernel, limit_constant, make_kernel
from .scaling import Branch, ScalingLaw, sigma
from .geometry import Ball, Ellipse, GraphSet, HalfSpace, SetShape, fractional_mean_curvature, shape_from_dict
from .diffusion import GridField, convolve_point, u_direct, u_grid
from .velocity import ExpansionConstants, VelocityRecord, expansion_constants, measure_velocity
from .mbo import FlowTrace, mbo_step, run_flow

__all__ = [
    "Ball", "Branch", "Ellipse", "ExpansionConstants", "Family", "FlowTrace", "GraphSet", "GridField",
    "HalfSpace", "KernelSpec", "RadialTable", "ScalingLaw", "SetShape", "VelocityRecord", "convolve_point",
    "eval_kernel", "expansion_constants", "fractional_mean_curvature", "limit_constant", "make_kernel",
    "mbo_step", "measure_velocity", "run_flow", "shape_from_dict", "sigma", "u_direct", "u_grid",
]
