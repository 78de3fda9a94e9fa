"""Simulation of an ac-Stark programmable spin-wave optical memory."""
from .core import Grid, PhysicalParams, PulseSpec, SpinWave, default_params, load_params, optical_depth
from .gratings import GratingShape, GratingSpec, fourier_coeff, render_mask, solve_equal_orders
from .spinwave import apply_mask, readable_fraction, series_transform, to_kspace
from .solver import FieldSchedule, RunResult, run

__version__ = "0.1.0"

__all__ = [
    "FieldSchedule",
    "GratingShape",
    "GratingSpec",
    "Grid",
    "PhysicalParams",
    "PulseSpec",
    "RunResult",
    "SpinWave",
    "apply_mask",
    "default_params",
    "fourier_coeff",
    "load_params",
    "optical_depth",
    "readable_fraction",
    "render_mask",
    "run",
    "series_transform",
    "solve_equal_orders",
    "to_kspace",
]
