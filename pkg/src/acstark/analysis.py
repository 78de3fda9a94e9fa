"""Detector emulation, energies and fringe metrology."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TWO_PI
from .solver import RunResult


def apd_trace(result: RunResult) -> np.ndarray:
    """Photodiode intensity ``sum_x |Omega_out|^2 dx`` at each output sample."""
    return np.sum(np.abs(result.signal_out) ** 2, axis=1) * result.grid.dx


def _window_mask(t, window):
    if window is None:
        return np.ones_like(t, dtype=bool)
    t1, t2 = window
    if t2 < t1:
        raise ValueError(f"window end {t2} before start {t1}")
    return (t >= t1 - 1e-12) & (t <= t2 + 1e-12)


def _integrate(t, y, segments, window=None):
    """Trapezoid rule over each contiguous segment, restricted to ``window``.

    Dark gaps between active segments carry no light and are skipped rather
    than bridged by the trapezoid.
    """
    keep = _window_mask(t, window)
    total = 0.0
    for a, b in segments:
        sel = keep[a:b]
        if sel.sum() > 1:
            total += np.trapezoid(y[a:b][sel], t[a:b][sel], axis=0)
    return total


def port_energy(result: RunResult, window=None, trace=None) -> float:
    """Energy of the APD trace inside ``window = (t1, t2)`` (whole run if None)."""
    y = apd_trace(result) if trace is None else np.asarray(trace)
    if window is not None and len(result.t) and (window[1] < result.t[0] - 1e-9 or window[0] > result.t[-1] + 1e-9):
        raise ValueError(f"window {window} lies outside the recorded trace")
    return float(_integrate(result.t, y, result.segments, window))


def efficiency(in_energy: float, out_energy: float) -> float:
    if in_energy <= 0.0:
        raise ValueError("efficiency undefined for zero input energy")
    return out_energy / in_energy


def farfield_image(result: RunResult, window=None) -> tuple[np.ndarray, np.ndarray]:
    """Time-integrated far-field intensity density versus K_x.

    Returns ``(kx, density)`` with ``sum(density) * dKx`` equal to the APD
    energy over the same window.
    """
    grid = result.grid
    if not grid.is_2d:
        raise ValueError("far-field image needs a 2+1D run (nx > 1)")
    spec = np.fft.fftshift(np.fft.fft(result.signal_out, axis=1), axes=1) * (grid.dx / math.sqrt(TWO_PI))
    kx = np.fft.fftshift(np.fft.fftfreq(grid.nx, d=grid.dx)) * TWO_PI
    density = _integrate(result.t, np.abs(spec) ** 2, result.segments, window)
    return kx, np.asarray(density, dtype=float)


def camera_port(result: RunResult, kx: float, window=None) -> float:
    """Energy landing in the far-field pixel nearest ``kx``."""
    k, density = farfield_image(result, window)
    dk = TWO_PI / result.grid.length_x
    i = int(np.argmin(np.abs(k - kx)))
    if abs(k[i] - kx) > 0.5 * dk:
        raise ValueError(f"kx={kx} not on the far-field lattice")
    return float(density[i] * dk)


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    phase: float
    visibility: float
    visibility_fit: float
    rms_residual: float
    period: float
    degenerate: bool = False


def fit_fringe(x, y, period: float = TWO_PI) -> FringeFit:
    """Least-squares ``y = offset + amplitude cos(2 pi x / period + phase)``.

    The period is fixed by theory.  ``visibility`` is the model-free
    (max - min)/(max + min); ``visibility_fit`` is amplitude/offset.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("fit_fringe needs matching x and y with at least 3 points")
    w = TWO_PI / period
    design = np.column_stack([np.ones_like(x), np.cos(w * x), np.sin(w * x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    c0, a, b = coef
    amp = math.hypot(a, b)
    # a cos + b sin = amp cos(wx + phase)
    phase = math.atan2(-b, a)
    rms = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    ymax, ymin = float(y.max()), float(y.min())
    scale = max(abs(ymax), abs(ymin), 1e-300)
    if ymax - ymin <= 1e-12 * scale or ymax + ymin <= 0.0:
        return FringeFit(0.0, float(c0), 0.0, 0.0, 0.0, rms, period, degenerate=True)
    vis = (ymax - ymin) / (ymax + ymin)
    vis_fit = amp / c0 if c0 > 0 else 0.0
    return FringeFit(amp, float(c0), phase, vis, float(vis_fit), rms, period)


def phase_difference(fit_a: FringeFit, fit_b: FringeFit) -> float:
    """Fringe phase offset between two ports, wrapped to [0, 2 pi)."""
    return float(np.mod(fit_a.phase - fit_b.phase, TWO_PI))


def write_trace_csv(result: RunResult, path) -> None:
    """APD export: t_us, re, im, intensity (x-summed for 2+1D runs)."""
    if result.grid.is_2d:
        field = np.sum(result.signal_out, axis=1) * result.grid.dx
    else:
        field = result.signal_out[:, 0]
    inten = apd_trace(result)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t_us,re,im,intensity\n")
        for t, f, i in zip(result.t, field, inten):
            fh.write(f"{t:.9g},{f.real:.12g},{f.imag:.12g},{i:.12g}\n")
