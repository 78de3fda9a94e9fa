"""Units, physical constants, grids and shared value types.

Conventions used throughout the package:

* lengths in mm, times in µs, every rate in rad/µs, wavevectors in rad/mm;
* a spin wave is stored as the density-weighted coherence ``S`` normalised so
  that ``sum(|S|**2) * dx * dz`` is directly comparable with the optical
  energy ``sum(|Omega|**2) * dt * dx`` that produced it.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.special import erf

TWO_PI = 2.0 * math.pi
C_MM_PER_US = 2.99792458e5

#: Peak coupling Rabi frequency (1.5 Gamma).
DEFAULT_COUPLING_RABI = TWO_PI * 9.0
#: Peak signal Rabi frequency.
DEFAULT_SIGNAL_RABI = TWO_PI * 0.05
DEFAULT_PULSE_DURATION = 0.3
DEFAULT_RISE_TIME = 0.1
#: Signal wavelength used by the transverse diffraction term (Rb D1 line).
SIGNAL_WAVELENGTH_MM = 795e-6


class ParameterError(ValueError):
    """Raised for invalid physical parameters or parameter files."""


@dataclass(frozen=True)
class PhysicalParams:
    g0: float = 20.0
    Gamma: float = TWO_PI * 6.0
    gamma: float = TWO_PI * 0.01
    Delta: float = TWO_PI * 20.0
    delta: float = 0.0
    Delta0: float = TWO_PI * 6800.0
    gamma_acs: float = 0.1
    sigma_z: float = 5.0

    def __post_init__(self):
        if not self.g0 >= 0:
            raise ParameterError(f"g0 must be non-negative, got {self.g0}")
        if not self.Gamma > 0:
            raise ParameterError(f"Gamma must be positive, got {self.Gamma}")
        if not self.gamma >= 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")
        if not self.sigma_z > 0:
            raise ParameterError(f"sigma_z must be positive, got {self.sigma_z}")
        if not 0.0 <= self.gamma_acs < 1.0:
            raise ParameterError(f"gamma_acs must lie in [0, 1), got {self.gamma_acs}")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ParameterError(f"{f.name} must be finite")

    @property
    def Kz0(self) -> float:
        """Residual longitudinal carrier wavevector, Delta0 / c in rad/mm."""
        return self.Delta0 / C_MM_PER_US

    def replace(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


def default_params() -> PhysicalParams:
    return PhysicalParams()


# Parameter-file keys and the PhysicalParams fields they map onto.
PARAM_FILE_KEYS = {
    "g0_mm_us": "g0",
    "gamma_big_rad_us": "Gamma",
    "gamma_small_rad_us": "gamma",
    "delta_one_rad_us": "Delta",
    "delta_two_rad_us": "delta",
    "delta0_rad_us": "Delta0",
    "gamma_acs": "gamma_acs",
    "sigma_z_mm": "sigma_z",
}
_FIELD_TO_KEY = {v: k for k, v in PARAM_FILE_KEYS.items()}


def params_from_mapping(data: Mapping[str, float], base: PhysicalParams | None = None) -> PhysicalParams:
    """Build parameters from a flat parameter-file mapping.

    Missing keys fall back to ``base`` (defaults if omitted); unknown keys are
    rejected.
    """
    if not isinstance(data, Mapping):
        raise ParameterError("parameter file must contain a flat JSON object")
    unknown = sorted(set(data) - set(PARAM_FILE_KEYS))
    if unknown:
        raise ParameterError(f"unknown parameter keys: {', '.join(unknown)}")
    changes = {}
    for key, value in data.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"parameter {key!r} must be a number, got {value!r}")
        changes[PARAM_FILE_KEYS[key]] = float(value)
    return replace(base or default_params(), **changes)


def load_params(path: str | Path) -> PhysicalParams:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_mapping(data)


def params_to_mapping(params: PhysicalParams) -> dict[str, float]:
    return {_FIELD_TO_KEY[name]: value for name, value in asdict(params).items()}


def coupling_profile(params: PhysicalParams, z):
    """Gaussian coupling constant g(z) in mm^-1 us^-1."""
    z = np.asarray(z, dtype=float)
    return params.g0 * np.exp(-0.5 * (z / params.sigma_z) ** 2)


def coupling_integral(params: PhysicalParams, z_a, z_b):
    """Exact integral of g(z) between ``z_a`` and ``z_b`` (elementwise)."""
    s = params.sigma_z * math.sqrt(2.0)
    scale = params.g0 * params.sigma_z * math.sqrt(math.pi / 2.0)
    return scale * (erf(np.asarray(z_b) / s) - erf(np.asarray(z_a) / s))


def optical_depth(params: PhysicalParams) -> float:
    """Resonant intensity absorption exponent (2/Gamma) * integral of g over all z.

    Diagnostic only: with the default g0 this is about 13, not the OD of 70
    quoted alongside it experimentally.
    """
    return 2.0 / params.Gamma * params.g0 * params.sigma_z * math.sqrt(TWO_PI)


class GridError(ValueError):
    """Raised when a grid cannot represent the requested fields."""


@dataclass(frozen=True)
class Grid:
    """Periodic spatial grid plus the active-window time step.

    Points are ``z_min + j*dz`` for ``j < nz`` with ``dz = (z_max - z_min)/nz``,
    so the domain length is exactly ``z_max - z_min`` for FFT purposes.  A 1D
    run uses ``nx == 1``; ``dx`` is then taken as 1 so transverse sums are
    plain values.
    """

    z_min: float = -15.0
    z_max: float = 15.0
    nz: int = 512
    x_min: float = 0.0
    x_max: float = 1.0
    nx: int = 1
    dt: float = 0.002
    t_max: float | None = None

    def __post_init__(self):
        if int(self.nz) != self.nz or self.nz < 2:
            raise GridError(f"nz must be an integer >= 2, got {self.nz}")
        if int(self.nx) != self.nx or self.nx < 1:
            raise GridError(f"nx must be a positive integer, got {self.nx}")
        if not self.z_max > self.z_min:
            raise GridError("z_max must exceed z_min")
        if self.nx > 1 and not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")
        if not self.dt > 0:
            raise GridError(f"dt must be positive, got {self.dt}")

    @property
    def is_2d(self) -> bool:
        return self.nx > 1

    @property
    def length_z(self) -> float:
        return self.z_max - self.z_min

    @property
    def length_x(self) -> float:
        return self.x_max - self.x_min if self.is_2d else 1.0

    @property
    def dz(self) -> float:
        return self.length_z / self.nz

    @property
    def dx(self) -> float:
        return self.length_x / self.nx if self.is_2d else 1.0

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.nz)

    @property
    def x(self) -> np.ndarray:
        if not self.is_2d:
            return np.zeros(1)
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def nyquist_z(self) -> float:
        return math.pi / self.dz

    @property
    def nyquist_x(self) -> float:
        return math.pi / self.dx if self.is_2d else 0.0

    def check_resolves(self, k, samples_per_period: float = 8.0, what: str = "wavevector") -> None:
        """Require at least ``samples_per_period`` grid points per period of ``k``.

        ``k`` is a ``(kx, kz)`` pair in rad/mm.  The check is made along the
        period direction, i.e. on the projected spacing ``|kx dx| + |kz dz|``
        per step in the worst case.
        """
        kx, kz = float(k[0]), float(k[1])
        if kx != 0.0 and not self.is_2d:
            raise GridError(f"{what} ({kx:g}, {kz:g}) rad/mm has a transverse component but the grid is 1D")
        for comp, step, axis in ((kx, self.dx, "x"), (kz, self.dz, "z")):
            if comp == 0.0:
                continue
            samples = TWO_PI / (abs(comp) * step)
            if samples < samples_per_period:
                raise GridError(
                    f"{what} ({kx:g}, {kz:g}) rad/mm is under-resolved along {axis}: "
                    f"{samples:.2f} samples per period, need {samples_per_period:g}"
                )

    def with_(self, **changes) -> "Grid":
        return replace(self, **changes)


def grid_for_wavevectors(
    kz_max: float = 0.0,
    kx_values=(),
    nz: int | None = None,
    nx: int | None = None,
    z_half: float = 15.0,
    dt: float = 0.002,
    samples_per_period: float = 8.0,
) -> Grid:
    """Pick a grid resolving every wavevector a protocol uses.

    ``nz`` defaults to the smallest power of two giving ``samples_per_period``
    points per period of ``kz_max`` (at least 512).  For transverse protocols
    the x box is made periodic for all ``kx_values``: its length is an integer
    number of periods of the smallest non-zero ``|kx|``, and every other value
    must be an integer multiple of it.
    """
    length = 2.0 * z_half
    if nz is None:
        nz = 512
        while kz_max > 0 and TWO_PI / (kz_max * length / nz) < samples_per_period:
            nz *= 2
    kx = sorted({abs(float(k)) for k in kx_values if k != 0.0})
    if not kx:
        if nx is not None and nx > 1:
            raise GridError("nx > 1 requested but the protocol has no transverse structure")
        return Grid(z_min=-z_half, z_max=z_half, nz=nz, dt=dt)
    if nx is None:
        nx = 128
    if nx < 2:
        raise GridError(
            f"protocol uses transverse wavevectors {kx} rad/mm and needs a 2+1D grid; nx={nx} is not allowed"
        )
    base, k_top = kx[0], kx[-1]
    for k in kx:
        ratio = k / base
        if abs(ratio - round(ratio)) > 1e-9:
            raise GridError(f"transverse wavevector {k:g} is not an integer multiple of {base:g}")
    periods = int(math.floor(nx * base / (samples_per_period * k_top) + 1e-9))
    if periods < 1:
        raise GridError(
            f"nx={nx} cannot resolve transverse wavevector {k_top:g} rad/mm with "
            f"{samples_per_period:g} samples per period"
        )
    length_x = periods * TWO_PI / base
    return Grid(z_min=-z_half, z_max=z_half, nz=nz, x_min=-length_x / 2, x_max=length_x / 2, nx=nx, dt=dt)


def flat_top(t, t0: float, duration: float, rise: float = DEFAULT_RISE_TIME):
    """Raised-cosine flat-top window on ``[t0, t0 + duration]``.

    Each edge takes ``rise`` (clipped to half the duration) to go 0 -> 1.
    """
    t = np.asarray(t, dtype=float)
    rise = min(rise, duration / 2.0)
    out = np.zeros_like(t)
    tau = t - t0
    inside = (tau >= 0.0) & (tau <= duration)
    out[inside] = 1.0
    if rise > 0:
        up = inside & (tau < rise)
        out[up] = 0.5 * (1.0 - np.cos(math.pi * tau[up] / rise))
        down = inside & (tau > duration - rise)
        out[down] = 0.5 * (1.0 - np.cos(math.pi * (duration - tau[down]) / rise))
    return out


@dataclass(frozen=True)
class PulseSpec:
    t0: float
    duration: float = DEFAULT_PULSE_DURATION
    peak_rabi: complex = DEFAULT_SIGNAL_RABI
    kx: float = 0.0
    phase: float = 0.0
    rise: float = DEFAULT_RISE_TIME

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    def envelope(self, t):
        return self.peak_rabi * np.exp(1j * self.phase) * flat_top(t, self.t0, self.duration, self.rise)


@dataclass(frozen=True)
class OpticalField:
    """Signal Rabi envelope on the (x, z) grid at one instant, co-moving frame."""

    omega: np.ndarray
    grid: Grid
    t: float = 0.0


def _frozen_copy(a) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpinWave:
    """Stored coherence ``S`` on a grid, array shape ``(nx, nz)``.

    Immutable: the array is copied on construction and marked read-only.
    """

    s: np.ndarray
    grid: Grid = field(default_factory=Grid)

    def __post_init__(self):
        s = np.asarray(self.s)
        if s.ndim == 1:
            s = s[np.newaxis, :]
        if s.shape != self.grid.shape:
            raise GridError(f"spin-wave shape {s.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "s", _frozen_copy(s))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpinWave":
        return cls(np.zeros(grid.shape, dtype=complex), grid)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.s) ** 2) * self.grid.dx * self.grid.dz)

    def scaled(self, factor: complex) -> "SpinWave":
        return SpinWave(self.s * factor, self.grid)
