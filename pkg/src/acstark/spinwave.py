"""Phase-mask action on stored spin waves and wavevector-space views.

The physical action of a grating is a pointwise multiply in real space
(``apply_mask``).  ``series_transform`` does the same job in wavevector
space, as a sum of shifted copies weighted by diffraction orders, and exists
to cross-check the two descriptions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import TWO_PI, Grid, GridError, PhysicalParams, SpinWave

_SQRT_2PI = math.sqrt(TWO_PI)


def apply_mask(S: SpinWave, mask, gamma_acs: float = 0.0) -> SpinWave:
    """``S * exp(i phi - gamma_acs |phi|)`` pointwise.

    The damping models dephasing from an inhomogeneous ac-Stark beam; it is
    proportional to the accumulated phase, not to its sign.
    """
    mask = np.asarray(mask, dtype=float)
    if mask.ndim == 1:
        mask = mask[np.newaxis, :]
    if mask.shape != S.grid.shape:
        raise GridError(f"mask shape {mask.shape} does not match spin-wave grid {S.grid.shape}")
    return SpinWave(S.s * np.exp(1j * mask - gamma_acs * np.abs(mask)), S.grid)


@dataclass(frozen=True)
class KSpaceView:
    """Spin wave on the (K_x, K_z) lattice, zero wavevector centred.

    Normalisation: each transformed axis carries ``step / sqrt(2 pi)``, so
    ``sum(|s_k|^2) * dKx * dKz == sum(|S|^2) * dx * dz``.  On a 1D grid the x
    axis is a single K_x = 0 entry with ``dKx = 1``.
    """

    s_k: np.ndarray
    kx: np.ndarray
    kz: np.ndarray
    grid: Grid

    @property
    def dkx(self) -> float:
        return TWO_PI / self.grid.length_x if self.grid.is_2d else 1.0

    @property
    def dkz(self) -> float:
        return TWO_PI / self.grid.length_z

    def energy(self) -> float:
        return float(np.sum(np.abs(self.s_k) ** 2) * self.dkx * self.dkz)

    def peak(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(np.abs(self.s_k)), self.s_k.shape)
        return float(self.kx[i]), float(self.kz[j])

    def kz_density(self) -> np.ndarray:
        """|s_k|^2 summed over K_x, as a function of K_z."""
        return np.sum(np.abs(self.s_k) ** 2, axis=0) * self.dkx


def _axes(grid: Grid):
    kz = np.fft.fftshift(np.fft.fftfreq(grid.nz, d=grid.dz)) * TWO_PI
    if grid.is_2d:
        kx = np.fft.fftshift(np.fft.fftfreq(grid.nx, d=grid.dx)) * TWO_PI
    else:
        kx = np.zeros(1)
    return kx, kz


def _scale(grid: Grid) -> float:
    scale = grid.dz / _SQRT_2PI
    if grid.is_2d:
        scale *= grid.dx / _SQRT_2PI
    return scale


def to_kspace(S: SpinWave) -> KSpaceView:
    """Spatial Fourier transform, phases referenced to the coordinate origin."""
    grid = S.grid
    kx, kz = _axes(grid)
    s_k = np.fft.fftshift(np.fft.fft2(S.s), axes=(0, 1)) * _scale(grid)
    s_k = s_k * np.exp(-1j * kz * grid.z_min)[np.newaxis, :]
    if grid.is_2d:
        s_k = s_k * np.exp(-1j * kx * grid.x_min)[:, np.newaxis]
    return KSpaceView(s_k, kx, kz, grid)


def from_kspace(view: KSpaceView) -> SpinWave:
    grid = view.grid
    s_k = view.s_k * np.exp(1j * view.kz * grid.z_min)[np.newaxis, :]
    if grid.is_2d:
        s_k = s_k * np.exp(1j * view.kx * grid.x_min)[:, np.newaxis]
    s = np.fft.ifft2(np.fft.ifftshift(s_k, axes=(0, 1))) / _scale(grid)
    return SpinWave(s, grid)


def series_transform(view: KSpaceView, coeffs, k_acs) -> KSpaceView:
    """Apply a grating as ``S(K) -> sum_n c_n S(K - n k_acs)``.

    ``coeffs`` is either a mapping ``{n: c_n}`` or a pair ``(orders, c)``.
    With the forward transform ``S(K) = int S(r) exp(-i K r)``, order n of the
    mask ``sum_n c_n exp(i n k.r)`` carries the wave from K - n k to K.

    Shifts that are whole lattice steps are applied as circular rolls (the
    real-space grid is periodic; wrapped orders keep their phase when the grid
    origin sits a whole number of steps from zero, as on symmetric grids).
    Fractional shifts fall back to band-limited interpolation with the
    periodic sinc (Dirichlet) kernel, and a warning is emitted; callers
    validating exact equivalence should use commensurate grids.
    """
    if isinstance(coeffs, dict):
        orders = np.fromiter(coeffs.keys(), dtype=int)
        values = np.array([coeffs[n] for n in orders], dtype=complex)
    else:
        orders, values = coeffs
        orders = np.asarray(orders, dtype=int)
        values = np.asarray(values, dtype=complex)
    kx, kz = float(k_acs[0]), float(k_acs[1])
    if kx != 0.0 and not view.grid.is_2d:
        raise GridError("transverse grating wavevector on a 1D spin wave")
    out = np.zeros_like(view.s_k)
    fractional = []
    for n, c in zip(orders, values):
        if c == 0:
            continue
        sx = n * kx / view.dkx if view.grid.is_2d else 0.0
        sz = n * kz / view.dkz
        ix, iz = round(sx), round(sz)
        if abs(sx - ix) < 1e-9 and abs(sz - iz) < 1e-9:
            out += c * np.roll(view.s_k, (ix, iz), axis=(0, 1))
        else:
            fractional.append(int(n))
            out += c * _dirichlet_shift(view, sx, sz)
    if fractional:
        warnings.warn(
            f"orders {fractional} shift by a non-integer number of K bins; "
            "used periodic-sinc interpolation",
            stacklevel=2,
        )
    return KSpaceView(out, view.kx, view.kz, view.grid)


def _dirichlet_shift(view: KSpaceView, sx: float, sz: float) -> np.ndarray:
    # a phase ramp in real space is a periodic-sinc interpolated shift in K
    grid = view.grid
    s = from_kspace(view).s
    ramp = np.exp(1j * sz * view.dkz * grid.z)[np.newaxis, :]
    if grid.is_2d:
        ramp = ramp * np.exp(1j * sx * view.dkx * grid.x)[:, np.newaxis]
    return to_kspace(SpinWave(s * ramp, grid)).s_k


def readable_fraction(S: SpinWave, params: PhysicalParams, pad: int = 8) -> float:
    """Share of spin-wave energy inside the phase-matched band ``|K_z| <= 1/sigma_z``.

    The spectrum is zero-padded ``pad`` times along z so the narrow band
    contains many samples.  Diagnostic only; retrieval itself is decided by
    the propagation solver.
    """
    total = float(np.sum(np.abs(S.s) ** 2))
    if total == 0.0:
        return 0.0
    nz = S.grid.nz * pad
    spec = np.abs(np.fft.fft(S.s, n=nz, axis=1)) ** 2
    kz = np.fft.fftfreq(nz, d=S.grid.dz) * TWO_PI
    band = np.abs(kz) <= 1.0 / params.sigma_z
    return float(spec[:, band].sum() / spec.sum())


def write_kspace_csv(view: KSpaceView, path) -> None:
    """Snapshot export: two axis rows (``kx,...`` and ``kz,...``), then |s_k|^2 rows."""
    density = np.abs(view.s_k) ** 2
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("kx," + ",".join(f"{v:.10g}" for v in view.kx) + "\n")
        fh.write("kz," + ",".join(f"{v:.10g}" for v in view.kz) + "\n")
        for row in density:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
