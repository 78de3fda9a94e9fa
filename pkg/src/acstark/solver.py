"""Adiabatically eliminated Maxwell-Bloch propagation on a z-t or x-z-t grid.

In the co-moving frame the signal envelope has no time derivative, so at
each instant it is obtained by marching in z through the medium; the spin
wave is then advanced in time with the field just computed.

The stored variable ``S`` here is the complex conjugate of the coherence
variable of the usual Raman equations, normalised by sqrt(2 g(z)).  With
that choice a signal ``exp(i kx x)`` writes a spin wave with ``K_x = +kx``
and the equations read::

    dOmega/dz = -i (g Omega + kappa Omega_C S) / D   (+ paraxial diffraction)
    dS/dt     = -i kappa Omega_C Omega / D + L(Omega_C) S

with ``D = 2 Delta + i Gamma`` and ``kappa = sqrt(g / 2)``; ``|S|^2 dz`` then
counts stored energy in the same units as ``|Omega|^2 dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_COUPLING_RABI,
    DEFAULT_RISE_TIME,
    SIGNAL_WAVELENGTH_MM,
    TWO_PI,
    Grid,
    GridError,
    PhysicalParams,
    PulseSpec,
    SpinWave,
    coupling_integral,
    coupling_profile,
    flat_top,
)
from .gratings import GratingSpec, render_mask
from .spinwave import apply_mask


class NumericalError(RuntimeError):
    """The requested time step cannot resolve the local dynamics."""


class ScheduleError(ValueError):
    """Inconsistent field schedule (e.g. a grating while the coupling is on)."""


MAX_RATE_STEP = 0.5


def free_rate(params: PhysicalParams, coupling: float) -> complex:
    """Local linear coefficient L of the spin-wave equation at coupling Omega_C.

    Contains decoherence, two-photon detuning, and the coupling-induced light
    shift and power broadening.  Conjugated to match the stored-wave
    convention described in the module docstring.
    """
    G, g_, Dl, dl = params.Gamma, params.gamma, params.Delta, params.delta
    num = -2 * G * dl - 2 * g_ * Dl + 1j * G * g_ + 1j * abs(coupling) ** 2 - 4j * dl * Dl
    return np.conj(num / (2.0 * (2.0 * Dl - 1j * G)))


def local_rate(params: PhysicalParams, grid: Grid, coupling: float) -> float:
    """Fastest rate (rad/us) the spin-wave step has to resolve.

    Sum of the local coefficient and the collective Raman read-out rate
    ``Omega_C^2 / |D|^2 * int g/2 dz``.
    """
    D = 2.0 * params.Delta + 1j * params.Gamma
    g_total = float(coupling_integral(params, grid.z_min, grid.z_max))
    return abs(free_rate(params, coupling)) + coupling**2 / abs(D) ** 2 * 0.5 * g_total


@dataclass(frozen=True)
class CouplingWindow:
    t0: float
    duration: float
    amplitude: float = DEFAULT_COUPLING_RABI
    rise: float = DEFAULT_RISE_TIME

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    def value(self, t):
        return self.amplitude * flat_top(t, self.t0, self.duration, self.rise)


@dataclass(frozen=True)
class FieldSchedule:
    pulses: tuple[PulseSpec, ...] = ()
    coupling_windows: tuple[CouplingWindow, ...] = ()
    acs_events: tuple[tuple[float, GratingSpec], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "coupling_windows", tuple(self.coupling_windows))
        events = sorted(((float(t), g) for t, g in self.acs_events), key=lambda e: e[0])
        object.__setattr__(self, "acs_events", tuple(events))
        for w in self.coupling_windows:
            if w.amplitude < 0:
                raise ScheduleError("coupling amplitude must be non-negative")
        for t, _ in self.acs_events:
            for w in self.coupling_windows:
                if w.t0 < t < w.t_end:
                    raise ScheduleError(
                        f"grating at t={t:g} us falls inside the coupling window "
                        f"[{w.t0:g}, {w.t_end:g}]; gratings are applied only in dark periods"
                    )
            for p in self.pulses:
                if p.t0 < t < p.t_end:
                    raise ScheduleError(f"grating at t={t:g} us overlaps the signal pulse at {p.t0:g} us")

    def coupling(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w in self.coupling_windows:
            out = out + w.value(t)
        return out

    def active_segments(self) -> list[tuple[float, float]]:
        """Merged time intervals during which light or coupling is present."""
        spans = sorted([(p.t0, p.t_end) for p in self.pulses] + [(w.t0, w.t_end) for w in self.coupling_windows])
        merged: list[list[float]] = []
        for a, b in spans:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return [(a, b) for a, b in merged]

    @property
    def t_end(self) -> float:
        ends = [b for _, b in self.active_segments()] + [t for t, _ in self.acs_events]
        return max(ends, default=0.0)


@dataclass
class RunResult:
    """Output of a propagation run.

    ``signal_out`` and ``signal_in`` have shape ``(nt, nx)``; samples live in
    the active segments only (``segments`` holds index ranges), dark periods
    carry no light.
    """

    t: np.ndarray
    signal_out: np.ndarray
    signal_in: np.ndarray
    segments: list[tuple[int, int]]
    grid: Grid
    params: PhysicalParams
    final: SpinWave
    initial: SpinWave
    snapshots: list[tuple[float, str, SpinWave]] = field(default_factory=list)
    ledger: dict[str, float] = field(default_factory=dict)

    @property
    def is_2d(self) -> bool:
        return self.grid.is_2d


def segment_energy(t: np.ndarray, power: np.ndarray, segments) -> float:
    return float(sum(np.trapezoid(power[a:b], t[a:b]) for a, b in segments if b - a > 1))


class Propagator:
    """Precomputed z-march for one parameter set and grid."""

    def __init__(self, params: PhysicalParams, grid: Grid, diffraction: bool = True):
        self.params = params
        self.grid = grid
        z = grid.z
        self.D = 2.0 * params.Delta + 1j * params.Gamma
        self.g = coupling_profile(params, z)
        self.kappa = np.sqrt(self.g / 2.0)
        # exact cell integrals of g keep the absorption exponent free of quadrature error
        cell = -1j * coupling_integral(params, z[:-1], z[1:]) / self.D
        self.diffraction = bool(diffraction and grid.is_2d)
        if self.diffraction:
            kx = np.fft.fftfreq(grid.nx, d=grid.dx) * TWO_PI
            k0 = TWO_PI / SIGNAL_WAVELENGTH_MM
            cell = cell[np.newaxis, :] - 1j * (kx**2 / (2.0 * k0))[:, np.newaxis] * grid.dz
        else:
            cell = cell[np.newaxis, :]
        C = np.zeros((cell.shape[0], grid.nz), dtype=complex)
        C[:, 1:] = np.cumsum(cell, axis=1)
        self.expC = np.exp(C)
        self.exp_negC = np.exp(-C)

    def march(self, S: np.ndarray, omega_in: np.ndarray, coupling: float) -> np.ndarray:
        """Signal envelope at every z node for spin wave ``S`` (shape (nx, nz)).

        Exponential integrator for the absorption/dispersion part with a
        trapezoid rule for the Raman source, second order in dz.
        """
        omega_in = np.broadcast_to(np.asarray(omega_in, dtype=complex), (self.grid.nx,))
        if coupling == 0.0:
            src = None
        else:
            src = (-1j * coupling / self.D) * self.kappa[np.newaxis, :] * S
        if self.diffraction:
            omega_in = np.fft.fft(omega_in)
            if src is not None:
                src = np.fft.fft(src, axis=0)
        out = omega_in[:, np.newaxis] * np.ones((1, self.grid.nz))
        if src is not None:
            q = self.exp_negC * src
            acc = np.zeros_like(q)
            acc[:, 1:] = np.cumsum(0.5 * self.grid.dz * (q[:, 1:] + q[:, :-1]), axis=1)
            out = out + acc
        out = self.expC * out
        if self.diffraction:
            out = np.fft.ifft(out, axis=0)
        return out

    def source(self, omega: np.ndarray, coupling: float) -> np.ndarray:
        return (-1j * coupling / self.D) * self.kappa[np.newaxis, :] * omega


def _phi1(x: complex) -> complex:
    return 1.0 if x == 0 else (np.exp(x) - 1.0) / x


def z_march(S: SpinWave, omega_boundary, params: PhysicalParams, coupling: float = 0.0, diffraction: bool = True):
    """Signal envelope through the medium for a fixed spin wave; shape (nx, nz)."""
    return Propagator(params, S.grid, diffraction).march(S.s, omega_boundary, coupling)


def spin_step(
    S: SpinWave,
    omega,
    params: PhysicalParams,
    dt: float,
    coupling: float = 0.0,
    coupling_mid: float | None = None,
    omega_in_mid=None,
    propagator: Propagator | None = None,
) -> SpinWave:
    """Advance the spin wave by ``dt``.

    Exponential midpoint: the uniform linear coefficient is integrated
    exactly, the Raman source is sampled at the half step after re-marching
    the field from the predicted spin wave.  ``omega`` must be the field for
    ``S`` at the start of the step.
    """
    prop = propagator or Propagator(params, S.grid)
    c_mid = coupling if coupling_mid is None else coupling_mid
    rate = local_rate(params, S.grid, max(abs(coupling), abs(c_mid)))
    if rate * dt > MAX_RATE_STEP:
        raise NumericalError(
            f"time step {dt * 1e3:.3g} ns too large: local rate {rate:.3g} rad/us gives "
            f"{rate * dt:.3g} rad per step (limit {MAX_RATE_STEP}); use a finer dt"
        )
    s_new = _midpoint(prop, S.s, np.asarray(omega), params, dt, coupling, c_mid,
                      omega[:, 0] if omega_in_mid is None else omega_in_mid)
    return SpinWave(s_new, S.grid)


def _midpoint(prop, s, omega, params, dt, c0, c_mid, omega_in_mid):
    L0 = free_rate(params, c0)
    h = 0.5 * dt
    s_half = np.exp(L0 * h) * s + h * _phi1(L0 * h) * prop.source(omega, c0)
    omega_half = prop.march(s_half, omega_in_mid, c_mid)
    L1 = free_rate(params, c_mid)
    return np.exp(L1 * dt) * s + dt * _phi1(L1 * dt) * prop.source(omega_half, c_mid)


class Simulation:
    """Runs a ``FieldSchedule`` through the medium."""

    def __init__(self, params: PhysicalParams, grid: Grid, diffraction: bool = True):
        self.params = params
        self.grid = grid
        self.prop = Propagator(params, grid, diffraction)
        self._masks: dict[int, tuple] = {}

    def _input(self, schedule: FieldSchedule, t: float) -> np.ndarray:
        out = np.zeros(self.grid.nx, dtype=complex)
        x = self.grid.x
        for p in schedule.pulses:
            if p.t0 <= t <= p.t_end:
                if p.kx != 0.0 and not self.grid.is_2d:
                    raise GridError(f"pulse with kx={p.kx:g} rad/mm needs a 2+1D grid")
                out = out + p.envelope(t) * np.exp(1j * p.kx * x)
        return out

    def _mask(self, spec: GratingSpec) -> np.ndarray:
        try:
            key = hash(spec)
        except TypeError:  # tabulated profiles hold arrays
            return render_mask(spec, self.grid)
        if key not in self._masks:
            self._masks[key] = (spec, render_mask(spec, self.grid))
        cached_spec, mask = self._masks[key]
        return mask if cached_spec == spec else render_mask(spec, self.grid)

    def run(
        self,
        schedule: FieldSchedule,
        S0: SpinWave | None = None,
        snapshot_every: float | None = None,
        record_snapshots: bool = False,
        t_start: float | None = None,
        t_stop: float | None = None,
    ) -> RunResult:
        params, grid, prop = self.params, self.grid, self.prop
        for p in schedule.pulses:
            if abs(p.kx) >= grid.nyquist_x and p.kx != 0.0:
                raise GridError(f"pulse kx={p.kx:g} rad/mm beyond the transverse Nyquist limit")
        S0 = S0 if S0 is not None else SpinWave.zeros(grid)
        s = np.array(S0.s, dtype=complex)
        dark = free_rate(params, 0.0)
        segments = schedule.active_segments()
        events = list(schedule.acs_events)
        for t_ev, _ in events:
            for a, b in segments:
                if a < t_ev < b:
                    raise ScheduleError(f"grating at t={t_ev:g} us falls inside an active window [{a:g}, {b:g}]")
        t_now = min([a for a, _ in segments] + [t for t, _ in events] + [0.0]) if t_start is None else t_start
        snapshots: list[tuple[float, str, SpinWave]] = []
        ts, outs, ins, seg_idx = [], [], [], []
        n_samples = 0

        def snap(t, label):
            if record_snapshots or snapshot_every:
                snapshots.append((t, label, SpinWave(s, grid)))

        def advance_dark(t_to):
            nonlocal s, t_now
            if t_to > t_now:
                s = np.exp(dark * (t_to - t_now)) * s
                t_now = t_to

        snap(t_now, "start")
        ev_i = 0
        for a, b in segments:
            while ev_i < len(events) and events[ev_i][0] <= a:
                t_ev, spec = events[ev_i]
                advance_dark(t_ev)
                s = apply_mask(SpinWave(s, grid), self._mask(spec), params.gamma_acs).s
                snap(t_ev, "grating")
                ev_i += 1
            advance_dark(a)
            snap(a, "segment start")
            n = max(1, int(math.ceil((b - a) / grid.dt - 1e-9)))
            h = (b - a) / n
            peak = float(np.max(schedule.coupling(np.linspace(a, b, 4 * n + 1))))
            rate = local_rate(params, grid, peak)
            if rate * h > MAX_RATE_STEP:
                raise NumericalError(
                    f"time step {h * 1e3:.3g} ns too large: local rate {rate:.3g} rad/us gives "
                    f"{rate * h:.3g} rad per step (limit {MAX_RATE_STEP}); use a finer dt"
                )
            seg_t = a + h * np.arange(n + 1)
            seg_out = np.zeros((n + 1, grid.nx), dtype=complex)
            seg_in = np.zeros((n + 1, grid.nx), dtype=complex)
            next_snap = a + snapshot_every if snapshot_every else None
            for i in range(n + 1):
                t = seg_t[i]
                c0 = float(schedule.coupling(t))
                w_in = self._input(schedule, t)
                omega = prop.march(s, w_in, c0)
                seg_out[i] = omega[:, -1]
                seg_in[i] = w_in
                if i == n:
                    break
                tm = t + 0.5 * h
                s = _midpoint(prop, s, omega, params, h, c0, float(schedule.coupling(tm)), self._input(schedule, tm))
                if next_snap is not None and t + h >= next_snap - 1e-12:
                    snapshots.append((t + h, "periodic", SpinWave(s, grid)))
                    next_snap += snapshot_every
            t_now = b
            ts.append(seg_t)
            outs.append(seg_out)
            ins.append(seg_in)
            seg_idx.append((n_samples, n_samples + n + 1))
            n_samples += n + 1
            snap(b, "segment end")
        while ev_i < len(events):
            t_ev, spec = events[ev_i]
            advance_dark(t_ev)
            s = apply_mask(SpinWave(s, grid), self._mask(spec), params.gamma_acs).s
            snap(t_ev, "grating")
            ev_i += 1
        if t_stop is not None:
            advance_dark(t_stop)
        final = SpinWave(s, grid)
        snap(t_now, "end")

        t_all = np.concatenate(ts) if ts else np.zeros(0)
        out_all = np.concatenate(outs) if outs else np.zeros((0, grid.nx), dtype=complex)
        in_all = np.concatenate(ins) if ins else np.zeros((0, grid.nx), dtype=complex)
        p_in = np.sum(np.abs(in_all) ** 2, axis=1) * grid.dx
        p_out = np.sum(np.abs(out_all) ** 2, axis=1) * grid.dx
        ledger = {
            "input": segment_energy(t_all, p_in, seg_idx),
            "transmitted": segment_energy(t_all, p_out, seg_idx),
            "stored_initial": S0.energy(),
            "stored_final": final.energy(),
        }
        return RunResult(t_all, out_all, in_all, seg_idx, grid, params, final, S0, snapshots, ledger)


def run(schedule: FieldSchedule, params: PhysicalParams, grid: Grid, S0: SpinWave | None = None, **kwargs) -> RunResult:
    diffraction = kwargs.pop("diffraction", True)
    return Simulation(params, grid, diffraction).run(schedule, S0, **kwargs)


def store_pulse(
    pulse: PulseSpec,
    S_current: SpinWave | None,
    params: PhysicalParams,
    grid: Grid,
    coupling: float = DEFAULT_COUPLING_RABI,
) -> SpinWave:
    """Write ``pulse`` into the medium with a coupling window matched to it."""
    window = CouplingWindow(pulse.t0, pulse.duration, coupling, pulse.rise)
    schedule = FieldSchedule(pulses=(pulse,), coupling_windows=(window,))
    return run(schedule, params, grid, S_current).final


def retrieve(
    S: SpinWave,
    params: PhysicalParams,
    grid: Grid,
    duration: float = 0.3,
    t0: float = 0.0,
    coupling: float = DEFAULT_COUPLING_RABI,
) -> tuple[RunResult, SpinWave]:
    """Read out with a coupling window; returns the run (trace) and what stays stored."""
    schedule = FieldSchedule(coupling_windows=(CouplingWindow(t0, duration, coupling),))
    result = run(schedule, params, grid, S)
    return result, result.final
