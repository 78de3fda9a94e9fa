"""Protocol step lists, validation, the built-in experiments and their execution."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .core import (
    DEFAULT_COUPLING_RABI,
    DEFAULT_PULSE_DURATION,
    DEFAULT_SIGNAL_RABI,
    PARAM_FILE_KEYS,
    TWO_PI,
    Grid,
    PhysicalParams,
    PulseSpec,
    SpinWave,
    default_params,
    grid_for_wavevectors,
)
from .gratings import GratingShape, GratingSpec, solve_equal_orders
from .solver import CouplingWindow, FieldSchedule, RunResult, Simulation, free_rate

DEFAULT_TAU = 3.0
READ_DURATION = 1.0
GAP = 0.5

K_TRI = 9.6
K_RAMSEY = 22.0
K_TRANSVERSE = 75.4
K_2D = (12.0, 5.0)


class ProtocolError(ValueError):
    """Violation of the protocol rules; ``index`` points at the offending step."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Pulse:
    t: float
    dur: float = DEFAULT_PULSE_DURATION
    amp: float = DEFAULT_SIGNAL_RABI
    kx: float = 0.0
    phase: float = 0.0

    def spec(self) -> PulseSpec:
        return PulseSpec(self.t, self.dur, self.amp, self.kx, self.phase)


@dataclass(frozen=True)
class Coupling:
    t: float
    dur: float
    amp: float = DEFAULT_COUPLING_RABI


@dataclass(frozen=True)
class Grate:
    t: float
    grating: GratingSpec


@dataclass(frozen=True)
class Read:
    t: float
    dur: float = READ_DURATION
    amp: float = DEFAULT_COUPLING_RABI


@dataclass(frozen=True)
class Detect:
    kind: str
    t1: float
    t2: float
    kx: float | None = None

    def __post_init__(self):
        if self.kind not in ("apd", "camera"):
            raise ProtocolError(f"unknown detector kind {self.kind!r}; use apd or camera")


@dataclass(frozen=True)
class Sweep:
    path: str
    start: float
    stop: float
    steps: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, int(self.steps))


Step = Pulse | Coupling | Grate | Read | Detect

STEP_KINDS = {Pulse: "pulse", Coupling: "coupling", Grate: "grate", Read: "read", Detect: "detect"}


def _t(step) -> float:
    return step.t1 if isinstance(step, Detect) else step.t


def _window(step):
    if isinstance(step, (Pulse, Coupling, Read)):
        return (step.t, step.t + step.dur)
    return None


@dataclass(frozen=True)
class Protocol:
    """Time-ordered steps plus an optional sweep.

    ``tau`` records the storage delay between the first two pulses and is
    used as the theoretical Ramsey period scale.
    """

    steps: tuple = ()
    sweep: Sweep | None = None
    name: str = field(default="", compare=False)
    spans: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def of_kind(self, cls) -> list:
        return [s for s in self.steps if isinstance(s, cls)]

    @property
    def needs_2d(self) -> bool:
        return any(p.kx != 0.0 for p in self.of_kind(Pulse)) or any(
            g.grating.k[0] != 0.0 for g in self.of_kind(Grate)
        ) or any(d.kind == "camera" for d in self.of_kind(Detect))

    @property
    def tau(self) -> float | None:
        pulses = sorted({p.t for p in self.of_kind(Pulse)})
        return pulses[1] - pulses[0] if len(pulses) > 1 else None

    def validate(self) -> "Protocol":
        validate(self)
        return self


def validate(protocol: Protocol) -> None:
    steps = protocol.steps
    lit = [(i, s, _window(s)) for i, s in enumerate(steps) if _window(s) is not None]
    for i, s in enumerate(steps):
        if isinstance(s, Grate):
            for j, other, (a, b) in lit:
                if a < s.t < b:
                    raise ProtocolError(
                        f"grating at t={s.t:g} us overlaps the {STEP_KINDS[type(other)]} window "
                        f"[{a:g}, {b:g}] us; gratings are applied only in dark periods",
                        i,
                    )
    last = -math.inf
    for i, s in enumerate(steps):
        if _t(s) < last - 1e-12:
            raise ProtocolError(f"step {i + 1} starts at t={_t(s):g} us, before the previous step; steps must be time-ordered", i)
        last = _t(s)
        if isinstance(s, (Pulse, Coupling, Read)) and not s.dur > 0:
            raise ProtocolError(f"step {i + 1}: duration must be positive", i)
        if isinstance(s, Detect) and not s.t2 > s.t1:
            raise ProtocolError(f"step {i + 1}: detection window needs t2 > t1", i)
        if isinstance(s, (Coupling, Read)) and s.amp < 0:
            raise ProtocolError(f"step {i + 1}: coupling amplitude must be non-negative", i)
    for m, (i, s, (a, b)) in enumerate(lit):
        for j, o, (c, d) in lit[m + 1:]:
            if not (a < d and c < b):
                continue
            pair = {type(s), type(o)}
            if Read in pair and pair != {Read}:
                other = o if isinstance(s, Read) else s
                raise ProtocolError(
                    f"read window [{a if isinstance(s, Read) else c:g}, {b if isinstance(s, Read) else d:g}] us "
                    f"overlaps a {STEP_KINDS[type(other)]} window; read windows carry coupling light only",
                    j,
                )
            if pair == {Read} or pair == {Coupling}:
                raise ProtocolError(f"overlapping {STEP_KINDS[type(s)]} windows at t={c:g} us", j)
    if protocol.sweep is not None:
        resolve_path(protocol, protocol.sweep.path)
        if int(protocol.sweep.steps) < 1:
            raise ProtocolError("sweep needs at least one step")


# ---------------------------------------------------------------- sweeps

_STEP_FIELDS = {
    "pulse": ("t", "dur", "amp", "kx", "phase"),
    "coupling": ("t", "dur", "amp"),
    "grate": ("t", "dur", "kx", "kz", "a", "zeta"),
    "read": ("t", "dur", "amp"),
    "detect": ("t1", "t2", "kx"),
}
_KIND_CLASSES = {v: k for k, v in STEP_KINDS.items()}
_PARAM_FIELDS = set(PARAM_FILE_KEYS.values())


def resolve_path(protocol: Protocol, path: str):
    """Split ``kind<index>.field`` or ``params.<name>`` into a target."""
    head, _, fld = path.partition(".")
    if not fld:
        raise ProtocolError(f"sweep path {path!r} must look like step.field or params.name")
    head_l, fld_l = head.lower(), fld.lower()
    if head_l == "params":
        # attribute names are case-sensitive (Delta vs delta), file keys are not
        if fld in _PARAM_FIELDS:
            return ("params", fld)
        if fld_l in PARAM_FILE_KEYS:
            return ("params", PARAM_FILE_KEYS[fld_l])
        raise ProtocolError(f"unknown parameter {fld!r} in sweep path")
    kind = head_l.rstrip("0123456789")
    num = head_l[len(kind):]
    if kind not in _KIND_CLASSES or not num:
        raise ProtocolError(f"sweep path {path!r}: expected pulse<n>, coupling<n>, grate<n>, read<n> or detect<n>")
    if fld_l not in _STEP_FIELDS[kind]:
        raise ProtocolError(f"sweep path {path!r}: {kind} has no field {fld!r}")
    idx = int(num)
    matches = [i for i, s in enumerate(protocol.steps) if isinstance(s, _KIND_CLASSES[kind])]
    if not 1 <= idx <= len(matches):
        raise ProtocolError(f"sweep path {path!r}: protocol has {len(matches)} {kind} steps")
    return ("step", matches[idx - 1], fld_l)


def with_value(protocol: Protocol, params: PhysicalParams, path: str, value: float):
    """Protocol and parameters with the swept quantity set to ``value``."""
    target = resolve_path(protocol, path)
    if target[0] == "params":
        return protocol, params.replace(**{target[1]: float(value)})
    _, i, fld = target
    step = protocol.steps[i]
    if isinstance(step, Grate):
        g = step.grating
        if fld == "t":
            new = Grate(float(value), g)
        else:
            kx, kz = g.k
            changes = {
                "dur": dict(duration=float(value)),
                "kx": dict(k=(float(value), kz)),
                "kz": dict(k=(kx, float(value))),
                "a": dict(amplitude=float(value)),
                "zeta": dict(zeta=float(value)),
            }[fld]
            new = Grate(step.t, replace(g, **changes))
    else:
        new = replace(step, **{fld: float(value)})
    steps = list(protocol.steps)
    steps[i] = new
    return Protocol(tuple(steps), protocol.sweep, protocol.name), params


# ---------------------------------------------------------------- built-ins


class _Timeline:
    def __init__(self):
        self.steps: list = []
        self.t = 0.0

    def pulse(self, t, **kw):
        dur = kw.get("dur", DEFAULT_PULSE_DURATION)
        self.steps.append(Pulse(t, **kw))
        self.t = max(self.t, t + dur)

    def pulses(self, t, specs):
        for kw in specs:
            self.steps.append(Pulse(t, **kw))
        dur = max(kw.get("dur", DEFAULT_PULSE_DURATION) for kw in specs)
        self.steps.append(Coupling(t, dur))
        self.t = t + dur

    def write(self, t, **kw):
        self.pulses(t, [kw])

    def grate(self, spec: GratingSpec):
        self.t += GAP
        self.steps.append(Grate(self.t, spec))

    def read(self, detectors=(("apd", None),)):
        self.t += GAP
        t0 = self.t
        self.steps.append(Read(t0, READ_DURATION))
        self.t = t0 + READ_DURATION
        for kind, kx in detectors:
            self.steps.append(Detect(kind, t0, self.t, kx))

    def build(self, name, sweep=None) -> Protocol:
        return Protocol(tuple(self.steps), sweep, name).validate()


def _sweep(path, values) -> Sweep | None:
    if values is None:
        return None
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ProtocolError("sweep needs at least one value")
    sweep = Sweep(path, float(v[0]), float(v[-1]), int(v.size))
    if not np.allclose(sweep.values(), v, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(v))))):
        raise ProtocolError("sweep values must be evenly spaced")
    return sweep


def triangle_pair(k: float = K_TRI, amplitude: float = TWO_PI) -> tuple[GratingSpec, GratingSpec]:
    a = GratingSpec(GratingShape.TRIANGLE, (0.0, k), amplitude, 0.0, label="A")
    return a, a.shifted_half_period()


def lifo(n_pulses: int = 2, tau: float = DEFAULT_TAU) -> Protocol:
    """Last-in first-out: pattern A after every write, then B before each read."""
    if n_pulses not in (2, 3):
        raise ProtocolError(f"lifo supports 2 or 3 pulses, got {n_pulses}")
    a, b = triangle_pair()
    tl = _Timeline()
    for i in range(n_pulses):
        tl.write(i * tau)
        tl.grate(a)
    for _ in range(n_pulses):
        tl.grate(b)
        tl.read()
    return tl.build(f"lifo{n_pulses}")


def fifo(n_pulses: int = 2, tau: float = DEFAULT_TAU) -> Protocol:
    """First-in first-out.

    Two pulses: A after the first write, B after the second, read, A, read.
    Three pulses need a second triangle wavevector ``1.5 k`` (patterns A2/B2)
    so that every pending wave keeps a distinct non-zero net pattern.
    """
    if n_pulses not in (2, 3):
        raise ProtocolError(f"fifo supports 2 or 3 pulses, got {n_pulses}")
    a, b = triangle_pair()
    tl = _Timeline()
    if n_pulses == 2:
        tl.write(0.0)
        tl.grate(a)
        tl.write(tau)
        tl.grate(b)
        tl.read()
        tl.grate(a)
        tl.read()
        return tl.build("fifo2")
    a2, b2 = triangle_pair(1.5 * K_TRI)
    tl.write(0.0)
    tl.grate(b)
    tl.grate(b2)
    tl.write(tau)
    tl.grate(a2)
    tl.write(2 * tau)
    tl.grate(a)
    tl.read()
    tl.grate(b)
    tl.grate(b2)
    tl.read()
    tl.grate(a2)
    tl.read()
    return tl.build("fifo3")


RAMSEY_PORT2_AMPLITUDE = 2.25 * math.pi


def ramsey_mz(delta_values=None, tau: float = DEFAULT_TAU, port2_amplitude: float = RAMSEY_PORT2_AMPLITUDE) -> Protocol:
    """Temporal Mach-Zehnder: two writes, half-depth B, read port 1, deeper B, read port 2."""
    a, b = triangle_pair(K_RAMSEY)
    tl = _Timeline()
    tl.write(0.0)
    tl.grate(a)
    tl.write(tau)
    tl.grate(b.with_amplitude(math.pi))
    tl.read()
    tl.grate(b.with_amplitude(port2_amplitude))
    tl.read()
    return tl.build("ramsey", _sweep("params.delta_two_rad_us", delta_values))


def geometric_phase(zeta_values=None, tau: float = DEFAULT_TAU) -> Protocol:
    """Sawtooth-displaced first pulse interfered with the second through a three-way triangle."""
    tri_amp = solve_equal_orders(GratingShape.TRIANGLE, "equal_012").amplitude
    tl = _Timeline()
    tl.write(0.0)
    tl.grate(GratingSpec(GratingShape.SAWTOOTH, (0.0, K_RAMSEY), TWO_PI, 0.0))
    tl.write(tau)
    tl.grate(GratingSpec(GratingShape.TRIANGLE, (0.0, K_RAMSEY), tri_amp))
    tl.read()
    tl.grate(GratingSpec(GratingShape.TRIANGLE, (0.0, K_RAMSEY), math.pi))
    tl.read()
    return tl.build("geometric", _sweep("grate1.zeta", zeta_values))


def transverse_bs(zeta_values=None) -> Protocol:
    """Two transverse modes K_x = +/-k mixed by a sine grating at 2k."""
    k = K_TRANSVERSE
    amp = solve_equal_orders(GratingShape.SINE, "equal_012").amplitude
    tl = _Timeline()
    tl.pulses(0.0, [dict(kx=k), dict(kx=-k)])
    tl.grate(GratingSpec(GratingShape.SINE, (2 * k, 0.0), amp))
    tl.read((("camera", k), ("camera", -k)))
    return tl.build("transverse", _sweep("grate1.zeta", zeta_values))


def two_dimensional(phase_values=None, tau: float = DEFAULT_TAU) -> Protocol:
    """Tilted square gratings acting on K_x and K_z at once."""
    k = K_2D
    tl = _Timeline()
    tl.write(0.0)
    tl.grate(GratingSpec(GratingShape.SQUARE, k, math.pi))
    tl.write(tau)
    tl.grate(GratingSpec(GratingShape.SQUARE, k, math.pi / 2))
    tl.read((("camera", 0.0),))
    tl.grate(GratingSpec(GratingShape.SAWTOOTH, (0.0, k[1]), TWO_PI))
    tl.read((("camera", -k[0]),))
    return tl.build("twod", _sweep("pulse2.phase", phase_values))


def fig1_demo(tau: float = DEFAULT_TAU) -> Protocol:
    """Three pulses stored, two interfered in K_x, released, then the first recovered."""
    k = K_TRANSVERSE
    sol = solve_equal_orders(GratingShape.SQUARE, "square_antisym")
    saw = GratingSpec(GratingShape.SAWTOOTH, (0.0, K_TRI), TWO_PI)
    sq = GratingSpec(GratingShape.SQUARE, (2 * k, 0.0), sol.amplitude, sol.zeta)
    tl = _Timeline()
    tl.write(0.0)
    tl.grate(saw)
    tl.pulses(tau, [dict(kx=k), dict(kx=-k)])
    tl.grate(sq)
    tl.read((("camera", -k), ("camera", k)))
    tl.grate(sq.shifted_half_period())
    tl.grate(GratingSpec(GratingShape.SAWTOOTH_REVERSED, (0.0, K_TRI), TWO_PI))
    tl.read((("apd", None),))
    return tl.build("fig1")


# The Raman resonance while writing is pulled by the coupling light shift,
# so the default detuning sweep is centred there rather than at zero.
RAMSEY_CENTRE = round(-free_rate(default_params(), DEFAULT_COUPLING_RABI).imag, 1)

BUILTINS = {
    "lifo2": lambda: lifo(2),
    "lifo3": lambda: lifo(3),
    "fifo2": lambda: fifo(2),
    "ramsey": lambda: ramsey_mz(np.linspace(-4.0, 4.0, 21) + RAMSEY_CENTRE),
    "geometric": lambda: geometric_phase(np.linspace(0.0, TWO_PI, 17)),
    "transverse": lambda: transverse_bs(np.linspace(0.0, TWO_PI, 17)),
    "twod": lambda: two_dimensional(np.linspace(0.0, TWO_PI, 13)),
    "fig1": fig1_demo,
}



# ---------------------------------------------------------------- execution


def grid_for(protocol: Protocol, nz: int | None = None, nx: int | None = None, dt: float = 0.002) -> Grid:
    kz = [abs(g.grating.k[1]) for g in protocol.of_kind(Grate)]
    kx = [p.kx for p in protocol.of_kind(Pulse)] + [g.grating.k[0] for g in protocol.of_kind(Grate)]
    kx += [d.kx for d in protocol.of_kind(Detect) if d.kx]
    if nx is not None and nx < 2 and protocol.needs_2d:
        raise ProtocolError(
            f"protocol uses transverse structure and needs a 2+1D grid; nx={nx} is not allowed (use nx >= 8)"
        )
    if protocol.needs_2d and not any(kx):
        kx = [1.0]
    return grid_for_wavevectors(max(kz, default=0.0), kx, nz=nz, nx=nx if protocol.needs_2d else None, dt=dt)


def schedule_of(protocol: Protocol) -> FieldSchedule:
    pulses = tuple(p.spec() for p in protocol.of_kind(Pulse))
    windows = tuple(CouplingWindow(s.t, s.dur, s.amp) for s in protocol.steps if isinstance(s, (Coupling, Read)))
    events = tuple((g.t, g.grating) for g in protocol.of_kind(Grate))
    return FieldSchedule(pulses, windows, events)


@dataclass
class ProtocolRun:
    result: RunResult
    ports: list[float]
    detectors: list[Detect]


def measure(result: RunResult, detectors) -> list[float]:
    out = []
    for d in detectors:
        window = (d.t1, d.t2)
        if d.kind == "apd":
            out.append(analysis.port_energy(result, window))
        else:
            if d.kx is None:
                k, dens = analysis.farfield_image(result, window)
                out.append(float(np.sum(dens) * TWO_PI / result.grid.length_x))
            else:
                out.append(analysis.camera_port(result, d.kx, window))
    return out


def execute(
    protocol: Protocol,
    params: PhysicalParams,
    grid: Grid | None = None,
    S0: SpinWave | None = None,
    snapshot_every: float | None = None,
    record_snapshots: bool = False,
) -> ProtocolRun:
    validate(protocol)
    grid = grid or grid_for(protocol)
    if protocol.needs_2d and not grid.is_2d:
        raise ProtocolError("protocol uses transverse structure and needs a 2+1D grid (nx > 1)")
    sim = Simulation(params, grid)
    result = sim.run(schedule_of(protocol), S0, snapshot_every=snapshot_every, record_snapshots=record_snapshots)
    detectors = protocol.of_kind(Detect)
    return ProtocolRun(result, measure(result, detectors), detectors)


def _sweep_point(args):
    protocol, params, grid, path, value = args
    p, prm = with_value(protocol, params, path, value)
    return execute(p, prm, grid).ports


def sweep(protocol: Protocol, params: PhysicalParams, grid: Grid | None = None, parallel: int = 1):
    """Port energies at every sweep value; returns ``(values, ports)`` with ports shape (n, n_detectors).

    Results do not depend on ``parallel``: each point is an independent,
    deterministic run.
    """
    if protocol.sweep is None:
        raise ProtocolError("protocol has no SWEEP")
    grid = grid or grid_for(protocol)
    values = protocol.sweep.values()
    jobs = [(protocol, params, grid, protocol.sweep.path, float(v)) for v in values]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            ports = list(pool.map(_sweep_point, jobs))
    else:
        ports = [_sweep_point(j) for j in jobs]
    return values, np.asarray(ports, dtype=float)


def theory_period(protocol: Protocol) -> float:
    """Expected fringe period in the swept variable."""
    if protocol.sweep is None:
        raise ProtocolError("protocol has no SWEEP")
    target = resolve_path(protocol, protocol.sweep.path)
    if target[0] == "params" and target[1] == "delta":
        tau = protocol.tau
        if not tau:
            raise ProtocolError("detuning sweep needs two pulses to define the storage delay")
        return TWO_PI / tau
    return TWO_PI
