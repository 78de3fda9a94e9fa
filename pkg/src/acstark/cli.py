"""Command-line entry point.

Exit codes: 0 success, 1 parse or validation error, 2 numerical error,
3 input/output error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, analysis, dsl
from .core import GridError, ParameterError, default_params, load_params, params_to_mapping
from .gratings import ConditionUnachievable, GratingShape, fourier_coeff, solve_equal_orders
from .protocols import BUILTINS, Protocol, ProtocolError, execute, grid_for, sweep, theory_period
from .solver import NumericalError, ScheduleError
from .spinwave import to_kspace, write_kspace_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_protocol(path: str) -> Protocol:
    try:
        return dsl.load(path)
    except OSError as exc:
        raise CliError(f"cannot read protocol {path}: {exc.strerror or exc}", EXIT_IO) from None


def _load_params(path: str | None):
    if path is None:
        return default_params()
    try:
        return load_params(path)
    except OSError as exc:
        raise CliError(f"cannot read parameter file {path}: {exc.strerror or exc}", EXIT_IO) from None


def _grid(protocol: Protocol, args):
    dt = args.dt_ns * 1e-3 if args.dt_ns is not None else 0.002
    if args.dt_ns is not None and not args.dt_ns > 0:
        raise CliError("--dt-ns must be positive", EXIT_INPUT)
    if args.nz is not None and args.nz < 2:
        raise CliError("--nz must be at least 2", EXIT_INPUT)
    return grid_for(protocol, nz=args.nz, nx=args.nx, dt=dt)


def _manifest(command, protocol, params, grid, outputs, extra=None) -> dict:
    text = dsl.serialize(protocol)
    data = {
        "tool": "acstark",
        "version": __version__,
        "command": command,
        "protocol_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "protocol": text,
        "params": params_to_mapping(params),
        "grid": {k: v for k, v in asdict(grid).items()},
        "outputs": outputs,
    }
    if extra:
        data.update(extra)
    return data


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prepare_out(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror or exc}", EXIT_IO) from None
    return path


def do_run(protocol: Protocol, params, grid, out: Path, snapshot_every=None) -> dict:
    outputs = ["apd.csv", "ports.csv"] + (["farfield.csv"] if grid.is_2d else [])
    if snapshot_every:
        outputs.append("snapshots/kspace_*.csv")
    manifest = _manifest("run", protocol, params, grid, outputs, {"snapshot_every_us": snapshot_every})
    _write_json(out / "manifest.json", manifest)
    run = execute(protocol, params, grid, snapshot_every=snapshot_every, record_snapshots=bool(snapshot_every))
    analysis.write_trace_csv(run.result, out / "apd.csv")
    with open(out / "ports.csv", "w", encoding="utf-8") as fh:
        fh.write("port,kind,t1,t2,kx,energy\n")
        for i, (d, e) in enumerate(zip(run.detectors, run.ports), start=1):
            kx = "" if d.kx is None else f"{d.kx:.10g}"
            fh.write(f"{i},{d.kind},{d.t1:.10g},{d.t2:.10g},{kx},{e:.12g}\n")
    if grid.is_2d:
        kx, dens = analysis.farfield_image(run.result)
        with open(out / "farfield.csv", "w", encoding="utf-8") as fh:
            fh.write("kx,intensity\n")
            for k, v in zip(kx, dens):
                fh.write(f"{k:.10g},{v:.12g}\n")
    if snapshot_every:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for i, (t, _, s) in enumerate(run.result.snapshots):
            write_kspace_csv(to_kspace(s), snap_dir / f"kspace_{i:04d}_t{t:.3f}.csv")
    return {"ports": run.ports}


def do_sweep(protocol: Protocol, params, grid, out: Path, parallel: int = 1) -> dict:
    if protocol.sweep is None:
        raise CliError("protocol has no SWEEP statement; add one or use `run`", EXIT_INPUT)
    period = theory_period(protocol)
    manifest = _manifest("sweep", protocol, params, grid, ["fringe.csv", "fringe_fit.json"])
    _write_json(out / "manifest.json", manifest)
    values, ports = sweep(protocol, params, grid, parallel=parallel)
    n_ports = ports.shape[1]
    with open(out / "fringe.csv", "w", encoding="utf-8") as fh:
        fh.write("sweep_value," + ",".join(f"port{i + 1}" for i in range(n_ports)) + "\n")
        for v, row in zip(values, ports):
            fh.write(f"{v:.12g}," + ",".join(f"{e:.12g}" for e in row) + "\n")
    fits = {"path": protocol.sweep.path, "period": period, "ports": {}}
    if len(values) >= 3:
        results = [analysis.fit_fringe(values, ports[:, i], period) for i in range(n_ports)]
        for i, f in enumerate(results, start=1):
            fits["ports"][f"port{i}"] = asdict(f)
        if n_ports >= 2:
            fits["phase_difference_12"] = analysis.phase_difference(results[0], results[1])
    else:
        fits["note"] = "fewer than 3 sweep points; no fit"
    _write_json(out / "fringe_fit.json", fits)
    return fits


def _execute_protocol(args, protocol: Protocol, command: str) -> int:
    params = _load_params(args.params)
    grid = _grid(protocol, args)
    out = _prepare_out(args.out)
    if command == "sweep":
        do_sweep(protocol, params, grid, out, parallel=max(1, args.parallel))
    else:
        do_run(protocol, params, grid, out, snapshot_every=args.snapshot_every)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    return _execute_protocol(args, _load_protocol(args.protocol), "run")


def cmd_sweep(args) -> int:
    return _execute_protocol(args, _load_protocol(args.protocol), "sweep")


def cmd_rerun(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read manifest {args.manifest}: {exc.strerror or exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"manifest is not valid JSON: {exc}", EXIT_INPUT) from None
    from .core import Grid, params_from_mapping

    protocol = dsl.parse(manifest["protocol"])
    params = params_from_mapping(manifest["params"])
    grid = Grid(**manifest["grid"])
    out = _prepare_out(args.out)
    if manifest["command"] == "sweep":
        do_sweep(protocol, params, grid, out, parallel=max(1, args.parallel))
    else:
        do_run(protocol, params, grid, out, snapshot_every=manifest.get("snapshot_every_us"))
    print(f"wrote {out}")
    return EXIT_OK


def _kv_args(items):
    values = {}
    for item in items:
        key, eq, raw = item.partition("=")
        if not eq:
            raise CliError(f"expected key=value, got {item!r}", EXIT_INPUT)
        try:
            values[key.lower()] = dsl.parse_number(raw)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
    return values


def _shape(name: str) -> GratingShape:
    try:
        return GratingShape.parse(name)
    except ValueError:
        raise CliError(f"unknown shape {name!r}; use tri, saw, sawr, square or sine", EXIT_INPUT) from None


def cmd_solve(args) -> int:
    shape = _shape(args.shape)
    try:
        sol = solve_equal_orders(shape, args.condition)
    except ConditionUnachievable as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    print(json.dumps({
        "shape": shape.value,
        "condition": sol.condition,
        "amplitude": sol.amplitude,
        "amplitude_over_pi": sol.amplitude / math.pi,
        "zeta": sol.zeta,
        "residual": sol.residual,
        "common_magnitude": sol.common_magnitude,
    }, indent=2))
    return EXIT_OK


def cmd_coeffs(args) -> int:
    shape = _shape(args.shape)
    kv = _kv_args(args.values)
    unknown = set(kv) - {"a", "zeta", "gamma_acs"}
    if unknown:
        raise CliError(f"unknown argument(s) {', '.join(sorted(unknown))}; use A=, zeta=, gamma_acs=", EXIT_INPUT)
    amp = kv.get("a", args.amplitude)
    if amp is None:
        raise CliError("amplitude required (A=<value>)", EXIT_INPUT)
    orders = np.arange(-args.n, args.n + 1)
    c = fourier_coeff(shape, amp, kv.get("zeta", 0.0), orders, gamma_acs=kv.get("gamma_acs", 0.0))
    print("n,re,im,abs")
    for n, v in zip(orders, np.atleast_1d(c)):
        print(f"{n},{v.real:.15g},{v.imag:.15g},{abs(v):.15g}")
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.name == "list" or args.name not in BUILTINS:
        if args.name != "list":
            print(f"unknown demo {args.name!r}", file=sys.stderr)
        print("\n".join(BUILTINS))
        return EXIT_OK if args.name == "list" else EXIT_INPUT
    protocol = BUILTINS[args.name]()
    out = _prepare_out(args.out)
    (out / f"{args.name}.swp").write_text(dsl.serialize(protocol), encoding="utf-8")
    return _execute_protocol(args, protocol, "sweep" if protocol.sweep is not None else "run")


def _common(p):
    p.add_argument("--params", help="JSON parameter file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--nz", type=int, help="z grid points")
    p.add_argument("--nx", type=int, help="x grid points (2+1D protocols)")
    p.add_argument("--dt-ns", type=float, help="time step during active windows, ns")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--snapshot-every", type=float, help="spin-wave snapshot cadence, us")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acstark", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"acstark {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a .swp protocol once")
    p.add_argument("protocol")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the protocol's SWEEP and fit fringes")
    p.add_argument("protocol")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rerun", help="reproduce outputs from a manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", default="out")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_rerun)

    p = sub.add_parser("solve", help="solve an equal-order grating condition")
    p.add_argument("shape")
    p.add_argument("condition", choices=["zero_c0", "equal_012", "square_antisym"])
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("coeffs", help="print diffraction-order coefficients as CSV")
    p.add_argument("shape")
    p.add_argument("values", nargs="*", help="A=<amp> [zeta=<rad>] [gamma_acs=<v>]")
    p.add_argument("--amplitude", type=dsl.parse_number)
    p.add_argument("-n", type=int, default=4, help="largest |order| listed")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("demo", help="run a built-in protocol (`demo list` for names)")
    p.add_argument("name")
    _common(p)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except dsl.DSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProtocolError, ScheduleError, GridError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
