"""Line-oriented protocol language (``.swp`` files).

One statement per line, ``#`` starts a comment, keywords and keys are
case-insensitive and ``key=value`` pairs may come in any order::

    PULSE    t=0 dur=0.3 amp=0.314 kx=0 phase=0
    COUPLING t=0 dur=0.3 amp=56.5
    GRATE    shape=tri t=0.8 kz=9.6 A=2pi zeta=0
    READ     t=2 dur=1
    DETECT   kind=apd t1=2 t2=3
    SWEEP    path=grate1.zeta from=0 to=2pi steps=17

Numbers accept a ``pi`` suffix (``2pi``, ``1.16pi``, ``pi``).  A grating
amplitude may be ``solve:<condition>``, resolved by the root solver when
the text is parsed; serialisation writes the resolved number.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .core import DEFAULT_COUPLING_RABI, DEFAULT_PULSE_DURATION, DEFAULT_SIGNAL_RABI
from .gratings import (
    EQUAL_ORDER_CONDITIONS,
    ConditionUnachievable,
    GratingShape,
    GratingSpec,
    solve_equal_orders,
)
from .protocols import (
    READ_DURATION,
    Coupling,
    Detect,
    Grate,
    Protocol,
    ProtocolError,
    Pulse,
    Read,
    Sweep,
    validate,
)


@dataclass(frozen=True)
class SourceSpan:
    """1-based line, 1-based start column, exclusive end column."""

    line: int
    col_start: int
    col_end: int

    def __str__(self):
        return f"line {self.line}, columns {self.col_start}-{self.col_end - 1}"


class DSLError(ValueError):
    def __init__(self, message: str, span: SourceSpan | None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_TOKEN = re.compile(r"\S+")

# key -> (required, kind); kind is "num", "int" or "str"
_SCHEMA = {
    "PULSE": {"t": (True, "num"), "dur": (False, "num"), "amp": (False, "num"), "kx": (False, "num"), "phase": (False, "num")},
    "COUPLING": {"t": (True, "num"), "dur": (True, "num"), "amp": (False, "num")},
    "GRATE": {
        "shape": (True, "str"),
        "t": (True, "num"),
        "dur": (False, "num"),
        "kz": (False, "num"),
        "kx": (False, "num"),
        "a": (True, "amp"),
        "zeta": (False, "num"),
    },
    "READ": {"t": (True, "num"), "dur": (False, "num"), "amp": (False, "num")},
    "DETECT": {"kind": (True, "str"), "t1": (True, "num"), "t2": (True, "num"), "kx": (False, "num")},
    "SWEEP": {"path": (True, "str"), "from": (True, "num"), "to": (True, "num"), "steps": (True, "int")},
}


def parse_number(text: str) -> float:
    """Float literal with optional ``pi`` multiplier; raises ValueError."""
    low = text.lower()
    factor = 1.0
    if low.endswith("pi"):
        factor = math.pi
        low = low[:-2]
        if low in ("", "+"):
            return math.pi
        if low == "-":
            return -math.pi
    if not _NUMBER.fullmatch(low):
        raise ValueError(f"not a number: {text!r}")
    value = float(low) * factor
    if not math.isfinite(value):
        raise ValueError(f"number out of range: {text!r}")
    return value


def _statement(line_no: int, line: str):
    """Tokens of one line as (text, span) pairs, comment stripped."""
    code = line.split("#", 1)[0]
    return [(m.group(), SourceSpan(line_no, m.start() + 1, m.end() + 1)) for m in _TOKEN.finditer(code)]


def _convert(kind, key, raw, span, shape=None):
    try:
        if kind == "num":
            return parse_number(raw)
        if kind == "int":
            if not re.fullmatch(r"[+-]?\d+", raw):
                raise ValueError(f"expected an integer, got {raw!r}")
            return int(raw)
        if kind == "amp":
            if raw.lower().startswith("solve:"):
                return ("solve", raw[6:].lower())
            return parse_number(raw)
    except ValueError as exc:
        raise DSLError(f"bad value for {key}: {exc}", span) from None
    return raw


def _build(keyword, values, spans, line_span):
    def get(key, default=None):
        return values.get(key, default)

    if keyword == "PULSE":
        return Pulse(get("t"), get("dur", DEFAULT_PULSE_DURATION), get("amp", DEFAULT_SIGNAL_RABI), get("kx", 0.0), get("phase", 0.0))
    if keyword == "COUPLING":
        return Coupling(get("t"), get("dur"), get("amp", DEFAULT_COUPLING_RABI))
    if keyword == "READ":
        return Read(get("t"), get("dur", READ_DURATION), get("amp", DEFAULT_COUPLING_RABI))
    if keyword == "DETECT":
        kind = get("kind").lower()
        if kind not in ("apd", "camera"):
            raise DSLError(f"unknown detector kind {get('kind')!r}; use apd or camera", spans["kind"])
        return Detect(kind, get("t1"), get("t2"), get("kx"))
    if keyword == "SWEEP":
        if get("steps") < 1:
            raise DSLError("SWEEP needs steps >= 1", spans["steps"])
        return Sweep(get("path"), get("from"), get("to"), get("steps"))
    # GRATE
    try:
        shape = GratingShape.parse(get("shape"))
    except ValueError:
        raise DSLError(
            f"unknown grating shape {get('shape')!r}; use tri, saw, sawr, square or sine", spans["shape"]
        ) from None
    amp = get("a")
    zeta = get("zeta", 0.0)
    if isinstance(amp, tuple):
        cond = amp[1]
        if cond not in EQUAL_ORDER_CONDITIONS:
            raise DSLError(f"unknown solve condition {cond!r}; use one of {', '.join(EQUAL_ORDER_CONDITIONS)}", spans["a"])
        try:
            sol = solve_equal_orders(shape, cond)
        except ConditionUnachievable as exc:
            raise DSLError(f"unresolved solve condition: {exc}", spans["a"]) from None
        amp = sol.amplitude
        if cond == "square_antisym":
            zeta = zeta + sol.zeta
    if amp < 0:
        raise DSLError("grating amplitude must be non-negative", spans["a"])
    spec = GratingSpec(shape, (get("kx", 0.0), get("kz", 0.0)), amp, zeta, get("dur", 2.0))
    return Grate(get("t"), spec)


def parse(text) -> Protocol:
    """Parse protocol text; raises DSLError carrying a SourceSpan."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DSLError(f"input is not valid UTF-8 (byte {exc.start})", SourceSpan(1, 1, 2)) from None
    steps, spans = [], []
    sweep = sweep_span = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = _statement(line_no, line)
        if not tokens:
            continue
        word, wspan = tokens[0]
        keyword = word.upper()
        if keyword not in _SCHEMA:
            raise DSLError(f"unknown statement {word!r}; expected one of {', '.join(_SCHEMA)}", wspan)
        schema = _SCHEMA[keyword]
        values, key_spans = {}, {}
        for tok, span in tokens[1:]:
            key, eq, raw = tok.partition("=")
            if not eq or not key or not raw:
                raise DSLError(f"expected key=value, got {tok!r}", span)
            lkey = key.lower()
            if lkey not in schema:
                raise DSLError(f"unknown key {key!r} for {keyword}", span)
            if lkey in values:
                raise DSLError(f"duplicate key {key!r}", span)
            values[lkey] = _convert(schema[lkey][1], key, raw, span)
            key_spans[lkey] = span
        line_span = SourceSpan(line_no, wspan.col_start, tokens[-1][1].col_end)
        missing = [k for k, (req, _) in schema.items() if req and k not in values]
        if missing:
            raise DSLError(f"{keyword} is missing required key(s): {', '.join(missing)}", line_span)
        try:
            item = _build(keyword, values, key_spans, line_span)
        except (ProtocolError, ValueError) as exc:
            if isinstance(exc, DSLError):
                raise
            raise DSLError(str(exc), line_span) from None
        if isinstance(item, Sweep):
            if sweep is not None:
                raise DSLError(f"only one SWEEP allowed (first at line {sweep_span.line})", line_span)
            sweep, sweep_span = item, line_span
        else:
            steps.append(item)
            spans.append(line_span)
    protocol = Protocol(tuple(steps), sweep, spans=tuple(spans))
    try:
        validate(protocol)
    except ProtocolError as exc:
        span = spans[exc.index] if exc.index is not None and exc.index < len(spans) else sweep_span
        raise DSLError(str(exc), span) from None
    return protocol


def load(path) -> Protocol:
    with open(path, "rb") as fh:
        return parse(fh.read())


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    v = float(v)
    return repr(0.0 if v == 0.0 else v)


def _line(keyword: str, pairs: dict) -> str:
    order = [k for k in ("t", "dur") if k in pairs]
    order += sorted((k for k in pairs if k not in ("t", "dur")), key=str.lower)
    return " ".join([keyword] + [f"{k}={pairs[k]}" for k in order])


def serialize(protocol: Protocol) -> str:
    """Canonical text: keys ordered t, dur, then alphabetically."""
    lines = []
    for s in protocol.steps:
        if isinstance(s, Pulse):
            lines.append(_line("PULSE", dict(t=_fmt(s.t), dur=_fmt(s.dur), amp=_fmt(s.amp), kx=_fmt(s.kx), phase=_fmt(s.phase))))
        elif isinstance(s, Coupling):
            lines.append(_line("COUPLING", dict(t=_fmt(s.t), dur=_fmt(s.dur), amp=_fmt(s.amp))))
        elif isinstance(s, Read):
            lines.append(_line("READ", dict(t=_fmt(s.t), dur=_fmt(s.dur), amp=_fmt(s.amp))))
        elif isinstance(s, Detect):
            pairs = dict(kind=s.kind, t1=_fmt(s.t1), t2=_fmt(s.t2))
            if s.kx is not None:
                pairs["kx"] = _fmt(s.kx)
            lines.append(_line("DETECT", pairs))
        elif isinstance(s, Grate):
            g = s.grating
            if not isinstance(g.shape, GratingShape):
                raise ValueError("tabulated grating profiles cannot be written as protocol text")
            pairs = dict(t=_fmt(s.t), dur=_fmt(g.duration), A=_fmt(g.amplitude), kx=_fmt(g.k[0]),
                         kz=_fmt(g.k[1]), shape=g.shape.short, zeta=_fmt(g.zeta))
            lines.append(_line("GRATE", pairs))
        else:
            raise TypeError(f"unknown step {s!r}")
    if protocol.sweep is not None:
        sw = protocol.sweep
        lines.append(_line("SWEEP", {"path": sw.path, "from": _fmt(sw.start), "to": _fmt(sw.stop), "steps": _fmt(int(sw.steps))}))
    return "\n".join(lines) + ("\n" if lines else "")
