"""Run configuration: plain ``section.key = value`` text with exact round trip.

List-valued keys accept ``a,b,c`` or an inclusive range ``start:stop:step``.
Lines starting with ``# cfg `` are read as configuration, so the header of any
output table can be fed back in to re-run that point; other ``#`` lines are
comments.
"""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

HEADER_PREFIX = "# cfg "
WORKERS_ENV = "NSDI_WORKERS"

# keys that do not change results; left out of point hashes and table headers
_NON_PHYSICAL = {"run.output", "run.workers"}


class ConfigError(ValueError):
    """Invalid configuration; reported with exit status 2."""


@dataclass(frozen=True)
class GridSection:
    n_points: int = 672
    dx: float = 0.3


@dataclass(frozen=True)
class PulseSection:
    F0: tuple = (0.16,)
    omega: tuple = (0.094,)
    n_c: tuple = (2,)
    phi: tuple = (0.0,)
    phi_count: int = 0
    zip: bool = False


@dataclass(frozen=True)
class PotentialSection:
    epsilon: float = 0.6
    soften_repulsion: bool = True


@dataclass(frozen=True)
class AbsorberSection:
    x0_fraction: float = 0.8
    exponent: float = 0.125


@dataclass(frozen=True)
class PartitionSection:
    a: float = 6.0
    b: float = 12.0


@dataclass(frozen=True)
class GroundSection:
    path: str = ""
    dt_im: float = 0.05
    tol: float = 1e-10


@dataclass(frozen=True)
class YieldsSection:
    gauge: str = "length"
    stencil: str = "spectral"


@dataclass(frozen=True)
class MomentaSection:
    r_cut: float = 50.0
    w_cut: float = 10.0
    sigma_p: float = 0.07
    cut_time: float = 1.0
    cut_mixed: bool = True
    table_step: int = 4


@dataclass(frozen=True)
class RatesSection:
    eta: float = 0.95
    ratio: float = 0.019
    w02_mode: str = "ratio"
    ionization_energy: float = 0.98
    ion_ionization_energy: float = 1.85
    pulse: str = "envelope"
    tol: float = 1e-8


@dataclass(frozen=True)
class RunSection:
    dt: float = 0.05
    output: str = "out"
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    pulse: PulseSection = field(default_factory=PulseSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    absorber: AbsorberSection = field(default_factory=AbsorberSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    ground: GroundSection = field(default_factory=GroundSection)
    yields: YieldsSection = field(default_factory=YieldsSection)
    momenta: MomentaSection = field(default_factory=MomentaSection)
    rates: RatesSection = field(default_factory=RatesSection)
    run: RunSection = field(default_factory=RunSection)

    def keys(self):
        for sec in fields(self):
            for f in fields(getattr(self, sec.name)):
                yield f"{sec.name}.{f.name}"

    def get(self, key: str):
        sec, name = _split_key(self, key)
        return getattr(getattr(self, sec), name)

    def with_values(self, values: dict) -> "RunConfig":
        """Copy with ``{"section.key": value}`` overrides; string values are parsed."""
        cfg = self
        for key, value in values.items():
            sec, name = _split_key(cfg, key)
            section = getattr(cfg, sec)
            kind = _field_type(section, name)
            if isinstance(value, str):
                value = _parse_value(kind, value, key)
            else:
                value = _coerce(kind, value, key)
            cfg = replace(cfg, **{sec: replace(section, **{name: value})})
        return cfg

    @property
    def phis(self) -> tuple:
        if self.pulse.phi_count > 0:
            return tuple(2.0 * math.pi * j / self.pulse.phi_count for j in range(self.pulse.phi_count))
        return self.pulse.phi

    def pulse_points(self):
        """``(F0, omega, n_c, phi)`` tuples in a fixed order.

        ``omega`` and ``n_c`` are paired element-wise when ``pulse.zip`` is set,
        otherwise crossed.
        """
        if self.pulse.zip:
            if len(self.pulse.omega) != len(self.pulse.n_c):
                raise ConfigError("pulse.zip requires pulse.omega and pulse.n_c of equal length")
            families = list(zip(self.pulse.omega, self.pulse.n_c))
        else:
            families = list(itertools.product(self.pulse.omega, self.pulse.n_c))
        return [(f0, w, n, phi) for (w, n) in families for phi in self.phis for f0 in self.pulse.F0]

    def point(self, F0: float, omega: float, n_c: int, phi: float) -> "RunConfig":
        return replace(self, pulse=replace(self.pulse, F0=(F0,), omega=(omega,), n_c=(n_c,), phi=(phi,), phi_count=0,
                                           zip=False))

    def digest(self) -> str:
        """Hash of the physical content, stable across processes and worker counts."""
        text = emit_config(self, physical_only=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _split_key(cfg: RunConfig, key: str):
    if "." not in key:
        raise ConfigError(f"key {key!r} lacks a section prefix")
    sec, name = key.split(".", 1)
    if sec not in {f.name for f in fields(cfg)}:
        raise ConfigError(f"unknown section {sec!r}")
    if name not in {f.name for f in fields(getattr(cfg, sec))}:
        raise ConfigError(f"unknown key {key!r}")
    return sec, name


def _field_type(section, name):
    default = next(f for f in fields(section) if f.name == name).default
    if isinstance(default, tuple):
        return ("tuple", type(default[0]))
    return type(default)


def _scalar(kind, text: str, key: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot read {key}={text!r} as {kind.__name__}") from None


def _parse_value(kind, text: str, key: str):
    if isinstance(kind, tuple):
        inner = kind[1]
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"{key}: range must be start:stop:step")
            start, stop, step = (_scalar(float, p, key) for p in parts)
            if not step > 0 or stop < start:
                raise ConfigError(f"{key}: empty or reversed range")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            # round to the step's decimal resolution so 0.1:0.3:0.1 gives 0.3 exactly
            digits = max(0, -int(math.floor(math.log10(step))) + 6)
            values = [round(start + i * step, digits) for i in range(count)]
            return tuple(inner(v) for v in values)
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list")
        return tuple(_scalar(inner, t, key) for t in items)
    return _scalar(kind, text, key)


def _coerce(kind, value, key):
    if isinstance(kind, tuple):
        seq = value if isinstance(value, (list, tuple, np.ndarray)) else (value,)
        return tuple(kind[1](v) for v in seq)
    if kind is float:
        return float(value)
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    if kind is bool:
        return bool(value)
    return str(value)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: RunConfig, physical_only: bool = False, prefix: str = "") -> str:
    lines = []
    for key in cfg.keys():
        if physical_only and key in _NON_PHYSICAL:
            continue
        lines.append(f"{prefix}{key} = {_format(cfg.get(key))}")
    return "\n".join(lines) + "\n"


def header_lines(cfg: RunConfig, command: str, version: str):
    """Self-describing table header: command, code version and the physical configuration."""
    out = [f"command: {command}", f"version: nsdi {version}"]
    out += [f"cfg {line}" for line in emit_config(cfg, physical_only=True).splitlines()]
    return out


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines, or only the ``# cfg`` header lines of an output table if present."""
    values = {}
    tag = HEADER_PREFIX.strip()
    header_only = any(line.strip().startswith(tag) for line in text.splitlines())
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith(tag):
            line = line[len(tag):].strip()
        elif header_only or line.startswith("#") or not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return (base or RunConfig()).with_values(values)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        cfg = parse_config(fh.read())
    return cfg.with_values(overrides or {})


def resolve_workers(cfg: RunConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    else:
        n = cfg.run.workers
    if n < 1:
        raise ConfigError("worker count must be at least 1")
    return n


def validate(cfg: RunConfig, command: str):
    """Checks that must pass before any propagation; raises :class:`ConfigError`."""
    from .pulse import quiver_radius, PulseParams

    g = cfg.grid
    if g.n_points < 8 or g.n_points % 2:
        raise ConfigError(f"grid.n_points must be an even integer >= 8, got {g.n_points}")
    for key in ("grid.dx", "run.dt", "potential.epsilon", "absorber.exponent", "momenta.sigma_p",
                "momenta.w_cut", "momenta.r_cut", "momenta.cut_time", "ground.dt_im", "ground.tol",
                "rates.ionization_energy", "rates.ion_ionization_energy", "rates.tol"):
        if not cfg.get(key) > 0:
            raise ConfigError(f"{key} must be positive, got {cfg.get(key)}")
    if not 0.6 <= cfg.absorber.x0_fraction < 1.0:
        raise ConfigError("absorber.x0_fraction must lie in [0.6, 1)")
    if not 0 < cfg.rates.eta <= 1:
        raise ConfigError("rates.eta must lie in (0, 1]")
    if cfg.rates.ratio < 0:
        raise ConfigError("rates.ratio must be non-negative")
    if cfg.rates.w02_mode not in ("ratio", "zero"):
        raise ConfigError(f"rates.w02_mode must be ratio or zero, got {cfg.rates.w02_mode!r}")
    if cfg.rates.pulse not in ("envelope", "sine", "square"):
        raise ConfigError(f"rates.pulse must be envelope, sine or square, got {cfg.rates.pulse!r}")
    if cfg.yields.gauge not in ("length", "velocity"):
        raise ConfigError(f"yields.gauge must be length or velocity, got {cfg.yields.gauge!r}")
    if cfg.yields.stencil not in ("centered", "spectral"):
        raise ConfigError(f"yields.stencil must be centered or spectral, got {cfg.yields.stencil!r}")
    if cfg.momenta.table_step < 1:
        raise ConfigError("momenta.table_step must be >= 1")
    if not 0 < cfg.partition.a < cfg.partition.b:
        raise ConfigError("partition requires 0 < a < b")
    if cfg.pulse.phi_count < 0:
        raise ConfigError("pulse.phi_count must be non-negative")
    points = cfg.pulse_points()
    for f0, w, n_c, phi in points:
        try:
            PulseParams(f0, w, phi, n_c)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if command in ("ground", "rates"):
        return
    half = 0.5 * g.n_points * g.dx
    x0 = cfg.absorber.x0_fraction * half
    xq = max(quiver_radius(PulseParams(f0, w, phi, n_c)) for f0, w, n_c, phi in points)
    need = max(1.25 * xq, 75.0)
    if half < need:
        raise ConfigError(f"grid half-width {half:.4g} a.u. below max(1.25 x_q, 75) = {need:.4g} a.u.")
    if not x0 > xq:
        raise ConfigError(f"absorber onset x0={x0:.4g} a.u. inside the quiver radius {xq:.4g} a.u.")
    if command == "yields" and not cfg.partition.b < x0:
        raise ConfigError(f"partition.b={cfg.partition.b} must lie inside x0={x0:.4g}")
    if command in ("momenta", "ionmom"):
        m = cfg.momenta
        if x0 + m.w_cut > half:
            raise ConfigError(f"cut ramp x0 + w_cut = {x0 + m.w_cut:.4g} exceeds L/2 = {half:.4g}")
        if m.r_cut + 0.5 * m.w_cut >= x0:
            raise ConfigError(f"momenta.r_cut={m.r_cut} (+ half ramp) must lie inside x0={x0:.4g}")


def as_dict(cfg: RunConfig) -> dict:
    return {key: cfg.get(key) for key in cfg.keys()} if dataclasses.is_dataclass(cfg) else {}
