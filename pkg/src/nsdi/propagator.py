"""Real-time split-operator propagation of the two-electron model in either gauge."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .grid import Grid2D, Wavefunction
from .groundstate import energy_expectation, kinetic_symbol
from .potentials import FIELD_FACTOR, SoftCoreParams, static_potential_field
from .pulse import PulseParams, quiver_radius

log = logging.getLogger(__name__)


class GridTooSmallError(ValueError):
    """The grid or absorber cannot contain the classical quiver motion."""

    def __init__(self, message, min_length=None):
        super().__init__(message)
        self.min_length = min_length


@dataclass(frozen=True)
class AbsorberSpec:
    """Per-axis mask ``cos^q(pi (|r| - x0) / (2 w))`` beyond ``x0``, ``w = L/2 - x0``."""

    x0: float
    half_width: float
    exponent: float = 0.125

    def __post_init__(self):
        if not self.x0 < self.half_width:
            raise ValueError(f"absorber onset x0={self.x0} must lie inside L/2={self.half_width}")
        if self.x0 < 0.6 * self.half_width:
            raise ValueError(f"absorber onset x0={self.x0} too close to the nucleus (< 0.6 L/2)")
        if not self.exponent > 0:
            raise ValueError("mask exponent must be positive")

    @classmethod
    def for_grid(cls, grid: Grid2D, fraction: float = 0.8, exponent: float = 0.125):
        return cls(fraction * grid.half_width, grid.half_width, exponent)

    @property
    def ramp_width(self) -> float:
        return self.half_width - self.x0

    def mask(self, r) -> np.ndarray:
        ar = np.abs(np.asarray(r, dtype=float))
        arg = np.clip((ar - self.x0) / self.ramp_width, 0.0, 1.0)
        return np.cos(0.5 * np.pi * arg) ** self.exponent


class Absorber:
    """Applies an :class:`AbsorberSpec` to grid arrays and reports the removed norm.

    Only the edge strips where the mask is below one are touched.  When a label
    array is supplied, the removed norm is returned per label.
    """

    def __init__(self, grid: Grid2D, spec: AbsorberSpec, labels: np.ndarray | None = None, n_labels: int = 0):
        self.grid = grid
        self.spec = spec
        m = spec.mask(grid.r)
        self.m = m
        core = np.flatnonzero(m >= 1.0)
        lo, hi = core[0], core[-1] + 1
        n = grid.n_points
        # disjoint blocks covering every point with mask < 1
        self._blocks = []
        for rs, cs in (
            (slice(0, lo), slice(0, n)),
            (slice(hi, n), slice(0, n)),
            (slice(lo, hi), slice(0, lo)),
            (slice(lo, hi), slice(hi, n)),
        ):
            mask = m[rs][:, None] * m[cs][None, :]
            lab = labels[rs, cs].ravel() if labels is not None else None
            self._blocks.append((rs, cs, mask, 1.0 - mask**2, lab))
        self.n_labels = n_labels
        self._labelled = labels is not None

    def apply(self, psi: np.ndarray):
        w = self.grid.dx**2
        out = np.zeros(self.n_labels) if self._labelled else 0.0
        for rs, cs, mask, loss, lab in self._blocks:
            block = psi[rs, cs]
            dens = (block.real**2 + block.imag**2) * loss
            block *= mask
            if lab is None:
                out += dens.sum()
            else:
                out += np.bincount(lab, weights=dens.ravel(), minlength=self.n_labels)
        return w * out


def kinetic_time_step_ratio(grid: Grid2D, dt: float) -> float:
    """``dt * max kinetic eigenvalue / pi``; values above one exceed the anti-aliasing bound."""
    return dt * grid.k_max**2 / np.pi


class SplitOperator:
    """Strang split stepper ``exp(-i P dt/2) exp(-i M dt) exp(-i P dt/2)``.

    ``P`` is the position-diagonal and ``M`` the momentum-diagonal part.  In the
    length gauge ``P = V + c F(t)(r1 + r2)`` and ``M = (k1^2 + k2^2)/2``; in the
    velocity gauge ``P = V`` and ``M = (k1^2 + k2^2)/2 + c A(t)(k1 + k2)``, with
    ``c = sqrt(3)/2``.  Time-dependent terms are taken at the step midpoint.
    """

    def __init__(
        self,
        grid: Grid2D,
        pulse: PulseParams | None,
        gauge: str = "length",
        dt: float = 0.05,
        params: SoftCoreParams = SoftCoreParams(),
        potential: np.ndarray | None = None,
    ):
        if gauge not in ("length", "velocity"):
            raise ValueError(f"unknown gauge {gauge!r}")
        self.grid = grid
        self.pulse = pulse
        self.gauge = gauge
        self.dt = dt
        self.params = params
        self.potential = static_potential_field(grid, params) if potential is None else potential
        self.kinetic = kinetic_symbol(grid)
        self.set_dt(dt)

    def set_dt(self, dt: float):
        self.dt = dt
        self.half_v = np.exp(-0.5j * dt * self.potential)
        self.full_t = np.exp(-1j * dt * self.kinetic)
        ratio = kinetic_time_step_ratio(self.grid, abs(dt))
        if ratio >= 1.0:
            warnings.warn(
                f"dt={dt} exceeds the anti-aliasing bound dt*max(k^2)/pi < 1 (ratio {ratio:.2f})",
                RuntimeWarning,
                stacklevel=3,
            )

    def coupling(self, t_mid: float) -> float:
        """Field (length gauge) or vector potential (velocity gauge) at ``t_mid``."""
        if self.pulse is None:
            return 0.0
        if self.gauge == "length":
            return self.pulse.field(t_mid)
        return self.pulse.vector_potential(t_mid)

    def advance(self, psi: np.ndarray, t: float) -> np.ndarray:
        """One step from ``t`` to ``t + dt``; ``psi`` (position space) may be overwritten."""
        dt = self.dt
        c = FIELD_FACTOR * self.coupling(t + 0.5 * dt)
        if self.gauge == "length" and c != 0.0:
            g = np.exp(-0.5j * dt * c * self.grid.r)
            half = self.half_v * (g[:, None] * g[None, :])
        else:
            half = self.half_v
        psi *= half
        phi = sfft.fft2(psi, overwrite_x=True)
        phi *= self.full_t
        if self.gauge == "velocity" and c != 0.0:
            h = np.exp(-1j * dt * c * self.grid.k)
            phi *= h[:, None]
            phi *= h[None, :]
        psi = sfft.ifft2(phi, overwrite_x=True)
        psi *= half
        return psi

    def energy(self, psi: np.ndarray) -> float:
        """Field-free energy expectation."""
        return energy_expectation(psi, self.potential, self.kinetic, self.grid.dx)


def step(psi: Wavefunction, t: float, dt: float, gauge: str, pulse, params=SoftCoreParams(), absorber=None):
    """Single functional step; returns ``(Wavefunction, removed_norm)``."""
    if psi.representation != ("r", "r"):
        raise ValueError("step requires a position-space wavefunction")
    if psi.gauge != gauge:
        raise ValueError(f"wavefunction is in {psi.gauge} gauge, step requested in {gauge}")
    stepper = SplitOperator(psi.grid, pulse, gauge, dt, params)
    a = stepper.advance(psi.amplitudes.copy(), t)
    removed = 0.0
    if absorber is not None:
        removed = Absorber(psi.grid, absorber).apply(a)
    return Wavefunction(a, psi.grid, gauge, psi.representation, psi.symmetric), removed


def check_quiver_radius(grid: Grid2D, pulse: PulseParams, absorber: AbsorberSpec | None):
    """Reject setups where the absorber onset lies inside the quiver radius."""
    xq = quiver_radius(pulse)
    x0 = absorber.x0 if absorber is not None else grid.half_width
    if not x0 > xq:
        frac = x0 / grid.half_width
        min_length = 2.0 * xq / frac
        raise GridTooSmallError(
            f"absorber onset x0={x0:.4g} a.u. must exceed the quiver radius x_q={xq:.4g} a.u.; "
            f"need L > {min_length:.4g} a.u.",
            min_length,
        )


@dataclass
class PropagationResult:
    final: Wavefunction
    times: np.ndarray
    norms: np.ndarray
    absorbed: np.ndarray
    observers: list = field(default_factory=list)

    @property
    def total_absorbed(self) -> float:
        return float(self.absorbed[-1]) if self.absorbed.size else 0.0


def propagate(
    psi0: Wavefunction,
    pulse: PulseParams,
    gauge: str = "length",
    absorber: AbsorberSpec | None = None,
    observers=(),
    dt: float = 0.05,
    params: SoftCoreParams = SoftCoreParams(),
    t_final: float | None = None,
    labels: np.ndarray | None = None,
    n_labels: int = 0,
    record_every: int = 1,
):
    """Propagate ``psi0`` over ``(n_c + 1)`` field cycles (or up to ``t_final``).

    Each observer is called as ``obs(n, t, psi, removed)`` after every step,
    where ``removed`` is the norm taken out by the absorber in that step (an
    array per label if ``labels`` is given).
    """
    grid = psi0.grid
    if psi0.representation != ("r", "r"):
        raise ValueError("propagation starts from a position-space state")
    if pulse.F0 > 0:
        check_quiver_radius(grid, pulse, absorber)
    t_end = pulse.simulation_time if t_final is None else t_final
    n_steps = int(round(t_end / dt))
    stepper = SplitOperator(grid, pulse, gauge, dt, params)
    absorb = Absorber(grid, absorber, labels, n_labels) if absorber is not None else None

    psi = psi0.amplitudes.astype(np.complex128, copy=True)
    w = grid.dx**2
    times, norms, absorbed = [0.0], [np.vdot(psi, psi).real * w], [0.0]
    total_removed = 0.0
    for obs in observers:
        start = getattr(obs, "start", None)
        if start is not None:
            start(0.0, psi)
    for n in range(n_steps):
        t = n * dt
        psi = stepper.advance(psi, t)
        removed = 0.0
        if absorb is not None:
            removed = absorb.apply(psi)
            total_removed += float(np.sum(removed))
        t_new = (n + 1) * dt
        for obs in observers:
            obs(n + 1, t_new, psi, removed)
        if (n + 1) % record_every == 0 or n + 1 == n_steps:
            times.append(t_new)
            norms.append(np.vdot(psi, psi).real * w)
            absorbed.append(total_removed)
    final = Wavefunction(psi, grid, gauge, ("r", "r"), psi0.symmetric)
    return PropagationResult(final, np.array(times), np.array(norms), np.array(absorbed), list(observers))


def write_observer_text(path, result: PropagationResult, extra_columns=None, header=""):
    """Stream ``t, norm, absorbed`` (plus optional columns) as delimited text."""
    cols = [result.times, result.norms, result.absorbed]
    names = ["t", "norm", "absorbed"]
    for name, values in (extra_columns or {}).items():
        names.append(name)
        cols.append(np.asarray(values))
    head = (header + "\n" if header else "") + " ".join(names)
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", header=head, comments="# ")
