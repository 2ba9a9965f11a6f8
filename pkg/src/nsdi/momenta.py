"""Two-electron momentum distributions from inner/outer wavefunction splitting.

The inner amplitude (both electrons within ``x0``) is propagated with the full
velocity-gauge Hamiltonian.  Every step, the parts beyond ``x0`` are cut out
with a smooth window and added coherently to outer sectors:

* ``out1`` - electron 1 free, stored as ``(k1, r2)``; electron 2 keeps its
  nuclear attraction and is propagated by split-operator steps in ``r2``;
* ``out2`` - the mirror sector ``(r1, k2)``;
* ``outout`` - both electrons free, stored as ``(k1, k2)`` and propagated by
  an exact diagonal phase.

Electron-electron repulsion and the escaped electron's nuclear attraction
are dropped in the outer sectors.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .grid import Grid2D, Wavefunction, to_momentum_axis
from .potentials import FIELD_FACTOR, SoftCoreParams, nuclear_attraction
from .propagator import SplitOperator, check_quiver_radius, AbsorberSpec
from .pulse import PulseParams

log = logging.getLogger(__name__)

ION_MOMENTUM_JACOBIAN = np.sqrt(3.0) / 2.0


def cut_window(r, x0: float, width: float) -> np.ndarray:
    """One inside ``|r| <= x0``, raised-cosine ramp to zero at ``x0 + width``."""
    ar = np.abs(np.asarray(r, dtype=float))
    s = np.clip((ar - x0) / width, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def keep_window(r, r_cut: float, width: float) -> np.ndarray:
    """Complement of a ramp centred at ``r_cut``: zero well inside, one beyond ``r_cut + width/2``."""
    return 1.0 - cut_window(r, r_cut - 0.5 * width, width)


@dataclass
class SectorState:
    grid: Grid2D
    inner: np.ndarray
    out1: np.ndarray
    out2: np.ndarray
    outout: np.ndarray

    @classmethod
    def from_wavefunction(cls, psi: Wavefunction) -> "SectorState":
        z = np.zeros(psi.grid.shape, dtype=np.complex128)
        return cls(psi.grid, psi.amplitudes.astype(np.complex128, copy=True), z, z.copy(), z.copy())

    def norms(self) -> dict:
        dx, dk = self.grid.dx, self.grid.dk
        sq = lambda a: float(np.vdot(a, a).real)  # noqa: E731
        return {
            "inner": sq(self.inner) * dx * dx,
            "out1": sq(self.out1) * dk * dx,
            "out2": sq(self.out2) * dx * dk,
            "outout": sq(self.outout) * dk * dk,
        }

    def total_norm(self) -> float:
        return sum(self.norms().values())

    def copy(self) -> "SectorState":
        return SectorState(self.grid, self.inner.copy(), self.out1.copy(), self.out2.copy(), self.outout.copy())


class SectorPropagator:
    """Advances a :class:`SectorState` by one time step (velocity gauge throughout)."""

    def __init__(self, grid: Grid2D, pulse: PulseParams | None, x0: float, w_cut: float = 10.0,
                 dt: float = 0.05, params: SoftCoreParams = SoftCoreParams(), cut_time: float | None = 1.0):
        if not w_cut > 0:
            raise ValueError("cut width must be positive")
        if x0 + w_cut > grid.half_width:
            raise ValueError(f"cut ramp x0 + w_cut = {x0 + w_cut} exceeds L/2 = {grid.half_width}")
        self.grid = grid
        self.pulse = pulse
        self.x0 = x0
        self.w_cut = w_cut
        self.dt = dt
        self.inner_stepper = SplitOperator(grid, pulse, "velocity", dt, params)
        self.full_t = self.inner_stepper.full_t
        self.half_ion = np.exp(-0.5j * dt * nuclear_attraction(grid.r, params))
        # the per-step window m**(dt/cut_time) removes amplitude at a fixed rate, so the
        # effective edge seen by a moving packet does not sharpen as dt shrinks;
        # cut_time=None applies the bare window every step
        m = cut_window(grid.r, x0, w_cut)
        if cut_time is not None:
            if not cut_time > 0:
                raise ValueError("cut_time must be positive")
            m = m ** (dt / cut_time)
        self.cut_time = cut_time
        self.m = m
        ramp = np.flatnonzero(self.m < 1.0)
        core = np.flatnonzero(self.m >= 1.0)
        self._lo, self._hi = core[0], core[-1] + 1
        self._edge = (slice(0, self._lo), slice(self._hi, grid.n_points))
        self._ramp = ramp
        # fft of the centred array times (-1)^j equals fft of its ifftshift
        n = grid.n_points
        self._scale = grid.dx / np.sqrt(2.0 * np.pi) * (1.0 - 2.0 * (np.arange(n) % 2))
        self._buf_a = np.zeros(grid.shape, dtype=np.complex128)
        self._buf_b = np.zeros(grid.shape, dtype=np.complex128)

    def gauge_phase(self, t_mid: float) -> np.ndarray | None:
        if self.pulse is None:
            return None
        a = self.pulse.vector_potential(t_mid)
        if a == 0.0:
            return None
        return np.exp(-1j * self.dt * FIELD_FACTOR * a * self.grid.k)

    def step_outer(self, state: SectorState, t: float):
        """Free phases for the escaped coordinates, split-operator step for bound ones."""
        h = self.gauge_phase(t + 0.5 * self.dt)
        oo = state.outout
        oo *= self.full_t
        if h is not None:
            oo *= h[:, None]
            oo *= h[None, :]
        for axis, name in ((1, "out1"), (0, "out2")):
            a = getattr(state, name)
            hv = self.half_ion[None, :] if axis == 1 else self.half_ion[:, None]
            a *= hv
            a = sfft.fft(a, axis=axis, overwrite_x=True)
            a *= self.full_t
            if h is not None:
                a *= h[:, None]
                a *= h[None, :]
            a = sfft.ifft(a, axis=axis, overwrite_x=True)
            a *= hv
            setattr(state, name, a)

    def _forward(self, a: np.ndarray, axis: int) -> np.ndarray:
        """Centred-grid transform along one axis (same convention as ``to_momentum_axis``)."""
        f = sfft.fft(a, axis=axis)
        f *= self._scale[:, None] if axis == 0 else self._scale[None, :]
        return f

    def transfer_split(self, state: SectorState):
        """Cut the amplitude beyond ``x0`` out of each sector and add it coherently downstream.

        Mixed sectors are cut before they receive new inner amplitude, so a
        piece moves at most one sector per step.  The corner piece (both
        electrons beyond ``x0``) goes straight to ``outout``.
        """
        m, one_m = self.m, 1.0 - self.m
        lo, hi = self._lo, self._hi
        edge = self._edge
        inner, out1, out2 = state.inner, state.out1, state.out2
        a, b = self._buf_a, self._buf_b

        # bound electron of out2 escaping; transformed together with the corner piece below
        a.fill(0.0)
        for rs in edge:
            a[rs, :] = out2[rs, :] * one_m[rs][:, None]
            out2[rs, :] *= m[rs][:, None]
        b.fill(0.0)
        for cs in edge:
            b[:, cs] = out1[:, cs] * one_m[cs][None, :]
            out1[:, cs] *= m[cs][None, :]
        state.outout += self._forward(b, 1)
        for rs in edge:
            corner = inner[rs, :] * (one_m[rs][:, None] * one_m[None, :])
            a[rs, :] += self._forward(corner, 1)
        state.outout += self._forward(a, 0)

        # electron 1 beyond x0 (electron 2 inside its window)
        b.fill(0.0)
        for rs in edge:
            b[rs, :] = inner[rs, :] * (one_m[rs][:, None] * m[None, :])
        out1 += self._forward(b, 0)
        # electron 2 beyond x0 (electron 1 inside its window)
        b.fill(0.0)
        for cs in edge:
            b[:, cs] = inner[:, cs] * (m[:, None] * one_m[cs][None, :])
        out2 += self._forward(b, 1)

        for rs in edge:
            inner[rs, :] *= m[rs][:, None] * m[None, :]
            inner[lo:hi, rs] *= m[rs][None, :]

    def step(self, state: SectorState, t: float):
        state.inner = self.inner_stepper.advance(state.inner, t)
        self.step_outer(state, t)
        self.transfer_split(state)


@dataclass
class MomentumDistribution2D:
    """Probability density on the sorted ``(p1, p2)`` lattice; ``mass()`` integrates with ``dk^2``."""

    density: np.ndarray
    p: np.ndarray
    dk: float
    smoothed: bool = False
    meta: dict = field(default_factory=dict)

    def mass(self) -> float:
        return float(self.density.sum() * self.dk**2)

    def mean_parallel_ion_momentum(self) -> float:
        p1, p2 = self.p[:, None], self.p[None, :]
        ppar = -np.sqrt(3.0) * (p1 + p2) / 2.0
        return float(np.sum(ppar * self.density) / np.sum(self.density))

    def quadrant_masses(self) -> np.ndarray:
        """Masses of quadrants I (p1>0, p2>0), II, III, IV; the axes are split evenly."""
        w = np.where(self.p > 0, 1.0, np.where(self.p < 0, 0.0, 0.5))
        pos, neg = w, 1.0 - w
        d = self.density * self.dk**2
        return np.array([
            pos @ d @ pos,
            neg @ d @ pos,
            neg @ d @ neg,
            pos @ d @ neg,
        ])

    def mass_within(self, radius: float) -> float:
        p1, p2 = self.p[:, None], self.p[None, :]
        inside = p1**2 + p2**2 <= radius**2
        return float(self.density[inside].sum() * self.dk**2)


def assemble_di_distribution(state: SectorState, x0: float, r_cut: float = 50.0, w_cut: float = 10.0,
                             cut_mixed: bool = True, meta=None) -> MomentumDistribution2D:
    """Momentum distribution of the doubly ionized part of a finished run.

    Inner amplitude is kept only where both electrons are beyond ``r_cut``
    (smooth ramp of width ``w_cut``), the mixed sectors only where their bound
    coordinate is beyond ``r_cut``; both are transformed and added coherently
    to ``outout``.
    """
    if r_cut >= x0:
        raise ValueError(f"final cut r_cut={r_cut} must lie inside the absorber onset x0={x0}")
    grid = state.grid
    dx = grid.dx
    keep = keep_window(grid.r, r_cut, w_cut)
    amp = state.outout.copy()
    inner = state.inner * keep[:, None] * keep[None, :]
    amp += to_momentum_axis(to_momentum_axis(inner, 0, dx), 1, dx)
    if cut_mixed:
        amp += to_momentum_axis(state.out1 * keep[None, :], 1, dx)
        amp += to_momentum_axis(state.out2 * keep[:, None], 0, dx)
    else:
        amp += to_momentum_axis(state.out1.copy(), 1, dx)
        amp += to_momentum_axis(state.out2.copy(), 0, dx)
    density = sfft.fftshift(np.abs(amp) ** 2)
    return MomentumDistribution2D(density, grid.k_sorted(), grid.dk, False, dict(meta or {}))


@dataclass
class MomentumRun:
    state: SectorState
    distribution: MomentumDistribution2D
    times: np.ndarray
    sector_norms: np.ndarray  # columns inner, out1, out2, outout


def run_momenta(psi0: Wavefunction, pulse: PulseParams, x0: float | None = None, w_cut: float = 10.0,
                r_cut: float = 50.0, dt: float = 0.05, params: SoftCoreParams = SoftCoreParams(),
                cut_mixed: bool = True, record_every: int | None = None,
                cut_time: float | None = 1.0) -> MomentumRun:
    """Full inner/outer propagation over ``n_c + 1`` cycles and DI distribution assembly."""
    grid = psi0.grid
    if x0 is None:
        x0 = AbsorberSpec.for_grid(grid).x0
    if r_cut + 0.5 * w_cut >= x0:
        raise ValueError(f"final cut r_cut={r_cut} (+ half ramp) must lie inside x0={x0}")
    if pulse.F0 > 0:
        check_quiver_radius(grid, pulse, AbsorberSpec(x0, grid.half_width))
    prop = SectorPropagator(grid, pulse, x0, w_cut, dt, params, cut_time)
    state = SectorState.from_wavefunction(psi0)
    n_steps = int(round(pulse.simulation_time / dt))
    every = record_every or max(1, int(round(1.0 / dt)))
    times, norms = [0.0], [list(state.norms().values())]
    for n in range(n_steps):
        prop.step(state, n * dt)
        if (n + 1) % every == 0 or n + 1 == n_steps:
            times.append((n + 1) * dt)
            norms.append(list(state.norms().values()))
    meta = {"F0": pulse.F0, "omega": pulse.omega, "phi": pulse.phi, "n_c": pulse.n_c,
            "n_points": grid.n_points, "dx": grid.dx, "dt": dt, "x0": x0, "r_cut": r_cut, "w_cut": w_cut,
            "cut_time": cut_time}
    dist = assemble_di_distribution(state, x0, r_cut, w_cut, cut_mixed, meta)
    return MomentumRun(state, dist, np.array(times), np.array(norms))


def gaussian_smooth(dist: MomentumDistribution2D, sigma_p: float = 0.07) -> MomentumDistribution2D:
    """Isotropic convolution with a normalised Gaussian of width ``sigma_p`` (periodic lattice)."""
    if sigma_p < dist.dk / 2:
        warnings.warn(f"sigma_p={sigma_p} is below half a lattice step; smoothing is ineffective",
                      RuntimeWarning, stacklevel=2)
    out = ndimage.gaussian_filter(dist.density, sigma_p / dist.dk, mode="wrap", truncate=6.0)
    meta = dict(dist.meta, sigma_p=sigma_p)
    return MomentumDistribution2D(out, dist.p, dist.dk, True, meta)


def ion_momentum_projection(dist: MomentumDistribution2D, spacing: float | None = None):
    """Longitudinal ion-momentum spectrum ``p_par = -sqrt(3)(p1 + p2)/2``.

    The density is resampled bilinearly on a ``(p_par, p_perp)`` lattice with
    ``p_perp = -(p1 - p2)/2``, integrated over ``p_perp`` and divided by the
    Jacobian ``sqrt(3)/2``.  Returns ``(p_par, rho)`` with ``sum(rho) * d p_par``
    equal to the 2D mass.
    """
    h = spacing or dist.dk
    pmax = np.abs(dist.p).max()
    n_par = int(np.ceil(np.sqrt(3.0) * pmax / h))
    n_perp = int(np.ceil(pmax / h))
    p_par = np.arange(-n_par, n_par + 1) * h
    p_perp = np.arange(-n_perp, n_perp + 1) * h
    ppar, pperp = np.meshgrid(p_par, p_perp, indexing="ij")
    p1 = -ppar / np.sqrt(3.0) - pperp
    p2 = -ppar / np.sqrt(3.0) + pperp
    # fractional lattice indices
    i1 = (p1 - dist.p[0]) / dist.dk
    i2 = (p2 - dist.p[0]) / dist.dk
    vals = ndimage.map_coordinates(dist.density, [i1, i2], order=1, mode="constant", cval=0.0)
    rho = vals.sum(axis=1) * h / ION_MOMENTUM_JACOBIAN
    return p_par, rho


def cep_average(distributions, normalize_max: bool = False):
    """Incoherent mean over carrier-envelope phases.

    Accepts :class:`MomentumDistribution2D` objects or plain arrays (e.g. 1D
    ion spectra); all inputs must share one lattice.
    """
    items = list(distributions)
    if not items:
        raise ValueError("nothing to average")
    if isinstance(items[0], MomentumDistribution2D):
        ref = items[0]
        for d in items[1:]:
            if d.density.shape != ref.density.shape or not np.isclose(d.dk, ref.dk):
                raise ValueError("distributions live on different lattices")
        mean = np.mean([d.density for d in items], axis=0)
        if normalize_max:
            mean = mean / mean.max()
        return MomentumDistribution2D(mean, ref.p, ref.dk, ref.smoothed,
                                      dict(ref.meta, cep_samples=len(items)))
    arrays = [np.asarray(a, dtype=float) for a in items]
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ValueError("spectra live on different lattices")
    mean = np.mean(arrays, axis=0)
    if normalize_max:
        mean = mean / mean.max()
    return mean


def cep_phases(count: int = 20) -> np.ndarray:
    return 2.0 * np.pi * np.arange(count) / count


def write_distribution(path, dist: MomentumDistribution2D, dx: float):
    """Grid dump in momentum representation (wraparound ``k`` order, real density as amplitude)."""
    from .grid import write_dump

    n = dist.density.shape[0]
    if not np.isclose(2.0 * np.pi / (n * dx), dist.dk):
        raise ValueError("dx does not match the distribution lattice")
    write_dump(path, sfft.ifftshift(dist.density).astype(np.complex128), dx, "velocity", "momentum")


def read_distribution(path, meta=None) -> MomentumDistribution2D:
    from .grid import read_dump

    amps, dx, _, rep = read_dump(path)
    if rep != ("k", "k"):
        raise ValueError(f"{path}: not a momentum-space dump")
    grid = Grid2D(amps.shape[0], dx)
    return MomentumDistribution2D(sfft.fftshift(amps.real), grid.k_sorted(), grid.dk, False, dict(meta or {}))


def write_distribution_text(path, dist: MomentumDistribution2D, step: int = 4, header_lines=()):
    """Down-sampled ``p1 p2 density`` rows for plotting."""
    idx = np.arange(0, dist.p.size, step)
    p1, p2 = np.meshgrid(dist.p[idx], dist.p[idx], indexing="ij")
    rows = np.column_stack([p1.ravel(), p2.ravel(), dist.density[np.ix_(idx, idx)].ravel()])
    head = "\n".join(list(header_lines) + ["p1 p2 density"])
    np.savetxt(path, rows, fmt="%.17g", header=head, comments="# ")


def write_spectrum_text(path, p_par, rho, header_lines=()):
    head = "\n".join(list(header_lines) + ["p_par density"])
    np.savetxt(path, np.column_stack([p_par, rho]), fmt="%.17g", header=head, comments="# ")
