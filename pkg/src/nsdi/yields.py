"""Ionization yields from region populations and time-integrated boundary fluxes.

Configuration space is split into a cruciform NEUTRAL region, two SINGLE
regions (one electron far out along its axis, the other bound) and the DOUBLE
remainder.  Net probability currents through the faces separating these
regions are integrated in time; the NEUTRAL->DOUBLE transfer is the
simultaneous-escape (SE) channel and SINGLE->DOUBLE the consecutive (CE) one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from .grid import Grid2D, Wavefunction
from .potentials import FIELD_FACTOR, SoftCoreParams
from .propagator import AbsorberSpec, propagate
from .pulse import PulseParams

log = logging.getLogger(__name__)

NEUTRAL, SINGLE1, SINGLE2, DOUBLE = range(4)
REGION_NAMES = ("neutral", "single1", "single2", "double")
SATURATION_LEVEL = 1.0 - np.exp(-1.0)
SWEEP_COLUMNS = ("F0", "SI", "DI", "DI_SE", "DI_CE", "P_ion")


@dataclass(frozen=True)
class RegionPartition:
    """Cruciform partition with bound half-width ``a`` and arm length ``b``."""

    a: float = 6.0
    b: float = 12.0

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError(f"need 0 < a < b, got a={self.a}, b={self.b}")

    def labels(self, grid: Grid2D) -> np.ndarray:
        tol = 1e-9 * grid.dx
        ar = np.abs(grid.r)
        in_a = ar <= self.a + tol
        in_b = ar <= self.b + tol
        lab = np.full(grid.shape, DOUBLE, dtype=np.intp)
        lab[~in_b[:, None] & in_a[None, :]] = SINGLE1
        lab[in_a[:, None] & ~in_b[None, :]] = SINGLE2
        neutral = (in_a[:, None] & in_b[None, :]) | (in_b[:, None] & in_a[None, :])
        lab[neutral] = NEUTRAL
        return lab


@dataclass(frozen=True)
class Segment:
    """Straight border piece normal to ``axis`` at coordinate ``position``.

    The segment spans ``[lo, hi]`` along the other axis.  ``orientation=+1``
    counts flux towards increasing coordinate along ``axis``.
    """

    axis: int
    position: float
    lo: float
    hi: float
    orientation: int = 1


def _spectral_derivative_rows(grid: Grid2D, rows: np.ndarray) -> np.ndarray:
    """Rows of the real spectral differentiation matrix (Nyquist mode dropped)."""
    n = grid.n_points
    k = grid.k.copy()
    k[n // 2] = 0.0
    eye = np.zeros((n, rows.size))
    eye[rows, np.arange(rows.size)] = 1.0
    # D^T e_row = row of D, and D^T = -D for a real antisymmetric spectral matrix
    cols = sfft.ifft(1j * k[:, None] * sfft.fft(eye, axis=0), axis=0).real
    return -cols.T


def boundary_flux(psi: Wavefunction, segment: Segment, stencil: str = "spectral", vector_potential: float = 0.0):
    """Probability per unit time crossing ``segment``.

    The normal current ``Im(psi* d psi)`` (plus ``c A |psi|^2`` in the velocity
    gauge) is evaluated on the face between the two grid lines straddling the
    segment and integrated along it with weight ``dx``.
    """
    if psi.representation != ("r", "r"):
        raise ValueError("boundary flux needs a position-space wavefunction")
    grid = psi.grid
    a = psi.amplitudes if segment.axis == 0 else psi.amplitudes.T
    i = int(np.floor(segment.position / grid.dx + 1e-9)) + grid.n_points // 2
    if not (0 <= i and i + 1 < grid.n_points):
        raise ValueError(f"segment at {segment.position} lies off the grid")
    j_lo, j_hi = grid.index_of(segment.lo), grid.index_of(segment.hi)
    left, right = a[i, j_lo : j_hi + 1], a[i + 1, j_lo : j_hi + 1]
    if stencil == "centered":
        cur = np.imag(np.conj(left) * right) / grid.dx
    elif stencil == "spectral":
        d = _spectral_derivative_rows(grid, np.array([i, i + 1])) @ a[:, j_lo : j_hi + 1]
        cur = 0.5 * (np.imag(np.conj(left) * d[0]) + np.imag(np.conj(right) * d[1]))
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    if vector_potential:
        cur = cur + FIELD_FACTOR * vector_potential * 0.5 * (np.abs(left) ** 2 + np.abs(right) ** 2)
    return segment.orientation * float(np.sum(cur) * grid.dx)


class _FaceSet:
    """All grid faces between differently labelled neighbours, grouped by label pair."""

    def __init__(self, labels: np.ndarray, n_labels: int):
        self.groups = []  # (axis, lo_label, hi_label, i_idx, j_idx)
        for axis in (0, 1):
            lab = labels if axis == 0 else labels.T
            lo, hi = lab[:-1, :], lab[1:, :]
            diff = lo != hi
            for la in range(n_labels):
                for lb in range(n_labels):
                    if la == lb:
                        continue
                    ii, jj = np.nonzero(diff & (lo == la) & (hi == lb))
                    if ii.size:
                        self.groups.append((axis, la, lb, ii, jj))
        rows = set()
        for axis, _, _, ii, _ in self.groups:
            rows.update(ii.tolist())
            rows.update((ii + 1).tolist())
        self.rows = np.array(sorted(rows), dtype=np.intp)


class FluxLedger:
    """Observer accumulating region populations, absorbed norm and net inter-region transfers.

    ``transfers[A, B]`` is the time-integrated net probability moved from
    region ``A`` into region ``B`` (antisymmetric).
    """

    def __init__(self, grid: Grid2D, partition: RegionPartition, dt: float, stencil: str = "spectral",
                 pulse: PulseParams | None = None, gauge: str = "length"):
        self.grid = grid
        self.partition = partition
        self.dt = dt
        self.stencil = stencil
        self.gauge = gauge
        self.pulse = pulse
        self.labels = partition.labels(grid)
        self.n_labels = 4
        self.faces = _FaceSet(self.labels, self.n_labels)
        ar = np.abs(grid.r)
        tol = 1e-9 * grid.dx
        in_a = np.flatnonzero(ar <= partition.a + tol)
        in_b = np.flatnonzero(ar <= partition.b + tol)
        self._ia = slice(in_a[0], in_a[-1] + 1)
        self._ib = slice(in_b[0], in_b[-1] + 1)
        self._arm_a = slice(in_a[0] - in_b[0], in_a[-1] + 1 - in_b[0])
        self._outer = (slice(0, in_b[0]), slice(in_b[-1] + 1, grid.n_points))
        if stencil == "spectral":
            self._drows = _spectral_derivative_rows(grid, self.faces.rows)
        elif stencil != "centered":
            raise ValueError(f"unknown stencil {stencil!r}")
        self.times: list[float] = []
        self.populations: list[np.ndarray] = []
        self.absorbed_series: list[np.ndarray] = []
        self.absorbed = np.zeros(self.n_labels)
        self.transfers = np.zeros((self.n_labels, self.n_labels))
        self._last_rates = None

    # populations -----------------------------------------------------
    def region_populations(self, psi: np.ndarray) -> np.ndarray:
        # the regions are unions of rectangles: sum the small ones, DOUBLE is the rest
        ia, ib = self._ia, self._ib
        total = np.vdot(psi, psi).real
        box = psi[ib, ib]
        dbox = box.real**2 + box.imag**2
        n_pop = dbox[self._arm_a, :].sum() + dbox[:, self._arm_a].sum() - dbox[self._arm_a, self._arm_a].sum()
        s1 = 0.0
        s2 = 0.0
        for rs in self._outer:
            strip = psi[rs, ia]
            s1 += np.vdot(strip, strip).real
            strip = psi[ia, rs]
            s2 += np.vdot(strip, strip).real
        pops = np.array([n_pop, s1, s2, total - n_pop - s1 - s2])
        return pops * self.grid.dx**2

    # currents ----------------------------------------------------------
    def transfer_rates(self, psi: np.ndarray, t: float) -> np.ndarray:
        """Instantaneous net rate matrix ``R[A, B]`` (probability per time from A to B)."""
        rates = np.zeros((self.n_labels, self.n_labels))
        dx = self.grid.dx
        a_vec = 0.0
        if self.gauge == "velocity" and self.pulse is not None:
            a_vec = FIELD_FACTOR * self.pulse.vector_potential(t)
        deriv = None
        if self.stencil == "spectral":
            deriv = (self._drows @ psi, psi @ self._drows.T)
        for axis, la, lb, ii, jj in self.faces.groups:
            if axis == 0:
                left, right = psi[ii, jj], psi[ii + 1, jj]
            else:
                left, right = psi[jj, ii], psi[jj, ii + 1]
            if deriv is None:
                cur = np.imag(np.conj(left) * right) / dx
            else:
                pos_l, pos_r = self._positions(ii), self._positions(ii + 1)
                if axis == 0:
                    dl, dr = deriv[0][pos_l, jj], deriv[0][pos_r, jj]
                else:
                    dl, dr = deriv[1][jj, pos_l], deriv[1][jj, pos_r]
                cur = 0.5 * (np.imag(np.conj(left) * dl) + np.imag(np.conj(right) * dr))
            if a_vec:
                cur = cur + a_vec * 0.5 * (np.abs(left) ** 2 + np.abs(right) ** 2)
            flow = float(np.sum(cur)) * dx
            rates[la, lb] += flow
            rates[lb, la] -= flow
        return rates

    def _positions(self, rows):
        return np.searchsorted(self.faces.rows, rows)

    # observer protocol --------------------------------------------------
    def start(self, t: float, psi: np.ndarray):
        self.times.append(t)
        self.populations.append(self.region_populations(psi))
        self.absorbed_series.append(self.absorbed.copy())
        self._last_rates = self.transfer_rates(psi, t)

    def __call__(self, n: int, t: float, psi: np.ndarray, removed):
        if np.ndim(removed):
            self.absorbed += removed
        rates = self.transfer_rates(psi, t)
        self.transfers += 0.5 * self.dt * (self._last_rates + rates)
        self._last_rates = rates
        self.times.append(t)
        self.populations.append(self.region_populations(psi))
        self.absorbed_series.append(self.absorbed.copy())

    # summaries ----------------------------------------------------------
    def closure(self) -> np.ndarray:
        """``sum(populations) + sum(absorbed) - 1`` at every recorded time."""
        pops = np.array(self.populations)
        absd = np.array(self.absorbed_series)
        return pops.sum(axis=1) + absd.sum(axis=1) - 1.0

    def write_text(self, path, header: str = ""):
        pops = np.array(self.populations)
        absd = np.array(self.absorbed_series)
        cols = [np.array(self.times), pops.sum(axis=1) + absd.sum(axis=1), absd.sum(axis=1)]
        cols += [pops[:, i] for i in range(4)] + [absd[:, i] for i in range(4)]
        names = ["t", "norm_total", "absorbed"] + [f"pop_{n}" for n in REGION_NAMES] + [
            f"abs_{n}" for n in REGION_NAMES
        ]
        head = (header + "\n" if header else "") + " ".join(names)
        np.savetxt(path, np.column_stack(cols), fmt="%.17g", header=head, comments="# ")


@dataclass
class YieldRecord:
    F0: float
    SI: float
    DI: float
    DI_SE: float
    DI_CE: float
    P_ion: float
    ledger: FluxLedger = field(repr=False)
    final: Wavefunction | None = field(default=None, repr=False)

    def row(self):
        return [self.F0, self.SI, self.DI, self.DI_SE, self.DI_CE, self.P_ion]


def run_yields(
    psi0: Wavefunction,
    pulse: PulseParams,
    partition: RegionPartition = RegionPartition(),
    absorber: AbsorberSpec | None = None,
    dt: float = 0.05,
    params: SoftCoreParams = SoftCoreParams(),
    gauge: str = "length",
    stencil: str = "spectral",
    keep_final: bool = False,
) -> YieldRecord:
    """Propagate over ``n_c + 1`` cycles and return SI/DI yields with the SE/CE split."""
    grid = psi0.grid
    if absorber is None:
        absorber = AbsorberSpec.for_grid(grid)
    if not partition.b < absorber.x0:
        raise ValueError(f"partition arm b={partition.b} overlaps the absorber onset x0={absorber.x0}")
    ledger = FluxLedger(grid, partition, dt, stencil=stencil, pulse=pulse, gauge=gauge)
    psi_start = psi0 if psi0.gauge == gauge else Wavefunction(psi0.amplitudes, grid, gauge, psi0.representation, psi0.symmetric)
    result = propagate(
        psi_start, pulse, gauge, absorber, observers=[ledger], dt=dt, params=params,
        labels=ledger.labels, n_labels=4, record_every=max(1, int(round(1.0 / dt))),
    )
    pops = ledger.populations[-1]
    absd = ledger.absorbed
    si = pops[SINGLE1] + pops[SINGLE2] + absd[SINGLE1] + absd[SINGLE2]
    di = pops[DOUBLE] + absd[DOUBLE]
    se = ledger.transfers[NEUTRAL, DOUBLE]
    ce = ledger.transfers[SINGLE1, DOUBLE] + ledger.transfers[SINGLE2, DOUBLE]
    rec = YieldRecord(pulse.F0, float(si), float(di), float(se), float(ce), float(si + di), ledger)
    if keep_final:
        rec.final = result.final
    log.info("F0=%.4f SI=%.4e DI=%.4e SE=%.4e CE=%.4e", pulse.F0, si, di, se, ce)
    return rec


class FieldEstimate(NamedTuple):
    value: float
    in_range: bool
    note: str = ""


def find_f_sat(F0, p_ion, level: float = SATURATION_LEVEL) -> FieldEstimate:
    """Peak field where the total ionization curve first reaches ``1 - 1/e`` (linear interpolation)."""
    F0 = np.asarray(F0, dtype=float)
    p = np.asarray(p_ion, dtype=float)
    order = np.argsort(F0)
    F0, p = F0[order], p[order]
    above = np.flatnonzero(p >= level)
    if above.size == 0:
        return FieldEstimate(float("nan"), False, "curve stays below saturation level")
    i = above[0]
    if i == 0:
        return FieldEstimate(float(F0[0]), False, "curve starts above saturation level")
    f1, f2, p1, p2 = F0[i - 1], F0[i], p[i - 1], p[i]
    return FieldEstimate(float(f1 + (level - p1) * (f2 - f1) / (p2 - p1)), True)


def find_f_max(F0, si) -> FieldEstimate:
    """Location of the SI maximum, refined by a parabola through the three points around the argmax."""
    F0 = np.asarray(F0, dtype=float)
    y = np.asarray(si, dtype=float)
    if F0.size < 3:
        raise ValueError("need at least three samples")
    order = np.argsort(F0)
    F0, y = F0[order], y[order]
    i = int(np.argmax(y))
    if i == 0 or i == F0.size - 1:
        return FieldEstimate(float(F0[i]), False, "maximum on the boundary of the scanned range")
    x0, x1, x2 = F0[i - 1 : i + 2]
    y0, y1, y2 = y[i - 1 : i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return FieldEstimate(float(x1), True, "degenerate parabola")
    return FieldEstimate(float(-b / (2 * a)), True)


def write_sweep_table(path, rows, header_lines=()):
    """Delimited sweep table with columns ``F0 SI DI DI_SE DI_CE P_ion``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    head = "\n".join(list(header_lines) + [" ".join(SWEEP_COLUMNS)])
    np.savetxt(path, rows, fmt="%.17g", header=head, comments="# ")


def read_sweep_table(path) -> dict:
    data = np.atleast_2d(np.loadtxt(path, comments="#"))
    return {name: data[:, i] for i, name in enumerate(SWEEP_COLUMNS)}
