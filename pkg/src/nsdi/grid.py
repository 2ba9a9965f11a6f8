"""Square position grid, its conjugate momentum lattice and the shared DFT convention.

Position axes are centered, ``r_j = (j - n/2) dx``, so the origin sits at index
``n/2``.  Momentum axes use the standard DFT wraparound ordering with the
zero-frequency bin first.  Momentum amplitudes are scaled as a discrete
approximation of the continuous unitary Fourier transform::

    phi(k) = dx / sqrt(2 pi) * sum_j psi(r_j) exp(-i k r_j)

so that ``sum |phi|^2 dk == sum |psi|^2 dx`` along every transformed axis.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid2D",
    "Wavefunction",
    "make_grid",
    "transform",
    "to_momentum_axis",
    "to_position_axis",
    "norm_squared",
    "write_dump",
    "read_dump",
    "write_density_text",
    "POSITION",
    "MOMENTUM",
]

POSITION = ("r", "r")
MOMENTUM = ("k", "k")
GAUGES = ("length", "velocity")
_REPRESENTATIONS = (POSITION, MOMENTUM, ("k", "r"), ("r", "k"))
DUMP_MAGIC = b"TDSE2E01"


@dataclass(frozen=True)
class Grid2D:
    """Square grid ``[-L/2, L/2)^2`` with ``n_points`` samples per axis."""

    n_points: int
    dx: float
    r: np.ndarray = field(init=False, repr=False, compare=False)
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = (np.arange(self.n_points) - self.n_points // 2) * self.dx
        k = 2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.dx)
        r.flags.writeable = False
        k.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "k", k)

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    @property
    def half_width(self) -> float:
        return 0.5 * self.length

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_points, self.n_points)

    def mesh(self):
        """Return ``(r1, r2)`` broadcastable column/row views."""
        return self.r[:, None], self.r[None, :]

    def k_mesh(self):
        return self.k[:, None], self.k[None, :]

    def k_sorted(self) -> np.ndarray:
        """Momentum axis in ascending order (matches ``fftshift`` of the lattice)."""
        return sfft.fftshift(self.k)

    def index_of(self, r: float) -> int:
        """Index of the grid point nearest to ``r``; raises if off-grid."""
        j = int(round(r / self.dx)) + self.n_points // 2
        if not 0 <= j < self.n_points:
            raise ValueError(f"coordinate {r} lies outside the grid")
        return j


def make_grid(n_points: int, dx: float) -> Grid2D:
    """Build a :class:`Grid2D`.

    Grids smaller than 8 points are rejected; sizes that are not a power of
    two are accepted with a performance warning.
    """
    n_points = int(n_points)
    if n_points < 8:
        raise ValueError(f"n_points must be >= 8, got {n_points}")
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    if n_points % 2:
        raise ValueError("n_points must be even for a centered axis")
    if n_points & (n_points - 1):
        warnings.warn(
            f"n_points={n_points} is not a power of two; FFTs may be slower",
            RuntimeWarning,
            stacklevel=2,
        )
    return Grid2D(n_points, float(dx))


@dataclass
class Wavefunction:
    """Two-electron amplitude on a :class:`Grid2D`.

    ``representation`` holds one flag per axis, ``"r"`` (position) or ``"k"``
    (momentum); ``("k", "r")`` is the mixed sector with electron 1 in momentum
    space.
    """

    amplitudes: np.ndarray
    grid: Grid2D
    gauge: str = "length"
    representation: tuple = POSITION
    symmetric: bool = False

    def __post_init__(self):
        self.representation = _as_representation(self.representation)
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}")
        if self.amplitudes.shape != self.grid.shape:
            raise ValueError(
                f"amplitude shape {self.amplitudes.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "Wavefunction":
        return replace(self, amplitudes=self.amplitudes.copy())

    def norm_squared(self) -> float:
        return norm_squared(self)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def exchange_asymmetry(self) -> float:
        """Max-abs deviation from ``psi(r1, r2) = psi(r2, r1)``."""
        a = self.amplitudes
        return float(np.max(np.abs(a - a.T)))


def _as_representation(rep) -> tuple:
    if isinstance(rep, str):
        if rep == "position":
            return POSITION
        if rep == "momentum":
            return MOMENTUM
        if rep.startswith("mixed"):
            # "mixed0": momentum along axis 0
            axis = int(rep[-1])
            return ("k", "r") if axis == 0 else ("r", "k")
        raise ValueError(f"unknown representation {rep!r}")
    rep = tuple(rep)
    if rep not in _REPRESENTATIONS:
        raise ValueError(f"unknown representation {rep!r}")
    return rep


def _axis_weight(rep: tuple, grid: Grid2D) -> float:
    w = 1.0
    for flag in rep:
        w *= grid.dx if flag == "r" else grid.dk
    return w


def norm_squared(psi: Wavefunction) -> float:
    """Riemann-sum squared norm with the per-axis weights ``dx`` or ``dk``."""
    w = _axis_weight(psi.representation, psi.grid)
    return float(np.vdot(psi.amplitudes, psi.amplitudes).real * w)


def to_momentum_axis(a: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """Forward transform of a centered-position array along ``axis``."""
    out = sfft.fft(sfft.ifftshift(a, axes=axis), axis=axis, overwrite_x=True)
    out *= dx / np.sqrt(2.0 * np.pi)
    return out


def to_position_axis(a: np.ndarray, axis: int, dx: float) -> np.ndarray:
    """Inverse of :func:`to_momentum_axis`."""
    out = sfft.fftshift(sfft.ifft(a, axis=axis), axes=axis)
    out *= np.sqrt(2.0 * np.pi) / dx
    return out


def transform(psi: Wavefunction, target) -> Wavefunction:
    """Change the representation of ``psi`` axis by axis.

    ``target`` is ``"position"``, ``"momentum"``, ``"mixed0"``/``"mixed1"`` or a
    per-axis tuple such as ``("k", "r")``.
    """
    target = _as_representation(target)
    if target == psi.representation:
        raise ValueError(f"wavefunction is already in representation {target}")
    a = psi.amplitudes
    for axis, (cur, new) in enumerate(zip(psi.representation, target)):
        if cur == new:
            continue
        if new == "k":
            a = to_momentum_axis(a, axis, psi.grid.dx)
        else:
            a = to_position_axis(a, axis, psi.grid.dx)
    return replace(psi, amplitudes=a, representation=target)


def _rep_code(gauge: str, rep: tuple) -> int:
    return 4 * GAUGES.index(gauge) + _REPRESENTATIONS.index(rep)


def write_dump(path, amplitudes: np.ndarray, dx: float, gauge="length", representation=POSITION):
    """Write an array in the shared binary grid-dump format.

    Layout: magic ``TDSE2E01``, int64 ``[rank, n1, n2]``, float64 ``dx``,
    int64 code ``4*gauge + representation``, then row-major complex128 pairs,
    all little-endian.  Gauge index is 0 (length) / 1 (velocity); representation
    index is 0 position, 1 momentum, 2 mixed with axis 0 in momentum, 3 mixed
    with axis 1 in momentum.
    """
    a = np.asarray(amplitudes)
    if a.ndim == 1:
        rank, n1, n2 = 1, a.shape[0], 1
    elif a.ndim == 2:
        rank, (n1, n2) = 2, a.shape
    else:
        raise ValueError("only rank 1 or 2 arrays can be dumped")
    code = _rep_code(gauge, _as_representation(representation))
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<qqq", rank, n1, n2))
        fh.write(struct.pack("<d", float(dx)))
        fh.write(struct.pack("<q", code))
        fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())


def read_dump(path):
    """Read a grid dump; returns ``(array, dx, gauge, representation)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != DUMP_MAGIC:
        raise ValueError(f"{path}: not a grid dump (bad magic)")
    rank, n1, n2 = struct.unpack_from("<qqq", raw, 8)
    (dx,) = struct.unpack_from("<d", raw, 32)
    (code,) = struct.unpack_from("<q", raw, 40)
    data = np.frombuffer(raw, dtype="<c16", offset=48)
    if data.size != n1 * n2:
        raise ValueError(f"{path}: truncated payload")
    shape = (n1,) if rank == 1 else (n1, n2)
    gauge = GAUGES[code // 4]
    rep = _REPRESENTATIONS[code % 4]
    return data.reshape(shape).astype(np.complex128), dx, gauge, rep


def write_density_text(path, axis1, axis2, density, header="r1 r2 density", step=1):
    """Delimited-text export: a header line, then ``x y value`` rows."""
    axis1 = np.asarray(axis1)[::step]
    axis2 = np.asarray(axis2)[::step]
    d = np.asarray(density)[::step, ::step]
    x, y = np.meshgrid(axis1, axis2, indexing="ij")
    rows = np.column_stack([x.ravel(), y.ravel(), d.ravel()])
    np.savetxt(path, rows, fmt="%.17g", header=header, comments="# ")
