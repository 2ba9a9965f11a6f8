"""Field-free initial states: imaginary-time relaxation in 2D and the 1D ion ground state."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy import linalg

from .grid import Grid2D, Wavefunction, read_dump, write_dump
from .potentials import SoftCoreParams, nuclear_attraction, static_potential_field

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Imaginary-time relaxation did not reach the requested tolerance."""

    def __init__(self, message, last_energy):
        super().__init__(f"{message} (last energy {last_energy:.12g})")
        self.last_energy = last_energy


def kinetic_symbol(grid: Grid2D) -> np.ndarray:
    k1, k2 = grid.k_mesh()
    return 0.5 * (k1**2 + k2**2)


def energy_expectation(psi: np.ndarray, potential: np.ndarray, kinetic: np.ndarray, dx: float) -> float:
    """``<psi|T + V|psi> / <psi|psi>`` with a spectral kinetic term."""
    phi = sfft.fft2(psi)
    kin = np.sum(kinetic * np.abs(phi) ** 2) / phi.size
    pot = np.sum(potential * np.abs(psi) ** 2)
    nrm = np.vdot(psi, psi).real
    return float((kin + pot) / nrm)


def relax_imaginary_time(
    grid: Grid2D,
    params: SoftCoreParams = SoftCoreParams(),
    dt_im: float = 0.01,
    tol: float = 1e-9,
    max_steps: int = 1_000_000,
    sigma: float = 1.0,
    history: list | None = None,
    initial: np.ndarray | None = None,
):
    """Relax a symmetric Gaussian (or the amplitudes ``initial``) towards the two-electron ground state.

    Each step is a Strang split ``exp(-V dt/2) exp(-T dt) exp(-V dt/2)``
    followed by renormalisation.  Iteration stops once successive energy
    expectations differ by less than ``tol``.  If ``history`` is a list, the
    energy after every step is appended to it.

    Returns
    -------
    (Wavefunction, float)
        normalised real ground state and its energy.
    """
    if not dt_im > 0 or not tol > 0:
        raise ValueError("dt_im and tol must be positive")
    potential = static_potential_field(grid, params)
    kinetic = kinetic_symbol(grid)
    half_v = np.exp(-0.5 * dt_im * potential)
    full_t = np.exp(-dt_im * kinetic)
    if initial is not None:
        if np.shape(initial) != grid.shape:
            raise ValueError(f"initial state has shape {np.shape(initial)}, grid is {grid.shape}")
        psi = np.array(initial, dtype=np.complex128)
    else:
        r1, r2 = grid.mesh()
        psi = np.exp(-(r1**2 + r2**2) / (2.0 * sigma**2)).astype(np.complex128)
    psi /= np.sqrt(np.vdot(psi, psi).real * grid.dx**2)

    energy = energy_expectation(psi, potential, kinetic, grid.dx)
    for n in range(1, max_steps + 1):
        psi *= half_v
        psi = sfft.ifft2(full_t * sfft.fft2(psi, overwrite_x=True), overwrite_x=True)
        psi *= half_v
        psi /= np.sqrt(np.vdot(psi, psi).real * grid.dx**2)
        new = energy_expectation(psi, potential, kinetic, grid.dx)
        if history is not None:
            history.append(new)
        if abs(new - energy) < tol:
            energy = new
            log.info("imaginary-time relaxation converged after %d steps: E=%.10f", n, energy)
            break
        energy = new
    else:
        raise ConvergenceError(f"no convergence within {max_steps} imaginary-time steps", energy)

    # remove the residual imaginary part (the kernel is real and positive)
    psi = psi.real.astype(np.complex128)
    psi = 0.5 * (psi + psi.T)
    psi /= np.sqrt(np.vdot(psi, psi).real * grid.dx**2)
    energy = energy_expectation(psi, potential, kinetic, grid.dx)
    return Wavefunction(psi, grid, gauge="length", representation="position", symmetric=True), energy


def embed_centered(amplitudes: np.ndarray, n_points: int) -> np.ndarray:
    """Zero-pad (or crop) a centred square array to ``n_points`` per axis at unchanged spacing."""
    n = amplitudes.shape[0]
    out = np.zeros((n_points, n_points), dtype=amplitudes.dtype)
    lo_src = max(0, (n - n_points) // 2)
    lo_dst = max(0, (n_points - n) // 2)
    m = min(n, n_points)
    out[lo_dst:lo_dst + m, lo_dst:lo_dst + m] = amplitudes[lo_src:lo_src + m, lo_src:lo_src + m]
    return out


def spectral_kinetic_matrix(n_points: int, dx: float) -> np.ndarray:
    """Dense matrix of ``-1/2 d^2/dr^2`` in the DFT basis (same discretisation as the propagator)."""
    k = 2.0 * np.pi * sfft.fftfreq(n_points, d=dx)
    eye = np.eye(n_points)
    return sfft.ifft(0.5 * k[:, None] ** 2 * sfft.fft(eye, axis=0), axis=0).real


def ion_ground_energy_1d(r: np.ndarray, charge: float = 2.0, epsilon: float = 0.6) -> float:
    """Ground energy of ``-1/2 d^2/dr^2 - Z/sqrt(r^2 + eps)`` on the uniform axis ``r``."""
    r = np.asarray(r, dtype=float)
    dx = r[1] - r[0]
    if r[-1] - r[0] + dx < 60.0:
        raise ValueError("1D ion grid must span at least 60 a.u.")
    h = spectral_kinetic_matrix(r.size, dx)
    h[np.diag_indices_from(h)] += nuclear_attraction(r, SoftCoreParams(epsilon=epsilon, charge=charge))
    return float(linalg.eigh(h, eigvals_only=True, subset_by_index=[0, 0])[0])


def ionization_energies(grid: Grid2D, params: SoftCoreParams = SoftCoreParams(), ground_energy=None):
    """Return ``(E_I, E_I+)`` from the 2D and 1D ground states."""
    if ground_energy is None:
        _, ground_energy = relax_imaginary_time(grid, params)
    r = grid.r
    if grid.n_points * grid.dx < 60.0:
        # small 2D grids: same spacing, wider axis for the (cheap) 1D problem
        half = int(np.ceil(30.0 / grid.dx))
        r = np.arange(-half, half) * grid.dx
    e_ion = ion_ground_energy_1d(r, params.charge, params.epsilon)
    return e_ion - ground_energy, -e_ion


def save_ground_state(path, psi: Wavefunction, energy: float, params: SoftCoreParams):
    """Write the state as a grid dump plus a ``.json`` metadata sidecar."""
    path = Path(path)
    write_dump(path, psi.amplitudes, psi.grid.dx, psi.gauge, psi.representation)
    meta = {
        "epsilon": params.epsilon,
        "soften_repulsion": params.soften_repulsion,
        "dx": psi.grid.dx,
        "n_points": psi.grid.n_points,
        "E_g": energy,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def load_ground_state(path):
    """Inverse of :func:`save_ground_state`; returns ``(Wavefunction, metadata)``."""
    path = Path(path)
    amps, dx, gauge, rep = read_dump(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = Grid2D(amps.shape[0], dx)
    return Wavefunction(amps, grid, gauge=gauge, representation=rep, symmetric=True), meta
