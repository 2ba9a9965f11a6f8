"""Soft-core Coulomb terms and dipole coupling of the (1+1)-dimensional helium model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D

# geometric factor of the model's field coupling
FIELD_FACTOR = np.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class SoftCoreParams:
    """Smoothing ``1/|r| -> 1/sqrt(r^2 + epsilon)``.

    ``soften_repulsion`` switches epsilon off in the electron-electron term
    (it then reads ``1/sqrt(r1^2 - r1 r2 + r2^2)``, singular only at the origin).
    """

    epsilon: float = 0.6
    charge: float = 2.0
    soften_repulsion: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def nuclear_attraction(r, params: SoftCoreParams = SoftCoreParams()):
    return -params.charge / np.sqrt(np.square(r) + params.epsilon)


def electron_repulsion(r1, r2, params: SoftCoreParams = SoftCoreParams()):
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    arg = (r1 - r2) ** 2 + r1 * r2
    if params.soften_repulsion:
        arg = arg + params.epsilon
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(arg)


def static_potential_field(grid: Grid2D, params: SoftCoreParams = SoftCoreParams()) -> np.ndarray:
    """Field-free potential ``V(r1, r2)`` on the grid (exactly exchange symmetric)."""
    v1 = nuclear_attraction(grid.r, params)
    r1, r2 = grid.mesh()
    v = v1[:, None] + v1[None, :] + electron_repulsion(r1, r2, params)
    # enforce bitwise symmetry against round-off in the repulsion argument
    return 0.5 * (v + v.T)


def field_coupling_length(grid: Grid2D, F: float) -> np.ndarray:
    """Length-gauge coupling ``(sqrt(3)/2) F (r1 + r2)``."""
    r1, r2 = grid.mesh()
    return FIELD_FACTOR * F * (r1 + r2)


def ion_potential(r, params: SoftCoreParams = SoftCoreParams()):
    """Potential seen by the remaining electron once the other is far away."""
    return nuclear_attraction(r, params)
