"""Zero-area few-cycle laser pulse, its vector potential and derived field scales.

All quantities are in atomic units.  The envelope is chosen such that the
vector potential vanishes at both ends of the pulse for any carrier-envelope
phase, so the pulse area is zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

AU_TIME_FS = 0.02418884326585747
AU_LENGTH_NM = 0.052917721090


@dataclass(frozen=True)
class PulseParams:
    F0: float
    omega: float
    phi: float = 0.0
    n_c: int = 5

    def __post_init__(self):
        if self.F0 < 0:
            raise ValueError(f"F0 must be non-negative, got {self.F0}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if int(self.n_c) != self.n_c or self.n_c < 1:
            raise ValueError(f"n_c must be a positive integer, got {self.n_c}")

    @property
    def duration(self) -> float:
        """Pulse duration ``T_p = 2 pi n_c / omega``."""
        return 2.0 * np.pi * self.n_c / self.omega

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def simulation_time(self) -> float:
        """Pulse plus one field-free cycle."""
        return (self.n_c + 1) * self.period

    def field(self, t):
        return field_at(self, t)

    def vector_potential(self, t):
        return vector_potential_at(self, t)


def field_at(p: PulseParams, t):
    """Electric field ``F(t)``; zero outside ``[0, T_p]``."""
    t = np.asarray(t, dtype=float)
    tp = p.duration
    ts = t - 0.5 * tp
    env = np.pi * ts / tp
    carrier = p.omega * ts + p.phi
    f = np.cos(env) * (np.cos(env) * np.cos(carrier) - np.sin(env) * np.sin(carrier) / p.n_c)
    out = np.where((t >= 0.0) & (t <= tp), p.F0 * f, 0.0)
    return out if out.ndim else float(out)


def vector_potential_at(p: PulseParams, t):
    """Closed form of ``A(t) = -int_0^t F``: ``-(F0/omega) cos^2(pi t*/T_p) sin(omega t* + phi)``."""
    t = np.asarray(t, dtype=float)
    tp = p.duration
    ts = t - 0.5 * tp
    a = -(p.F0 / p.omega) * np.cos(np.pi * ts / tp) ** 2 * np.sin(p.omega * ts + p.phi)
    out = np.where((t >= 0.0) & (t <= tp), a, 0.0)
    return out if out.ndim else float(out)


def _field_scalar(p: PulseParams, t: float) -> float:
    tp = p.duration
    if t < 0.0 or t > tp:
        return 0.0
    ts = t - 0.5 * tp
    env = math.pi * ts / tp
    carrier = p.omega * ts + p.phi
    ce = math.cos(env)
    return p.F0 * ce * (ce * math.cos(carrier) - math.sin(env) * math.sin(carrier) / p.n_c)


def vector_potential_quadrature(p: PulseParams, t) -> np.ndarray:
    """``-int_0^t F dt'`` by adaptive quadrature, accumulated piecewise over ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(t)
    out = np.empty_like(t)
    acc, prev = 0.0, 0.0
    for i in order:
        hi = min(max(t[i], 0.0), p.duration)
        if hi > prev:
            val, _ = integrate.quad(lambda s: _field_scalar(p, s), prev, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
            acc += val
            prev = hi
        out[i] = -acc
    return out


def validate_vector_potential(p: PulseParams, n_samples: int = 10_000) -> float:
    """Max-abs deviation of the closed-form ``A`` from quadrature, in units of ``F0/omega``."""
    t = np.linspace(0.0, p.duration, n_samples)
    closed = vector_potential_at(p, t)
    quad = vector_potential_quadrature(p, t)
    scale = p.F0 / p.omega if p.F0 > 0 else 1.0
    return float(np.max(np.abs(closed - quad)) / scale)


def pulse_area(p: PulseParams) -> float:
    """``int_0^{T_p} F dt`` by adaptive quadrature."""
    val, _ = integrate.quad(
        lambda s: _field_scalar(p, s), 0.0, p.duration, epsabs=1e-15, epsrel=1e-13, limit=50 * p.n_c + 100
    )
    return val


def ponderomotive(p: PulseParams) -> float:
    return p.F0**2 / (4.0 * p.omega**2)


def quiver_radius(p: PulseParams) -> float:
    return p.F0 / p.omega**2


def keldysh(p: PulseParams, ionization_energy: float) -> float:
    if p.F0 <= 0:
        raise ValueError("Keldysh parameter undefined for F0 = 0")
    return np.sqrt(2.0 * ionization_energy) * p.omega / p.F0


def wavelength_nm(omega: float) -> float:
    return 2.0 * np.pi * 137.035999084 / omega * AU_LENGTH_NM


def time_fs(t_au: float) -> float:
    return t_au * AU_TIME_FS
