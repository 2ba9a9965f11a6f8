"""Rate-equation model for sequential and nonsequential double ionization.

Populations of the neutral atom, singly and doubly charged ion evolve as::

    dP0/dt = -(W01 + W02) P0
    dP1/dt =  W01 P0 - W12 P1
    dP2/dt =  W02 P0 + W12 P1

with quasi-static ADK rates for the sequential steps and ``W02 = r W01`` for
the nonsequential channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .yields import SATURATION_LEVEL, FieldEstimate, find_f_max, find_f_sat


def adk_rate(F, ionization_energy: float, charge: float = 1.0):
    """Quasi-static ADK tunnelling rate for an s-state.

    ``W = C^2 E_I (2 kappa^3/|F|)^(2n*-1) exp(-2 kappa^3 / (3|F|))`` with
    ``kappa = sqrt(2 E_I)``, ``n* = Z/kappa`` and
    ``C^2 = 2^(2n*) / (n* Gamma(n*+1) Gamma(n*))``.  Returns 0 where ``F == 0``.
    """
    if not ionization_energy > 0:
        raise ValueError("ionization energy must be positive")
    F = np.abs(np.asarray(F, dtype=float))
    kappa = np.sqrt(2.0 * ionization_energy)
    n_star = charge / kappa
    log_c2 = 2.0 * n_star * np.log(2.0) - np.log(n_star) - gammaln(n_star + 1.0) - gammaln(n_star)
    k3 = kappa**3
    with np.errstate(divide="ignore", invalid="ignore"):
        log_w = log_c2 + np.log(ionization_energy) + (2.0 * n_star - 1.0) * np.log(2.0 * k3 / F) - 2.0 * k3 / (3.0 * F)
        w = np.where(F > 0, np.exp(log_w), 0.0)
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class RateModel:
    """Rate-model parameters.

    Ionization energies are multiplied by ``eta`` before entering the ADK
    formula (``eta < 1`` raises the effective quantum numbers).  ``w02_mode``
    is ``"ratio"`` (``W02 = ratio * W01``) or ``"zero"``.
    """

    ionization_energy: float = 0.98
    ion_ionization_energy: float = 1.85
    eta: float = 0.95
    ratio: float = 0.019
    w02_mode: str = "ratio"

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.ratio < 0:
            raise ValueError("ratio must be non-negative")
        if self.w02_mode not in ("ratio", "zero"):
            raise ValueError(f"unknown W02 mode {self.w02_mode!r}")

    @property
    def n01_star(self) -> float:
        return 1.0 / np.sqrt(2.0 * self.ionization_energy * self.eta)

    @property
    def n12_star(self) -> float:
        return 2.0 / np.sqrt(2.0 * self.ion_ionization_energy * self.eta)

    def rates(self, F):
        w01 = adk_rate(F, self.ionization_energy * self.eta, 1.0)
        w12 = adk_rate(F, self.ion_ionization_energy * self.eta, 2.0)
        w02 = self.ratio * w01 if self.w02_mode == "ratio" else 0.0 * w01
        return w01, w02, w12

    def total_neutral_rate(self, F):
        w01, w02, _ = self.rates(F)
        return w01 + w02


@dataclass(frozen=True)
class SquarePulse:
    """``F(t) = F0`` on ``[0, T_p]``."""

    F0: float
    duration: float

    def field(self, t):
        return np.where((np.asarray(t) >= 0) & (np.asarray(t) <= self.duration), self.F0, 0.0)

    @property
    def max_step(self):
        return self.duration / 20.0


@dataclass(frozen=True)
class SinePulse:
    """``F(t) = F0 sin(omega t)`` on ``[0, T_p]`` with ``T_p = 2 pi n_c / omega``."""

    F0: float
    omega: float
    n_c: int

    @property
    def duration(self):
        return 2.0 * np.pi * self.n_c / self.omega

    def field(self, t):
        t = np.asarray(t)
        return np.where((t >= 0) & (t <= self.duration), self.F0 * np.sin(self.omega * t), 0.0)


def _max_step(pulse) -> float:
    step = getattr(pulse, "max_step", None)
    if step is not None:
        return step
    omega = getattr(pulse, "omega", None)
    if omega:
        return 2.0 * np.pi / omega / 40.0
    return pulse.duration / 200.0


@dataclass
class RateSolution:
    t: np.ndarray
    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    p2_ode_mismatch: float

    @property
    def final(self):
        return float(self.P0[-1]), float(self.P1[-1]), float(self.P2[-1])


def integrate_rates(model: RateModel, pulse, tol: float = 1e-8, rate_fn=None) -> RateSolution:
    """Integrate the rate equations over ``[0, T_p]`` with an adaptive explicit Runge-Kutta scheme.

    ``rate_fn(F) -> (W01, W02, W12)`` overrides the model rates (used for
    constant-rate checks).  ``P2`` is reported as ``1 - P0 - P1``; its own ODE
    is integrated alongside and the largest disagreement is kept in
    ``p2_ode_mismatch``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    rate_fn = rate_fn or model.rates

    def rhs(t, y):
        w01, w02, w12 = rate_fn(abs(float(pulse.field(t))))
        p0, p1, _ = y
        return [-(w01 + w02) * p0, w01 * p0 - w12 * p1, w02 * p0 + w12 * p1]

    sol = integrate.solve_ivp(
        rhs, (0.0, pulse.duration), [1.0, 0.0, 0.0], method="RK45",
        rtol=tol, atol=tol * 1e-2, max_step=_max_step(pulse), dense_output=False,
    )
    if sol.status != 0:
        raise RuntimeError(f"rate integration failed: {sol.message}")
    p0, p1, p2_ode = sol.y
    # round-off can push the complement a few ulp below zero
    p2 = np.clip(1.0 - p0 - p1, 0.0, 1.0)
    return RateSolution(sol.t, p0, p1, p2, float(np.max(np.abs(p2 - p2_ode))))


def ionized_fraction(model: RateModel, pulse, tol: float = 1e-10) -> float:
    p0, _, _ = integrate_rates(model, pulse, tol).final
    return 1.0 - p0


def saturation_field(model: RateModel, pulse_at, bracket=(0.02, 2.0), tol: float = 1e-11) -> float:
    """Root of ``P_ion(F0) = 1 - 1/e`` for the pulse family ``pulse_at(F0)``."""
    return optimize.brentq(
        lambda f: ionized_fraction(model, pulse_at(f), tol) - SATURATION_LEVEL, *bracket, xtol=1e-12, rtol=1e-12
    )


def square_saturation_field(rate, duration: float, bracket=(0.02, 2.0)) -> float:
    """Solve ``W(F) T_p = 1``."""
    return optimize.brentq(lambda f: rate(f) * duration - 1.0, *bracket, xtol=1e-14, rtol=1e-14)


def sine_saturation_field(rate, duration: float, bracket=(0.02, 2.0)) -> float:
    """Solve ``(T_p / 2 pi) int_0^{2 pi} W(F |sin tau|) dtau = 1``."""

    def g(f):
        val, _ = integrate.quad(lambda tau: rate(f * abs(np.sin(tau))), 0.0, 2.0 * np.pi,
                                points=[np.pi], epsabs=0.0, epsrel=1e-13, limit=200)
        return duration / (2.0 * np.pi) * val - 1.0

    return optimize.brentq(g, *bracket, xtol=1e-14, rtol=1e-14)


@dataclass
class KneeCurves:
    F0: np.ndarray
    SI: np.ndarray
    DI: np.ndarray
    P_ion: np.ndarray
    f_sat: FieldEstimate
    f_max: FieldEstimate

    def rows(self):
        """Sweep-table rows ``F0 SI DI DI_SE DI_CE P_ion``; the SE/CE split does not exist here (NaN)."""
        nan = np.full_like(self.F0, np.nan)
        return np.column_stack([self.F0, self.SI, self.DI, nan, nan, self.P_ion])


def knee_curves(model: RateModel, pulse_at, F0_scan, tol: float = 1e-8) -> KneeCurves:
    """SI/DI yields at the end of the pulse for every ``F0`` plus ``F_sat`` and ``F_max``."""
    F0 = np.asarray(F0_scan, dtype=float)
    if np.any(np.diff(F0) <= 0):
        raise ValueError("F0 scan must be strictly increasing")
    si, di = np.empty_like(F0), np.empty_like(F0)
    for i, f in enumerate(F0):
        _, p1, p2 = integrate_rates(model, pulse_at(f), tol).final
        si[i], di[i] = p1, p2
    p_ion = si + di
    return KneeCurves(F0, si, di, p_ion, find_f_sat(F0, p_ion), find_f_max(F0, si))
