import numpy as np
import pytest

from nsdi.grid import Wavefunction, make_grid, transform
from nsdi.potentials import SoftCoreParams
from nsdi.propagator import (
    Absorber,
    AbsorberSpec,
    GridTooSmallError,
    SplitOperator,
    check_quiver_radius,
    kinetic_time_step_ratio,
    propagate,
    step,
    write_observer_text,
)
from nsdi.pulse import PulseParams


def displaced_state(grid, shift=1.0):
    r1, r2 = grid.mesh()
    a = np.exp(-((r1 - shift) ** 2 + (r2 + 0.5) ** 2) / 2).astype(complex)
    a /= np.sqrt(np.vdot(a, a).real * grid.dx**2)
    return a


def test_field_free_ground_state_is_stationary(small_ground):
    psi, energy = small_ground
    op = SplitOperator(psi.grid, None, "length", 0.05)
    a = psi.amplitudes.copy()
    for n in range(1000):
        a = op.advance(a, n * 0.05)
    norm = np.vdot(a, a).real * psi.grid.dx**2
    assert abs(norm - 1.0) < 1e-9
    assert abs(op.energy(a) - energy) / abs(energy) < 1e-6


def test_field_free_energy_of_moving_state_is_bounded():
    g = make_grid(64, 0.5)
    op = SplitOperator(g, None, "velocity", 0.02)
    a = displaced_state(g)
    e0 = op.energy(a)
    for n in range(500):
        a = op.advance(a, 0.0)
    assert np.vdot(a, a).real * g.dx**2 == pytest.approx(1.0, abs=1e-12)
    assert abs(op.energy(a) - e0) < 1e-3 * abs(e0)


@pytest.mark.parametrize("gauge", ["length", "velocity"])
def test_second_order_in_dt(gauge):
    g = make_grid(64, 0.4)
    pulse = PulseParams(0.05, 0.5, 0.3, 1)
    t_end = 4.0

    def run(dt):
        op = SplitOperator(g, pulse, gauge, dt)
        a = displaced_state(g)
        for n in range(int(round(t_end / dt))):
            a = op.advance(a, n * dt)
        return a

    ref = run(0.0025)
    errs = [np.linalg.norm(run(dt) - ref) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8) and np.all(orders < 2.3), orders


def test_gauges_agree_after_the_pulse(small_ground):
    # A(T_p) = 0, so the two gauge wavefunctions coincide once the pulse is over
    psi, _ = small_ground
    g = psi.grid
    pulse = PulseParams(0.02, 0.5, 0.0, 1)
    out = {}
    for gauge in ("length", "velocity"):
        op = SplitOperator(g, pulse, gauge, 0.005)
        a = psi.amplitudes.astype(complex)
        for n in range(int(round(pulse.duration / 0.005))):
            a = op.advance(a, n * 0.005)
        out[gauge] = a
    # the A^2 term is dropped in velocity gauge, so compare up to a global phase
    overlap = np.vdot(out["length"], out["velocity"]) * g.dx**2
    b = out["velocity"] * np.conj(overlap) / abs(overlap)
    diff = np.sqrt(np.sum(np.abs(out["length"] - b) ** 2) * g.dx**2)
    assert diff < 1e-3


def test_absorber_mask_profile():
    spec = AbsorberSpec(8.0, 10.0, 0.125)
    r = np.array([0.0, 8.0, 9.0, 10.0])
    m = spec.mask(r)
    assert m[0] == 1.0 and m[1] == 1.0
    assert m[2] == pytest.approx(np.cos(np.pi / 4) ** 0.125)
    assert m[3] < 1e-2
    assert AbsorberSpec.for_grid(make_grid(64, 0.5)).x0 == pytest.approx(12.8)


def test_absorber_spec_validation():
    with pytest.raises(ValueError):
        AbsorberSpec(10.0, 10.0)
    with pytest.raises(ValueError):
        AbsorberSpec(5.0, 10.0)
    with pytest.raises(ValueError):
        AbsorberSpec(8.0, 10.0, 0.0)


def test_absorber_reports_removed_norm(rng):
    g = make_grid(64, 0.5)
    a = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    before = np.vdot(a, a).real * g.dx**2
    labels = (np.arange(64)[:, None] % 3 + np.zeros((1, 64), int)).astype(np.intp)
    removed = Absorber(g, AbsorberSpec.for_grid(g), labels, 3).apply(a)
    after = np.vdot(a, a).real * g.dx**2
    assert removed.shape == (3,)
    assert before - after == pytest.approx(removed.sum(), rel=1e-12)
    b = a.copy()
    assert Absorber(g, AbsorberSpec.for_grid(g)).apply(b) >= 0.0


def test_quiver_radius_check():
    g = make_grid(64, 0.5)
    pulse = PulseParams(0.1, 0.05, 0.0, 2)
    with pytest.raises(GridTooSmallError) as info:
        check_quiver_radius(g, pulse, AbsorberSpec.for_grid(g))
    assert info.value.min_length == pytest.approx(2 * 40.0 / 0.8)


def test_kinetic_bound_warning():
    g = make_grid(64, 0.1)
    assert kinetic_time_step_ratio(g, 0.05) > 1
    with pytest.warns(RuntimeWarning, match="anti-aliasing"):
        SplitOperator(g, None, "length", 0.05)


def test_functional_step_checks_inputs(small_ground):
    psi, _ = small_ground
    with pytest.raises(ValueError):
        step(transform(psi, "momentum"), 0.0, 0.05, "length", None)
    with pytest.raises(ValueError):
        step(psi, 0.0, 0.05, "velocity", None)
    out, removed = step(psi, 0.0, 0.05, "length", None, absorber=AbsorberSpec.for_grid(psi.grid))
    assert out.amplitudes is not psi.amplitudes
    assert removed < 1e-10


def test_propagate_records_and_calls_observers(small_ground, tmp_path):
    psi, _ = small_ground
    calls = []

    class Probe:
        def start(self, t, a):
            calls.append(("start", t))

        def __call__(self, n, t, a, removed):
            calls.append((n, t))

    pulse = PulseParams(0.02, 1.0, 0.0, 1)
    res = propagate(psi, pulse, "length", AbsorberSpec.for_grid(psi.grid), [Probe()], dt=0.05, record_every=10)
    n_steps = int(round(pulse.simulation_time / 0.05))
    assert calls[0] == ("start", 0.0) and len(calls) == n_steps + 1
    assert res.norms[-1] + res.total_absorbed == pytest.approx(1.0, abs=1e-12)
    path = tmp_path / "obs.txt"
    write_observer_text(path, res, header="demo")
    assert np.loadtxt(path).shape == (res.times.size, 3)


def test_propagation_rejects_momentum_input(small_ground):
    psi, _ = small_ground
    with pytest.raises(ValueError):
        propagate(transform(psi, "momentum"), PulseParams(0.01, 1.0), "length")
