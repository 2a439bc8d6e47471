import numpy as np
import pytest

from masslayer.asymptotics import analyze
from masslayer.dynamics import (IMEXStepper, SimulationTrace, decay_rate_fit, default_dt,
                                displaced_initial, drift_rate, ignition_initial, simulate, step)
from masslayer.errors import FitFailed, StepRejected
from masslayer.model import Cubic, roots_at
from masslayer.spectrum import spectrum_at
from masslayer.stationary import Grid, layer_level, solve_stationary

EPS = 0.02


@pytest.fixture(scope="module")
def sym():
    return analyze(Cubic(0.2, 0.5), 1.0, 0.35)


@pytest.fixture(scope="module")
def grid():
    return Grid.uniform(401)


@pytest.fixture(scope="module")
def state(sym):
    return solve_stationary(sym.model, EPS, 1.0, 0.35, n=401, asym=sym)


@pytest.fixture(scope="module")
def level(sym, state):
    return layer_level(sym.model, state.v_plateau)


def _relax(sym, grid, state, level, shift=0.05, dt=0.1, t_end=300.0):
    u0, v0 = displaced_initial(sym, EPS, grid, shift)
    return simulate(u0, v0, sym.model, EPS, 1.0, grid, t_end, dt=dt, level=level)


@pytest.fixture(scope="module")
def relaxed(sym, grid, state, level):
    return _relax(sym, grid, state, level)


@pytest.mark.parametrize("which", ["h_minus", "h_plus"])
def test_constant_equilibrium_fixed_point(grid, which):
    m = Cubic(0.2, 0.3)
    v = -0.1
    h = getattr(roots_at(m, v), which)
    u = np.full(grid.n, h)
    vv = np.full(grid.n, v)
    u1, v1 = step(u, vv, m, EPS, 1.0, 0.1, grid)
    # roundoff of the diffusion solves, whose matrices have entries ~ dt D / h^2
    assert np.max(np.abs(u1 - u)) <= 1e-12
    assert np.max(np.abs(v1 - vv)) <= 1e-12


def test_step_conserves_mass(sym, grid):
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 1, grid.n)
    v = rng.uniform(-0.1, 0.1, grid.n)
    u1, v1 = step(u, v, sym.model, EPS, 1.0, 0.05, grid)
    m0, m1 = grid.integrate(u + v), grid.integrate(u1 + v1)
    assert abs(m1 - m0) <= 1e-14 * max(1.0, abs(m0))


def test_step_from_stationary(sym, grid, state):
    dt = 0.1
    u1, _ = step(state.u, state.v, sym.model, EPS, 1.0, dt, grid)
    assert np.max(np.abs(u1 - state.u)) <= dt * (state.residual_norm + 10 * grid.h**2)


def test_blowup_rejected(sym, grid):
    u = np.full(grid.n, 50.0)
    v = np.zeros(grid.n)
    with pytest.raises(StepRejected):
        simulate(u, v, sym.model, EPS, 1.0, grid, 5.0, dt=0.1, blowup=100.0)


def test_stationary_start_persists(sym, grid, state, level):
    tr = simulate(state.u, state.v, sym.model, EPS, 1.0, grid, 50.0, dt=0.1, level=level)
    assert np.max(np.abs(tr.layer_x - state.layer_x)) <= 1e-6
    assert np.all(np.diff(tr.times) > 0)


def test_displaced_relaxes_monotonically(relaxed, state):
    disp = np.abs(relaxed.layer_x - state.layer_x)
    assert disp[0] > 0.04
    assert np.all(np.diff(disp) <= 1e-12)
    assert disp[-1] < 1e-3


def test_mass_conservation(relaxed):
    assert np.max(np.abs(relaxed.mass - 0.35)) <= 1e-11


def test_decay_rate_matches_critical_eigenvalue(relaxed, sym, state):
    _, _, res = spectrum_at(sym.model, 1.0, 0.35, EPS, asym=sym, state=state, re_min=-1.0)
    fit = decay_rate_fit(relaxed, state.layer_x, window=(50.0, 300.0))
    assert fit.r2 > 0.999
    assert fit.rate == pytest.approx(res.critical.real, rel=0.15)


def test_decay_rate_linear_in_displacement(sym, grid, state, level, relaxed):
    small = _relax(sym, grid, state, level, shift=0.025)
    r1 = decay_rate_fit(relaxed, state.layer_x, window=(50.0, 300.0)).rate
    r2 = decay_rate_fit(small, state.layer_x, window=(50.0, 300.0)).rate
    assert r2 == pytest.approx(r1, rel=0.05)


def test_decay_rate_dt_robust(sym, grid, state, level, relaxed):
    fine = _relax(sym, grid, state, level, dt=0.05)
    r1 = decay_rate_fit(relaxed, state.layer_x, window=(50.0, 300.0)).rate
    r2 = decay_rate_fit(fine, state.layer_x, window=(50.0, 300.0)).rate
    assert r2 == pytest.approx(r1, rel=0.02)


def test_frozen_v_is_metastable(sym, grid, relaxed, state):
    u0, _ = displaced_initial(sym, EPS, grid, 0.05)
    v0 = np.full(grid.n, sym.v_star)
    tr = simulate(u0, v0, sym.model, EPS, 1.0, grid, 300.0, dt=0.1, level=sym.h_zero,
                  frozen_v=True)
    slow = drift_rate(tr, 0.05, window=(50.0, 300.0))
    fast = abs(decay_rate_fit(relaxed, state.layer_x, window=(50.0, 300.0)).rate)
    assert fast / slow >= 1e3


def test_ignition_pins_near_layer(sym, grid, state, level):
    u0, v0 = ignition_initial(sym, EPS, grid, 0.1)
    assert grid.integrate(u0 + v0) == pytest.approx(0.35, abs=1e-13)
    tr = simulate(u0, v0, sym.model, EPS, 1.0, grid, 400.0, level=level)
    assert abs(tr.layer_x[-1] - state.layer_x) <= 0.02
    assert np.max(np.abs(tr.mass - 0.35)) <= 1e-11


def test_snapshots_and_fast_time(sym, grid, state, level):
    tr = simulate(state.u, state.v, sym.model, EPS, 1.0, grid, 1.0, dt=0.1,
                  snapshot_every=0.5, level=level)
    assert [round(s[0], 12) for s in tr.snapshots] == [0.0, 0.5, 1.0]
    assert tr.fast_times[-1] == pytest.approx(1.0 / EPS)
    assert tr.final[0] == pytest.approx(1.0)


def test_fit_failures():
    t = np.linspace(0, 10, 5)
    tr = SimulationTrace(times=t, mass=np.zeros(5), layer_x=0.5 + 0.1 * np.exp(-t), eps=0.1)
    with pytest.raises(FitFailed):
        decay_rate_fit(tr, 0.5)
    t = np.linspace(0, 10, 50)
    tr = SimulationTrace(times=t, mass=np.zeros(50), layer_x=0.5 + 0.1 * (1 + np.sin(t)) + 1e-3,
                         eps=0.1)
    with pytest.raises(FitFailed):
        decay_rate_fit(tr, 0.5)


def test_default_dt(sym):
    u = np.linspace(0, 1, 11)
    dt = default_dt(sym.model, u, np.zeros(11))
    assert 0 < dt <= 0.1


def test_stepper_rejects_bad_dt(sym, grid):
    with pytest.raises(ValueError):
        IMEXStepper(sym.model, EPS, 1.0, grid, 0.0)
