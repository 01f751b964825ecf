from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab import evolution as evo
from maxlab.errors import CFLError, RejectedInput
from maxlab.fields import FieldState, TorusGrid
from maxlab.presets import (
    charged_data,
    coefficient_preset,
    data_preset,
    random_data,
    standing_wave,
    wave_packet,
)


@pytest.mark.parametrize("dim,n", [(2, 32), (3, 12)])
def test_standing_wave_matches_exact_solution(dim, n):
    grid = TorusGrid.cube(dim, n)
    T = 0.5
    s0 = standing_wave(grid)
    cfg = evo.EvolutionConfig(T=T, cfl=0.05, integrator="rk4")
    res = evo.evolve(s0, None, cfg)
    exact = standing_wave(grid, t=T)
    err = np.max(np.abs(res.final.components - exact.components))
    assert err < 1e-6


def test_leapfrog_is_second_order_on_the_standing_wave():
    grid = TorusGrid.cube(2, 32)
    s0 = standing_wave(grid)
    exact = standing_wave(grid, t=1.0).components
    errs = []
    for dt in (0.02, 0.01):
        res = evo.evolve(s0, None, evo.EvolutionConfig(T=1.0, dt=dt))
        errs.append(np.max(np.abs(res.final.components - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("dim,n", [(2, 32), (3, 12)])
def test_linear_invariants_with_variable_coefficients(dim, n):
    grid = TorusGrid.cube(dim, n)
    coeffs = coefficient_preset("smooth", grid)
    s0 = random_data(grid, 0)
    cfg = evo.EvolutionConfig(T=0.5)
    res = evo.evolve(s0, coeffs, cfg)
    assert res.max_energy_drift() < 1e-12
    assert res.max_charge_drift() < 1e-12
    assert res.max_parity_defect() < 1e-13
    assert evo.time_reversal_error(s0, coeffs, cfg) < 1e-12


def test_unmodified_energy_oscillates_at_order_dt_squared():
    grid = TorusGrid.cube(2, 32)
    s0 = standing_wave(grid)
    drifts = [evo.evolve(s0, None, evo.EvolutionConfig(T=1.0, dt=dt)).max_energy_drift(modified=False)
              for dt in (0.02, 0.01)]
    assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.1)


def test_charged_data_keep_their_charge():
    grid = TorusGrid.cube(2, 32)
    s0 = charged_data(grid)
    ev = evo.Evolver(s0, None, evo.EvolutionConfig(T=0.5))
    rho0 = ev.charge().copy()
    assert np.max(np.abs(rho0)) > 0.1
    ev.run()
    assert np.max(np.abs(ev.charge() - rho0)) < 1e-12


def test_cfl_limits():
    with pytest.raises(CFLError):
        evo.EvolutionConfig(cfl=0.6)
    grid = TorusGrid.cube(2, 32)
    with pytest.raises(CFLError):
        evo.EvolutionConfig(dt=1.0).resolve(grid, 1.0)
    dt, steps = evo.EvolutionConfig(T=1.0, cfl=0.25).resolve(grid, 1.0)
    assert dt * steps == pytest.approx(1.0)
    assert dt <= 0.25 * grid.spacing[0]


def test_config_validation():
    with pytest.raises(RejectedInput):
        evo.EvolutionConfig(integrator="euler")
    with pytest.raises(RejectedInput):
        evo.EvolutionConfig(nonlinearity="saturable")
    with pytest.raises(RejectedInput):
        evo.EvolutionConfig(T=0.0)


def test_kerr_needs_two_dimensions():
    grid = TorusGrid.cube(3, 8)
    with pytest.raises(RejectedInput):
        evo.Evolver(random_data(grid, 0), None, evo.EvolutionConfig(nonlinearity="kerr2d"))


def test_smallness_budget():
    grid = TorusGrid.cube(2, 16)
    with pytest.raises(RejectedInput):
        evo.Evolver(random_data(grid, 0, 10.0), None, evo.EvolutionConfig(smallness=1.0))


@settings(max_examples=50, deadline=None)
@given(mag=st.floats(0.0, 1e3), angle=st.floats(0, 2 * math.pi))
def test_kerr_round_trip(mag, angle):
    E = np.array([mag * math.cos(angle), mag * math.sin(angle)])[:, None]
    back = evo.kerr_invert(evo.kerr_displacement(E))
    assert np.max(np.abs(back - E)) <= 1e-12 * max(1.0, mag)


def test_kerr_displacement_closed_form():
    E = np.array([[0.5], [0.0]])
    assert evo.kerr_displacement(E)[0, 0] == pytest.approx(0.5 * 1.25)
    eps1 = evo.effective_permittivity(E)
    assert eps1[0, 0, 0] == pytest.approx(1 + 0.25 + 0.5)
    assert eps1[1, 1, 0] == pytest.approx(1.25)


def test_kerr_run_conserves_charge_and_converges_at_second_order():
    grid = TorusGrid.cube(2, 32)
    s0 = data_preset("kerr-small", grid, 0, 0.05)
    cfg = evo.EvolutionConfig(T=0.5, nonlinearity="kerr2d")
    res = evo.evolve(s0, None, cfg)
    assert res.max_charge_drift() < 1e-12
    assert evo.convergence_ratio(s0, None, cfg)["ratio"] == pytest.approx(4.0, rel=0.15)


def test_forcing_must_respect_the_boundary():
    grid = TorusGrid.cube(2, 16)

    def bad(t):
        J = np.zeros((2,) + grid.shape)
        J[0] = 1.0
        return J

    ev = evo.Evolver(FieldState.zeros(grid), None, evo.EvolutionConfig(T=0.1, forcing=bad))
    with pytest.raises(RejectedInput):
        ev.step()


def test_forced_charge_balance():
    grid = TorusGrid.cube(2, 32)
    x, y = grid.full_mesh()
    profile = np.cos(x) * np.sin(y) ** 2

    def J(t):
        return np.stack([np.zeros(grid.shape), math.cos(t) * profile])

    ev = evo.Evolver(FieldState.zeros(grid), None, evo.EvolutionConfig(T=0.5, forcing=J))
    ev.run()
    # d_t rho = -div J, integrated with the midpoint values the leapfrog uses
    ts = (np.arange(ev.steps) + 0.5) * ev.dt
    expected = -ev.dt * sum(ev.ops.div(J(t)) for t in ts)
    assert np.max(np.abs(ev.charge() - expected)) < 1e-12


def test_plateau_cutoff_is_one_on_the_plateau():
    x = np.linspace(-3, 3, 601)
    phi = evo.plateau_cutoff(x, 1.0, 0.1)
    assert np.max(np.abs(phi[np.abs(x) <= 1.0] - 1)) < 1e-15
    assert np.max(phi[np.abs(x) >= 2.8]) < 1e-15


def test_cylindrical_lift_matches_the_planar_run():
    grid = TorusGrid.cube(2, 32)
    rep = evo.cylindrical_lift_and_compare(wave_packet(grid), evo.EvolutionConfig(T=0.5), None, n3=128, samples=4)
    assert rep.max_discrepancy <= 1e-6
    assert rep.plateau_derivative <= 1e-10
    assert len(rep.times) == len(rep.discrepancy) >= 4
