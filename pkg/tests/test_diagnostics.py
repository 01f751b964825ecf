from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab import diagnostics as diag
from maxlab import evolution as evo
from maxlab.errors import AdmissibilityError, CompatibilityError, RejectedInput
from maxlab.fields import CoefficientSet, FieldState, TorusGrid
from maxlab.presets import coefficient_preset, data_preset, random_data, standing_wave
from maxlab.spectral import spectral

INF = math.inf


@pytest.mark.parametrize("p,q,dim,gamma", [(INF, 2, 3, Fraction(0)), (4, 8, 3, Fraction(7, 8)),
                                           (8, 8, 2, Fraction(5, 8))])
def test_admissible_gamma_is_exact(p, q, dim, gamma):
    t = diag.admissible(p, q, dim)
    assert t.gamma == gamma
    assert isinstance(t.gamma, Fraction)
    assert t.delta == t.delta_max / 2


def test_admissibility_rejections():
    with pytest.raises(AdmissibilityError):
        diag.admissible(2, INF, 3)
    with pytest.raises(AdmissibilityError):
        diag.admissible(2, 2, 3)  # 3/2 + 1 > 1
    with pytest.raises(AdmissibilityError):
        diag.admissible(8, 8, 2, delta=0.5)
    with pytest.raises(AdmissibilityError):
        diag.admissible(4, 8, 4)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(2, 200), q=st.integers(2, 200))
def test_admissible_triples_satisfy_their_scaling_conditions(p, q):
    try:
        t = diag.admissible(p, q, 3)
    except AdmissibilityError:
        assert Fraction(3, p) + Fraction(2, q) > 1
        return
    assert Fraction(3, p) + Fraction(2, q) <= 1
    assert t.gamma == 3 * (Fraction(1, 2) - Fraction(1, q)) - Fraction(1, p)
    assert 0 < t.delta < Fraction(3, q)


def test_energy_of_flat_standing_wave():
    grid = TorusGrid.cube(2, 32)
    s = standing_wave(grid, amplitude=2.0)
    # E2 = 2 cos(x): int over the half torus of 4 cos^2 = 4 * pi * pi
    assert diag.energy_M(s) == pytest.approx(4 * np.pi**2, rel=1e-12)


def test_energy_matches_the_evolver():
    grid = TorusGrid.cube(3, 12)
    coeffs = coefficient_preset("smooth", grid)
    s = random_data(grid, 2)
    ev = evo.Evolver(s, coeffs, evo.EvolutionConfig())
    assert diag.energy_M(s, coeffs) == pytest.approx(ev.energy(), rel=1e-12)


def test_time_derivative_stencils_are_exact_on_quartics():
    t = np.linspace(0, 1, 21)
    dt = t[1] - t[0]
    f = 3 * t**4 - t**3 + 2 * t
    assert np.allclose(diag.time_derivative(f, dt, 1), (12 * t**3 - 3 * t**2 + 2)[2:-2], atol=1e-10)
    assert np.allclose(diag.time_derivative(f, dt, 2), (36 * t**2 - 6 * t)[2:-2], atol=1e-8)
    assert np.allclose(diag.time_derivative(f, dt, 3), (72 * t - 6)[3:-3], atol=1e-6)


def test_third_derivative_sign_on_sine():
    t = np.linspace(0, 1, 101)
    d3 = diag.time_derivative(np.sin(t), t[1] - t[0], 3)
    assert np.max(np.abs(d3 + np.cos(t)[3:-3])) < 1e-6


def test_bootstrap_needs_seven_snapshots():
    grid = TorusGrid.cube(2, 8)
    with pytest.raises(RejectedInput):
        diag.bootstrap_functionals([FieldState.zeros(grid, t) for t in range(6)])


def test_bootstrap_for_kerr_run(tmp_path):
    grid = TorusGrid.cube(2, 32)
    s0 = data_preset("kerr-small", grid, 0, 0.05)
    res = evo.evolve(s0, None, evo.EvolutionConfig(T=0.5, nonlinearity="kerr2d"), keep_every=1)
    boot = diag.bootstrap_functionals(res.history, kerr=True)
    assert np.all(boot.A2 >= boot.A1) and np.all(boot.A1 > 0)
    C = boot.gronwall_constant()
    assert math.isfinite(C) and C >= 0
    assert boot.to_csv(tmp_path / "b.csv").splitlines()[0] == "time,A1,A2,B,grad_inf"


def test_differentiated_residual_is_small_for_linear_runs():
    grid = TorusGrid.cube(2, 32)
    res = evo.evolve(standing_wave(grid), None, evo.EvolutionConfig(T=0.3, cfl=0.05, integrator="rk4"),
                     keep_every=1)
    assert diag.differentiated_residual(res.history) < 1e-4


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_torus_helmholtz_identity(seed):
    grid = TorusGrid.cube(3, 8)
    E = np.random.default_rng(seed).standard_normal((3,) + grid.shape)
    assert diag.helmholtz_ratio(E, 0.0, grid).identity_defect < 1e-10


def test_half_mode_rejects_fields_without_parity(grid3):
    E = np.ones((3,) + grid3.shape)
    with pytest.raises(CompatibilityError):
        diag.helmholtz_ratio(E, 0.0, grid3, mode="half")


def test_helmholtz_sweep_ratios_are_bounded():
    sw = diag.helmholtz_sweep(3, 8, 0.0, count=5, master_n=16)
    assert 1.0 <= sw.constant < 10.0
    assert len(sw.ratios) == 5


def test_resample_round_trip():
    grid = TorusGrid.cube(2, 16)
    f = diag.random_parity_field(grid, np.random.default_rng(0))[0]
    up = diag.resample(f, grid.n, (32, 32))
    assert np.max(np.abs(diag.resample(up, (32, 32), grid.n) - f)) < 1e-12


def test_band_data_lives_in_the_band():
    grid = TorusGrid.cube(3, 16)
    s = diag.band_data(grid, 4, np.random.default_rng(0))
    sp = spectral(grid)
    for c in s.components:
        F = sp.fft(c)
        assert np.max(np.abs(F[(sp.k_abs < 2) | (sp.k_abs > 8)])) < 1e-10 * np.max(np.abs(F))
    assert s.parity_defect() < 1e-14


def test_flat_propagator_agrees_with_time_stepping():
    grid = TorusGrid.cube(3, 12)
    s0 = random_data(grid, 4, kmax=3.0)
    res = evo.evolve(s0, None, evo.EvolutionConfig(T=0.4, cfl=0.05, integrator="rk4"))
    exact = diag.flat_propagator_3d(s0)(0.4)
    assert np.max(np.abs(res.final.components - exact)) < 1e-6


def test_strichartz_ratio_rejects_zero_data(grid3):
    t = diag.admissible(INF, 2, 3)
    with pytest.raises(RejectedInput):
        diag.strichartz_ratio([FieldState.zeros(grid3)], t, np.zeros(grid3.shape))


def test_strichartz_ratio_for_energy_norm_is_at_most_one():
    grid = TorusGrid.cube(3, 12)
    s = diag.band_data(grid, 2, np.random.default_rng(1))
    prop = diag.flat_propagator_3d(s)
    hist = [FieldState(grid, prop(t)[:3], prop(t)[3:], t) for t in np.linspace(0, 1, 5)]
    t = diag.admissible(INF, 2, 3)
    r = diag.strichartz_ratio(hist, t, spectral(grid).div(s.E))
    assert 0 < r <= 1.0 + 1e-12


def test_small_sweep_is_deterministic_and_ordered(tmp_path):
    members = diag.sweep_members(seeds=range(2), refinements=(2, 3), lams=(4, 8), T=0.25)
    rows = diag.run_sweep(members)
    again = diag.run_sweep(members, workers=2)
    assert diag.sweep_csv(rows) == diag.sweep_csv(again)
    assert [r.index for r in again] == list(range(len(members)))
    header = diag.sweep_csv(rows, tmp_path / "s.csv").splitlines()[0]
    assert header == "seed,dim,grid,lambda,p,q,gamma,delta,ratio"
    summary = diag.sweep_summary(rows)
    assert {(s.dim, s.p, s.q) for s in summary} == {(3, "inf", "2"), (3, "4", "8"), (2, "8", "8")}
    data = json.loads(diag.summary_json(summary, tmp_path / "s.json"))
    assert all(d["minimum"] <= d["median"] <= d["maximum"] for d in data)


def test_sweep_summary_flags_increasing_medians():
    t = diag.admissible(INF, 2, 3)
    rows = [diag.SweepRow(i, 3, 0, 10 * r, 4, r, INF, 2, t.gamma, t.delta, v)
            for i, (r, v) in enumerate([(2, 1.0), (3, 2.0)])]
    (s,) = diag.sweep_summary(rows)
    assert not s.monotone and s.violations[0]["from"] == 2
    assert s.spread == pytest.approx(2.0)


def test_sweep_coefficients_are_even():
    grid = TorusGrid.cube(2, 16, np.pi / 2)
    c = diag.sweep_coefficients_2d(grid)
    assert isinstance(c, CoefficientSet)
    assert c.evenness_defect() < 1e-14
